"""Feature-fused transformer for app-review response generation.

Subpackages:
  corpus      ingestion, normalization, vocabulary, ad-sentence filtering
  tensor      dense tensors with tape-based reverse-mode autodiff
  optim       Adam
  model       the fused encoder-decoder transformer
  generation  greedy / beam decoding
  evaluation  corpus BLEU-4 and the random-selection baseline
  training    mini-batch teacher-forced training loop
  checkpoint  binary checkpoint container
  cli         command-line pipeline
"""

from .corpus import (ReviewRecord, PreprocessConfig, Vocabulary, load_corpus,
                     normalize_text, tokenize, build_vocabulary, encode_record,
                     split_corpus)
from .model import ModelConfig, Parameters, init_parameters, embed_review
from .generation import DecodeConfig, generate, postprocess
from .evaluation import BleuReport, corpus_bleu
from .training import TrainOptions, train_model
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "ReviewRecord", "PreprocessConfig", "Vocabulary", "load_corpus",
    "normalize_text", "tokenize", "build_vocabulary", "encode_record",
    "split_corpus", "ModelConfig", "Parameters", "init_parameters",
    "embed_review", "DecodeConfig", "generate", "postprocess", "BleuReport",
    "corpus_bleu", "TrainOptions", "train_model", "save_checkpoint",
    "load_checkpoint",
]

__version__ = "0.1.0"
