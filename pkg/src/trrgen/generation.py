"""Decoding a trained model into response text.

All strategies are deterministic: greedy argmax (ties broken by lowest token
id) or beam search over summed log-probabilities. There is no sampling path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import SOS_ID, EOS_ID, Vocabulary, EncodedRecord
from .model import ModelConfig, Parameters, EncoderOutput, encode_review, decoder_forward


@dataclass
class DecodeConfig:
    strategy: str = "greedy"
    beam_width: int = 4
    max_len: int | None = None  # None -> model max_tgt_len
    length_penalty: float = 0.0

    def __post_init__(self):
        if self.strategy not in ("greedy", "beam"):
            raise ValueError(f"unknown decode strategy {self.strategy!r}")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.max_len is not None and self.max_len < 1:
            raise ValueError("max_len must be >= 1")


def _log_softmax(row: np.ndarray) -> np.ndarray:
    m = row.max()
    return row - m - np.log(np.exp(row - m).sum())


def _step_logits(prefix, enc: EncoderOutput, params: Parameters, config: ModelConfig):
    logits = decoder_forward(prefix, enc, params, config, tape=None)
    return logits.values[-1]


def greedy_decode(params: Parameters, config: ModelConfig, enc: EncoderOutput,
                  decode: DecodeConfig) -> list[int]:
    """Append the argmax token until ⟨eos⟩ or max_len; ⟨sos⟩/⟨eos⟩ stripped."""
    max_len = decode.max_len if decode.max_len is not None else config.max_tgt_len - 1
    prefix = [SOS_ID]
    out = []
    for _ in range(max_len):
        nxt = int(np.argmax(_step_logits(prefix, enc, params, config)))
        if nxt == EOS_ID:
            break
        out.append(nxt)
        prefix.append(nxt)
    return out


def beam_decode(params: Parameters, config: ModelConfig, enc: EncoderOutput,
                decode: DecodeConfig) -> list[int]:
    """Beam search over summed token log-probabilities.

    Hypotheses that emit ⟨eos⟩ are retired; the best finished hypothesis (or,
    failing any, the best live one) wins. Width 1 reproduces greedy exactly.
    """
    max_len = decode.max_len if decode.max_len is not None else config.max_tgt_len - 1
    width = decode.beam_width
    live = [([SOS_ID], 0.0)]   # (prefix, summed logprob)
    finished: list[tuple[list[int], float]] = []

    for _ in range(max_len):
        candidates = []
        for prefix, score in live:
            logp = _log_softmax(_step_logits(prefix, enc, params, config))
            for tok in range(logp.shape[0]):
                candidates.append((prefix, score + logp[tok], tok))
        # stable preference: higher score first, then lower token id
        candidates.sort(key=lambda c: (-c[1], c[2]))
        live = []
        for prefix, score, tok in candidates[: width * 2]:
            if tok == EOS_ID:
                finished.append((prefix + [tok], score))
            else:
                live.append((prefix + [tok], score))
            if len(live) >= width:
                break
        if not live or len(finished) >= width:
            break

    def final_score(hyp):
        tokens, score = hyp
        length = max(len(tokens) - 1, 1)  # exclude ⟨sos⟩
        return score / (length ** decode.length_penalty)

    pool = finished if finished else live
    best = max(pool, key=final_score)
    tokens = best[0][1:]  # strip ⟨sos⟩
    if tokens and tokens[-1] == EOS_ID:
        tokens = tokens[:-1]
    return tokens


def hypothesis_score(tokens: list[int], enc: EncoderOutput, params: Parameters,
                     config: ModelConfig) -> float:
    """Summed log-probability the model assigns to `tokens` + ⟨eos⟩."""
    prefix = [SOS_ID]
    score = 0.0
    for tok in tokens + [EOS_ID]:
        logp = _log_softmax(_step_logits(prefix, enc, params, config))
        score += logp[tok]
        prefix.append(tok)
    return score


def generate(record: EncodedRecord, params: Parameters, config: ModelConfig,
             decode: DecodeConfig) -> list[int]:
    enc = encode_review(record, params, config, tape=None)
    if decode.strategy == "beam":
        return beam_decode(params, config, enc, decode)
    return greedy_decode(params, config, enc, decode)


def postprocess(token_ids: list[int], vocab: Vocabulary) -> str:
    """Detokenize with single spaces; placeholder tokens are emitted verbatim."""
    return " ".join(vocab.decode(token_ids))
