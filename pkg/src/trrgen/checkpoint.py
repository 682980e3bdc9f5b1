"""Binary checkpoint container.

Layout (little-endian): magic "TRRGEN1", uint32 format version, uint64 header
length, JSON header (run config, vocabulary tokens, training metadata, tensor
manifest), then one uint64-length-prefixed raw float64 block per tensor in
manifest order. The JSON header is serialized with sorted keys so identical
state produces byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .corpus import Vocabulary
from .model import ModelConfig, Parameters, init_parameters

MAGIC = b"TRRGEN1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: Parameters, config: ModelConfig,
                    vocab: Vocabulary, run_config: dict | None = None,
                    metadata: dict | None = None):
    named = list(params.named())
    header = {
        "model_config": {
            "vocab_size": config.vocab_size, "d_model": config.d_model,
            "n_heads": config.n_heads, "n_layers": config.n_layers,
            "d_ff": config.d_ff, "max_src_len": config.max_src_len,
            "max_tgt_len": config.max_tgt_len,
            "fusion_variant": config.fusion_variant,
            "dropout": config.dropout, "seed": config.seed,
        },
        "run_config": run_config or {},
        "vocabulary": vocab.id_to_token,
        "metadata": metadata or {},
        "tensors": [[name, list(t.values.shape)] for name, t in named],
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, t in named:
            raw = np.ascontiguousarray(t.values, dtype="<f8").tobytes()
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)


def load_checkpoint(path):
    """Returns (params, config, vocab, run_config, metadata); bitwise round trip."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))

        config = ModelConfig(**header["model_config"])
        vocab = Vocabulary(header["vocabulary"])
        params = init_parameters(config, seed=config.seed)
        named = list(params.named())
        manifest = header["tensors"]
        if [n for n, _ in named] != [n for n, _ in manifest]:
            raise CheckpointError(f"{path}: tensor manifest mismatch")
        for (name, t), (_, shape) in zip(named, manifest):
            (nbytes,) = struct.unpack("<Q", fh.read(8))
            raw = fh.read(nbytes)
            arr = np.frombuffer(raw, dtype="<f8").reshape(shape)
            if arr.shape != t.values.shape:
                raise CheckpointError(f"{path}: tensor {name} shape {arr.shape} "
                                      f"!= expected {t.values.shape}")
            t.values = arr.astype(np.float64)
    return params, config, vocab, header["run_config"], header["metadata"]
