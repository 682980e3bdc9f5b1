"""Feature-fused Transformer encoder-decoder.

The encoder input can fuse two review-level features into the token
embeddings: the rating (added as a vector to every token) and the app
category (prepended as an extra position or summed in), selected by
`fusion_variant`. Sublayers use post-norm ordering: LayerNorm(x + f(x)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import (Tensor, Tape, matmul, add, scale, relu, softmax, layer_norm,
                     concat_rows, concat_cols, embedding_lookup, dropout,
                     cross_entropy_logits)
from .corpus import EncodedRecord, PAD_ID

FUSION_VARIANTS = ("vanilla", "rating_only", "category_only",
                   "trrgen_concat", "trrgen_sum", "trrgen_order")

NEG_INF = -np.inf


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 256
    n_heads: int = 4
    n_layers: int = 1
    d_ff: int = 1024
    max_src_len: int = 102
    max_tgt_len: int = 120
    fusion_variant: str = "trrgen_concat"
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.d_model % 2 != 0:
            raise ConfigError("d_model must be even for sinusoidal positions")
        if self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must be divisible by n_heads")
        if self.n_layers < 1:
            raise ConfigError("n_layers must be >= 1")
        if self.max_src_len < 2 or self.max_tgt_len < 2:
            raise ConfigError("max sequence lengths must be >= 2")
        if self.fusion_variant not in FUSION_VARIANTS:
            raise ConfigError(f"unknown fusion_variant {self.fusion_variant!r}")

    @property
    def d_k(self):
        return self.d_model // self.n_heads


@dataclass
class AttentionParams:
    wq: list[Tensor]  # per head, d_model x d_k
    wk: list[Tensor]
    wv: list[Tensor]
    wo: Tensor        # d_model x d_model


@dataclass
class FeedForwardParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class NormParams:
    gamma: Tensor
    beta: Tensor


@dataclass
class EncoderLayerParams:
    self_attn: AttentionParams
    norm1: NormParams
    ffn: FeedForwardParams
    norm2: NormParams


@dataclass
class DecoderLayerParams:
    self_attn: AttentionParams
    norm1: NormParams
    cross_attn: AttentionParams
    norm2: NormParams
    ffn: FeedForwardParams
    norm3: NormParams


@dataclass
class Parameters:
    embedding: Tensor   # vocab x d_model; rows for rating/category escape tokens too
    encoder: list[EncoderLayerParams]
    decoder: list[DecoderLayerParams]
    out_proj: Tensor    # d_model x vocab
    out_bias: Tensor

    def named(self):
        """Deterministic (name, tensor) walk, used by the optimizer and checkpoints."""
        yield "embedding", self.embedding

        def attn(prefix, a):
            for h, t in enumerate(a.wq):
                yield f"{prefix}.wq{h}", t
            for h, t in enumerate(a.wk):
                yield f"{prefix}.wk{h}", t
            for h, t in enumerate(a.wv):
                yield f"{prefix}.wv{h}", t
            yield f"{prefix}.wo", a.wo

        for i, layer in enumerate(self.encoder):
            yield from attn(f"enc{i}.self", layer.self_attn)
            yield f"enc{i}.norm1.gamma", layer.norm1.gamma
            yield f"enc{i}.norm1.beta", layer.norm1.beta
            yield f"enc{i}.ffn.w1", layer.ffn.w1
            yield f"enc{i}.ffn.b1", layer.ffn.b1
            yield f"enc{i}.ffn.w2", layer.ffn.w2
            yield f"enc{i}.ffn.b2", layer.ffn.b2
            yield f"enc{i}.norm2.gamma", layer.norm2.gamma
            yield f"enc{i}.norm2.beta", layer.norm2.beta
        for i, layer in enumerate(self.decoder):
            yield from attn(f"dec{i}.self", layer.self_attn)
            yield f"dec{i}.norm1.gamma", layer.norm1.gamma
            yield f"dec{i}.norm1.beta", layer.norm1.beta
            yield from attn(f"dec{i}.cross", layer.cross_attn)
            yield f"dec{i}.norm2.gamma", layer.norm2.gamma
            yield f"dec{i}.norm2.beta", layer.norm2.beta
            yield f"dec{i}.ffn.w1", layer.ffn.w1
            yield f"dec{i}.ffn.b1", layer.ffn.b1
            yield f"dec{i}.ffn.w2", layer.ffn.w2
            yield f"dec{i}.ffn.b2", layer.ffn.b2
            yield f"dec{i}.norm3.gamma", layer.norm3.gamma
            yield f"dec{i}.norm3.beta", layer.norm3.beta
        yield "out_proj", self.out_proj
        yield "out_bias", self.out_bias

    def all_tensors(self) -> list[Tensor]:
        return [t for _, t in self.named()]


@dataclass
class EncoderOutput:
    states: Tensor          # fused-length x d_model
    src_mask: np.ndarray    # additive row mask over key positions (0 or -inf)


# ---------------------------------------------------------------------------
# initialization


def _xavier(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)))


def init_parameters(config: ModelConfig, seed: int | None = None) -> Parameters:
    """Xavier-uniform weights, unit gammas, zero betas and biases; seed-determined."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    d, dk, dff, v = config.d_model, config.d_k, config.d_ff, config.vocab_size

    def attn():
        return AttentionParams(
            wq=[_xavier(rng, d, dk) for _ in range(config.n_heads)],
            wk=[_xavier(rng, d, dk) for _ in range(config.n_heads)],
            wv=[_xavier(rng, d, dk) for _ in range(config.n_heads)],
            wo=_xavier(rng, d, d))

    def ffn():
        return FeedForwardParams(w1=_xavier(rng, d, dff), b1=Tensor(np.zeros(dff)),
                                 w2=_xavier(rng, dff, d), b2=Tensor(np.zeros(d)))

    def norm():
        return NormParams(gamma=Tensor(np.ones(d)), beta=Tensor(np.zeros(d)))

    return Parameters(
        embedding=_xavier(rng, v, d),
        encoder=[EncoderLayerParams(attn(), norm(), ffn(), norm())
                 for _ in range(config.n_layers)],
        decoder=[DecoderLayerParams(attn(), norm(), attn(), norm(), ffn(), norm())
                 for _ in range(config.n_layers)],
        out_proj=_xavier(rng, d, v),
        out_bias=Tensor(np.zeros(v)))


# ---------------------------------------------------------------------------
# building blocks


def positional_encoding(seq_len: int, d_model: int) -> np.ndarray:
    """Sinusoidal positions: PE[pos, 2i] = sin(pos / 10000^(2i/d)),
    PE[pos, 2i+1] = cos(pos / 10000^(2i/d))."""
    if seq_len < 1:
        raise ConfigError("seq_len must be >= 1")
    if d_model % 2 != 0:
        raise ConfigError("d_model must be even")
    pos = np.arange(seq_len, dtype=np.float64)[:, None]
    two_i = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, two_i / d_model)
    pe = np.empty((seq_len, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def causal_mask(n: int) -> np.ndarray:
    mask = np.zeros((n, n))
    mask[np.triu_indices(n, k=1)] = NEG_INF
    return mask


def padding_mask(n_queries: int, key_ids) -> np.ndarray:
    key_ids = np.asarray(key_ids)
    mask = np.zeros((n_queries, key_ids.shape[0]))
    mask[:, key_ids == PAD_ID] = NEG_INF
    return mask


def multi_head_attention(x_q: Tensor, x_kv: Tensor, mask: np.ndarray,
                         p: AttentionParams, tape: Tape | None,
                         d_k: int, return_weights: bool = False):
    """softmax(Q Wq (K Wk)^T / sqrt(d_k) + mask) V Wv per head, concat, project."""
    if mask.shape != (x_q.values.shape[0], x_kv.values.shape[0]):
        raise ConfigError(f"mask shape {mask.shape} does not match "
                          f"{(x_q.values.shape[0], x_kv.values.shape[0])}")
    mask_t = Tensor(mask)
    inv_sqrt = 1.0 / np.sqrt(d_k)
    heads = []
    weights = []
    for wq, wk, wv in zip(p.wq, p.wk, p.wv):
        q = matmul(x_q, wq, tape)
        k = matmul(x_kv, wk, tape)
        v = matmul(x_kv, wv, tape)
        scores = add(scale(_matmul_bt(q, k, tape), inv_sqrt, tape), mask_t, tape)
        attn = softmax(scores, tape, axis=-1)
        weights.append(attn.values)
        heads.append(matmul(attn, v, tape))
    z = matmul(concat_cols(heads, tape), p.wo, tape)
    if return_weights:
        return z, weights
    return z


def _matmul_bt(a: Tensor, b: Tensor, tape: Tape | None) -> Tensor:
    """a @ b.T with gradients to both operands."""
    from .tensor import _accum
    out = Tensor(a.values @ b.values.T)
    if tape is not None:
        def bwd():
            if out.grad is None:
                return
            _accum(a, out.grad @ b.values)
            _accum(b, out.grad.T @ a.values)
        tape.record(bwd)
    return out


def feed_forward(x: Tensor, p: FeedForwardParams, tape: Tape | None) -> Tensor:
    h = relu(add(matmul(x, p.w1, tape), p.b1, tape), tape)
    return add(matmul(h, p.w2, tape), p.b2, tape)


def sublayer_connect(x: Tensor, fx: Tensor, norm: NormParams, tape: Tape | None) -> Tensor:
    return layer_norm(add(x, fx, tape), norm.gamma, norm.beta, tape)


# ---------------------------------------------------------------------------
# embedding fusion


def embed_review(src_ids, rating_id: int, category_id: int, variant: str,
                 params: Parameters, tape: Tape | None = None) -> Tensor:
    """Build the encoder input sequence for the chosen fusion variant.

    With w_i the token embedding, r/c the rating/category embedding rows and
    p_i the positional row for index i within the review tokens:

      vanilla        x_i = w_i + p_i            X = [x_1..x_n]
      rating_only    x_i = w_i + r + p_i        X = [x_1..x_n]
      category_only  x_i = w_i + p_i            X = [c, x_1..x_n]
      trrgen_concat  x_i = w_i + r + p_i        X = [c, x_1..x_n]
      trrgen_sum     x_i = w_i + r + c + p_i    X = [x_1..x_n]
      trrgen_order   x_i = w_i + p_i            X = [c, r, x_1..x_n]

    Prepended feature slots carry no positional or rating term.
    """
    if variant not in FUSION_VARIANTS:
        raise ConfigError(f"unknown fusion_variant {variant!r}")
    n = len(src_ids)
    d = params.embedding.values.shape[1]
    x = embedding_lookup(params.embedding, src_ids, tape)
    if variant in ("rating_only", "trrgen_concat", "trrgen_sum"):
        r = embedding_lookup(params.embedding, [rating_id], tape)
        x = add(x, r, tape)
    if variant == "trrgen_sum":
        c = embedding_lookup(params.embedding, [category_id], tape)
        x = add(x, c, tape)
    x = add(x, Tensor(positional_encoding(n, d)), tape)

    if variant in ("category_only", "trrgen_concat"):
        c = embedding_lookup(params.embedding, [category_id], tape)
        return concat_rows([c, x], tape)
    if variant == "trrgen_order":
        c = embedding_lookup(params.embedding, [category_id], tape)
        r = embedding_lookup(params.embedding, [rating_id], tape)
        return concat_rows([c, r, x], tape)
    return x


# ---------------------------------------------------------------------------
# encoder / decoder


def encode(x: Tensor, src_mask: np.ndarray, params: Parameters, config: ModelConfig,
           tape: Tape | None = None, training: bool = False,
           rng: np.random.Generator | None = None) -> EncoderOutput:
    n = x.values.shape[0]
    mask = np.broadcast_to(src_mask, (n, src_mask.shape[-1])).copy()
    h = dropout(x, config.dropout, training, tape, rng)
    for layer in params.encoder:
        z = multi_head_attention(h, h, mask, layer.self_attn, tape, config.d_k)
        z = dropout(z, config.dropout, training, tape, rng)
        h = sublayer_connect(h, z, layer.norm1, tape)
        f = dropout(feed_forward(h, layer.ffn, tape), config.dropout, training, tape, rng)
        h = sublayer_connect(h, f, layer.norm2, tape)
    return EncoderOutput(states=h, src_mask=src_mask)


def decoder_forward(tgt_input_ids, enc: EncoderOutput, params: Parameters,
                    config: ModelConfig, tape: Tape | None = None,
                    training: bool = False,
                    rng: np.random.Generator | None = None) -> Tensor:
    """Logits [T x V] from the ⟨sos⟩-shifted target; causally masked self-attention."""
    t = len(tgt_input_ids)
    if t > config.max_tgt_len:
        raise ConfigError(f"target length {t} exceeds max_tgt_len {config.max_tgt_len}")
    d = config.d_model
    h = add(embedding_lookup(params.embedding, tgt_input_ids, tape),
            Tensor(positional_encoding(t, d)), tape)
    h = dropout(h, config.dropout, training, tape, rng)
    self_mask = causal_mask(t)
    cross_mask = np.broadcast_to(enc.src_mask, (t, enc.src_mask.shape[-1])).copy()
    for layer in params.decoder:
        z = multi_head_attention(h, h, self_mask, layer.self_attn, tape, config.d_k)
        z = dropout(z, config.dropout, training, tape, rng)
        h = sublayer_connect(h, z, layer.norm1, tape)
        z = multi_head_attention(h, enc.states, cross_mask, layer.cross_attn, tape, config.d_k)
        z = dropout(z, config.dropout, training, tape, rng)
        h = sublayer_connect(h, z, layer.norm2, tape)
        f = dropout(feed_forward(h, layer.ffn, tape), config.dropout, training, tape, rng)
        h = sublayer_connect(h, f, layer.norm3, tape)
    return add(matmul(h, params.out_proj, tape), params.out_bias, tape)


def encode_review(rec: EncodedRecord, params: Parameters, config: ModelConfig,
                  tape: Tape | None = None, training: bool = False,
                  rng: np.random.Generator | None = None) -> EncoderOutput:
    """embed_review + encode for one encoded record (no padding within one example)."""
    x = embed_review(rec.src_ids, rec.rating_id, rec.category_id,
                     config.fusion_variant, params, tape)
    src_mask = np.zeros(x.values.shape[0])
    return encode(x, src_mask, params, config, tape, training, rng)


def forward_training(batch: list[EncodedRecord], params: Parameters,
                     config: ModelConfig, tape: Tape | None = None,
                     rng: np.random.Generator | None = None):
    """Teacher-forced loss over a batch: mean NLL over all target positions.

    Returns (loss, logits_list). Examples are processed individually, so no
    padding positions enter the loss.
    """
    if not batch:
        raise ValueError("empty batch")
    training = rng is not None
    total = None
    count = 0
    logits_list = []
    for rec in batch:
        enc = encode_review(rec, params, config, tape, training, rng)
        logits = decoder_forward(rec.tgt_ids[:-1], enc, params, config, tape, training, rng)
        logits_list.append(logits)
        ce = cross_entropy_logits(logits, rec.tgt_ids[1:], ignore_id=PAD_ID,
                                  tape=tape, reduction="sum")
        total = ce if total is None else add(total, ce, tape)
        count += sum(1 for t in rec.tgt_ids[1:] if t != PAD_ID)
    loss = scale(total, 1.0 / count, tape)
    if not np.isfinite(loss.values):
        raise FloatingPointError("non-finite training loss")
    return loss, logits_list
