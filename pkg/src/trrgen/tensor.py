"""Dense tensors with reverse-mode automatic differentiation.

A `Tape` records every primitive applied to tensors during a forward pass.
Calling `backward` replays the recorded entries in reverse order, accumulating
gradients into each tensor's `.grad` array. Passing `tape=None` to any
primitive runs it in inference mode (no recording, no gradients).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "matmul",
    "add",
    "scale",
    "relu",
    "softmax",
    "layer_norm",
    "concat_rows",
    "concat_cols",
    "embedding_lookup",
    "dropout",
    "cross_entropy_logits",
    "sum_all",
    "backward",
    "grad_check",
]


class Tensor:
    """Dense row-major array plus an optional gradient of the same shape."""

    __slots__ = ("values", "grad")

    def __init__(self, values, dtype=np.float64):
        self.values = np.asarray(values, dtype=dtype)
        self.grad = None

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad = None

    def assert_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("tensor contains NaN or Inf")

    def __repr__(self):
        return f"Tensor(shape={self.values.shape})"


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


class Tape:
    """Ordered record of primitive applications for one forward pass.

    Single-owner: build the tape, run `backward` once, read grads. Entries are
    appended in execution order, which is automatically topological.
    """

    def __init__(self):
        self._entries = []

    def record(self, backward_fn):
        self._entries.append(backward_fn)

    def __len__(self):
        return len(self._entries)

    def backward(self, loss: Tensor):
        if loss.values.ndim != 0:
            raise ValueError(f"backward requires a scalar loss, got shape {loss.values.shape}")
        loss.grad = np.ones_like(loss.values)
        for fn in reversed(self._entries):
            fn()


def backward(tape: Tape, loss: Tensor):
    """Populate `.grad` on every tensor reachable from `loss` through `tape`."""
    tape.backward(loss)


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.values.shape[-1] != b.values.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.values.shape} x {b.values.shape}")
    out = Tensor(a.values @ b.values)

    if tape is not None:
        def bwd():
            if out.grad is None:
                return
            _accum(a, out.grad @ b.values.T)
            _accum(b, a.values.T @ out.grad)
        tape.record(bwd)
    return out


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Element-wise sum; `b` may be a single row broadcast over the rows of `a`."""
    av, bv = a.values, b.values
    row_broadcast = av.shape != bv.shape
    if row_broadcast:
        if not (av.ndim == 2 and bv.ndim in (1, 2) and bv.reshape(-1).shape[0] == av.shape[1]):
            raise ValueError(f"add shape mismatch: {av.shape} + {bv.shape}")
    out = Tensor(av + bv.reshape(1, -1) if row_broadcast else av + bv)

    if tape is not None:
        def bwd():
            if out.grad is None:
                return
            _accum(a, out.grad)
            if row_broadcast:
                _accum(b, out.grad.sum(axis=0).reshape(bv.shape))
            else:
                _accum(b, out.grad)
        tape.record(bwd)
    return out


def scale(a: Tensor, s: float, tape: Tape | None = None) -> Tensor:
    out = Tensor(a.values * s)
    if tape is not None:
        def bwd():
            if out.grad is None:
                return
            _accum(a, out.grad * s)
        tape.record(bwd)
    return out


def relu(a: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.maximum(a.values, 0.0))
    if tape is not None:
        mask = a.values > 0
        def bwd():
            if out.grad is None:
                return
            _accum(a, out.grad * mask)
        tape.record(bwd)
    return out


def softmax(a: Tensor, tape: Tape | None = None, axis: int = -1) -> Tensor:
    """Exp-normalize along `axis` with max-subtraction for stability.

    Entries equal to -inf receive weight exactly 0, so masked positions
    contribute nothing downstream (bitwise).
    """
    x = a.values
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    if tape is not None:
        def bwd():
            if out.grad is None:
                return
            g = out.grad
            _accum(a, (g - (g * y).sum(axis=axis, keepdims=True)) * y)
        tape.record(bwd)
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               tape: Tape | None = None, eps: float = 1e-5) -> Tensor:
    """Normalize each row over the feature (last) axis, then scale and shift."""
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    n = x.values.shape[-1]
    if gamma.values.shape[-1] != n or beta.values.shape[-1] != n:
        raise ValueError("layer_norm gamma/beta length must equal feature dimension")
    mu = x.values.mean(axis=-1, keepdims=True)
    var = x.values.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.values - mu) * inv
    out = Tensor(xhat * gamma.values + beta.values)

    if tape is not None:
        def bwd():
            if out.grad is None:
                return
            g = out.grad
            _accum(gamma, (g * xhat).sum(axis=tuple(range(g.ndim - 1))))
            _accum(beta, g.sum(axis=tuple(range(g.ndim - 1))))
            gx = g * gamma.values
            _accum(x, (gx - gx.mean(axis=-1, keepdims=True)
                       - xhat * (gx * xhat).mean(axis=-1, keepdims=True)) * inv)
        tape.record(bwd)
    return out


def concat_rows(parts: list[Tensor], tape: Tape | None = None) -> Tensor:
    """Stack 2-D tensors of equal width along the row axis."""
    if not parts:
        raise ValueError("concat_rows of empty list")
    out = Tensor(np.concatenate([p.values for p in parts], axis=0))

    if tape is not None:
        sizes = [p.values.shape[0] for p in parts]
        def bwd():
            if out.grad is None:
                return
            offset = 0
            for p, sz in zip(parts, sizes):
                _accum(p, out.grad[offset:offset + sz])
                offset += sz
        tape.record(bwd)
    return out


def concat_cols(parts: list[Tensor], tape: Tape | None = None) -> Tensor:
    """Stack 2-D tensors of equal height along the column axis."""
    if not parts:
        raise ValueError("concat_cols of empty list")
    out = Tensor(np.concatenate([p.values for p in parts], axis=1))

    if tape is not None:
        sizes = [p.values.shape[1] for p in parts]
        def bwd():
            if out.grad is None:
                return
            offset = 0
            for p, sz in zip(parts, sizes):
                _accum(p, out.grad[:, offset:offset + sz])
                offset += sz
        tape.record(bwd)
    return out


def embedding_lookup(table: Tensor, ids, tape: Tape | None = None) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.values.shape[0]):
        raise IndexError(f"embedding id out of range [0, {table.values.shape[0]})")
    out = Tensor(table.values[ids])

    if tape is not None:
        def bwd():
            if out.grad is None:
                return
            if table.grad is None:
                table.grad = np.zeros_like(table.values)
            np.add.at(table.grad, ids, out.grad)
        tape.record(bwd)
    return out


def dropout(x: Tensor, p: float, training: bool,
            tape: Tape | None = None, rng: np.random.Generator | None = None) -> Tensor:
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode requires an rng")
    keep = (rng.random(x.values.shape) >= p) / (1.0 - p)
    out = Tensor(x.values * keep)

    if tape is not None:
        def bwd():
            if out.grad is None:
                return
            _accum(x, out.grad * keep)
        tape.record(bwd)
    return out


def sum_all(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(x.values.sum())
    if tape is not None:
        def bwd():
            if out.grad is None:
                return
            _accum(x, np.full_like(x.values, out.grad))
        tape.record(bwd)
    return out


def cross_entropy_logits(logits: Tensor, targets, ignore_id: int = -1,
                         tape: Tape | None = None, reduction: str = "mean") -> Tensor:
    """Negative log-softmax probability of `targets`, averaged (or summed)
    over positions whose target is not `ignore_id`. Stable via log-sum-exp.
    """
    targets = np.asarray(targets, dtype=np.int64)
    t_count, v = logits.values.shape
    if targets.shape != (t_count,):
        raise ValueError(f"targets length {targets.shape} does not match logits rows {t_count}")
    counted = targets != ignore_id
    n = int(counted.sum())
    if n == 0:
        raise ValueError("cross_entropy_logits: every position is ignored")

    x = logits.values
    m = x.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(x - m).sum(axis=1))
    safe_targets = np.where(counted, targets, 0)
    nll = lse - x[np.arange(t_count), safe_targets]
    total = float((nll * counted).sum())
    denom = n if reduction == "mean" else 1
    out = Tensor(total / denom)

    if tape is not None:
        def bwd():
            if out.grad is None:
                return
            probs = np.exp(x - m)
            probs /= probs.sum(axis=1, keepdims=True)
            probs[np.arange(t_count), safe_targets] -= 1.0
            probs[~counted] = 0.0
            _accum(logits, probs * (float(out.grad) / denom))
        tape.record(bwd)
    return out


# ---------------------------------------------------------------------------
# finite-difference gradient checking


def grad_check(build, params: list[Tensor], eps: float = 1e-5) -> float:
    """Compare analytic gradients of `build` against central differences.

    `build` takes no arguments, constructs a fresh tape over the current
    parameter values and returns (loss, tape). Returns the max over all
    parameter coordinates of |analytic - numeric| / max(|a|, |n|, 1e-8).
    """
    for p in params:
        p.zero_grad()
    loss, tape = build()
    tape.backward(loss)
    analytic = [np.zeros_like(p.values) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.values.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + eps
            up, _ = build()
            flat[i] = orig - eps
            down, _ = build()
            flat[i] = orig
            numeric = (float(up.values) - float(down.values)) / (2.0 * eps)
            err = abs(a_flat[i] - numeric) / max(abs(a_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
