"""Differentiable primitives over `Tensor`, recorded on an optional GradTape.

Every op computes the forward result in fp32 and, when a tape is supplied,
records a closure implementing the analytic chain rule. Closures accumulate
into every input; gradients for frozen tensors are simply never read.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError, ShapeError, VocabularyError
from . import backend
from .tensor import GradTape, Tensor, require_same_shape


def matmul(a: Tensor, b: Tensor, tape: GradTape | None = None) -> Tensor:
    """Matrix product; 2-d, or 3-d with equal leading (batch) dimension."""
    if a.ndim != b.ndim or a.ndim not in (2, 3):
        raise ShapeError(f"matmul: unsupported ndims {tuple(a.shape)} @ {tuple(b.shape)}")
    if a.shape[-1] != b.shape[-2] or (a.ndim == 3 and a.shape[0] != b.shape[0]):
        raise ShapeError(f"matmul: shapes {tuple(a.shape)} and {tuple(b.shape)} do not conform")
    out = Tensor(np.matmul(a.data, b.data))
    if tape is not None:
        def bwd(g):
            tape.accumulate(a, np.matmul(g, b.data.swapaxes(-1, -2)))
            tape.accumulate(b, np.matmul(a.data.swapaxes(-1, -2), g))
        tape.record(out, (a, b), bwd)
    return out


def add(a: Tensor, b: Tensor, tape: GradTape | None = None) -> Tensor:
    require_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    if tape is not None:
        def bwd(g):
            tape.accumulate(a, g)
            tape.accumulate(b, g)
        tape.record(out, (a, b), bwd)
    return out


def mul(a: Tensor, b: Tensor, tape: GradTape | None = None) -> Tensor:
    require_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)
    if tape is not None:
        def bwd(g):
            tape.accumulate(a, g * b.data)
            tape.accumulate(b, g * a.data)
        tape.record(out, (a, b), bwd)
    return out


def scale(a: Tensor, c: float, tape: GradTape | None = None) -> Tensor:
    c32 = np.float32(c)
    out = Tensor(a.data * c32)
    if tape is not None:
        def bwd(g):
            tape.accumulate(a, g * c32)
        tape.record(out, (a,), bwd)
    return out


def sum_all(a: Tensor, tape: GradTape | None = None) -> Tensor:
    out = Tensor(a.data.sum(dtype=np.float32))
    if tape is not None:
        def bwd(g):
            tape.accumulate(a, np.broadcast_to(g, a.shape))
        tape.record(out, (a,), bwd)
    return out


def reshape(a: Tensor, shape, tape: GradTape | None = None) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    if tape is not None:
        def bwd(g):
            tape.accumulate(a, g.reshape(a.shape))
        tape.record(out, (a,), bwd)
    return out


def transpose(a: Tensor, axes, tape: GradTape | None = None) -> Tensor:
    axes = tuple(axes)
    out = Tensor(np.ascontiguousarray(a.data.transpose(axes)))
    if tape is not None:
        inv = tuple(np.argsort(axes))
        def bwd(g):
            tape.accumulate(a, g.transpose(inv))
        tape.record(out, (a,), bwd)
    return out


def embedding(table: Tensor, ids: np.ndarray, tape: GradTape | None = None) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise VocabularyError(f"token id out of range [0, {table.shape[0]})")
    out = Tensor(table.data[ids])
    if tape is not None:
        def bwd(g):
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids, g)
            tape.accumulate(table, gt)
        tape.record(out, (table,), bwd)
    return out


def silu(a: Tensor, tape: GradTape | None = None) -> Tensor:
    sig = (np.float32(1.0) / (np.float32(1.0) + np.exp(-a.data))).astype(np.float32)
    out = Tensor(a.data * sig)
    if tape is not None:
        def bwd(g):
            tape.accumulate(a, g * sig * (np.float32(1.0) + a.data * (np.float32(1.0) - sig)))
        tape.record(out, (a,), bwd)
    return out


def rmsnorm(x: Tensor, weight: Tensor, eps: float = 1e-5,
            tape: GradTape | None = None) -> Tensor:
    """Row RMS normalization over the last axis, scaled by `weight`."""
    if weight.shape != (x.shape[-1],):
        raise ShapeError(f"rmsnorm: weight {tuple(weight.shape)} vs feature dim {x.shape[-1]}")
    n = x.shape[-1]
    inv = ((x.data.astype(np.float32) ** 2).mean(axis=-1, keepdims=True, dtype=np.float32)
           + np.float32(eps)) ** np.float32(-0.5)
    normed = x.data * inv
    out = Tensor(normed * weight.data)
    if tape is not None:
        def bwd(g):
            gw = (g * normed).reshape(-1, n).sum(axis=0, dtype=np.float32)
            gy = g * weight.data
            dot = (gy * x.data).sum(axis=-1, keepdims=True, dtype=np.float32)
            gx = inv * gy - (inv ** 3 / np.float32(n)) * x.data * dot
            tape.accumulate(x, gx.astype(np.float32))
            tape.accumulate(weight, gw)
        tape.record(out, (x, weight), bwd)
    return out


def softmax_rows(x: Tensor, tape: GradTape | None = None) -> Tensor:
    """Stable softmax over the last axis; each row sums to 1."""
    if np.isnan(x.data).any():
        raise NumericError("softmax_rows: NaN in input")
    p = backend.softmax_rows(x.data)
    out = Tensor(p)
    if tape is not None:
        def bwd(g):
            dot = (p * g).sum(axis=-1, keepdims=True, dtype=np.float32)
            tape.accumulate(x, p * (g - dot))
        tape.record(out, (x,), bwd)
    return out


def rotary(x: Tensor, cos: np.ndarray, sin: np.ndarray,
           tape: GradTape | None = None) -> Tensor:
    """Rotary position encoding over the last axis (half-split pairing).

    x: (..., t, d) with d even; cos/sin: (t, d/2).
    """
    d = x.shape[-1]
    h = d // 2
    x1, x2 = x.data[..., :h], x.data[..., h:]
    out_arr = np.concatenate([x1 * cos - x2 * sin, x1 * sin + x2 * cos], axis=-1)
    out = Tensor(out_arr)
    if tape is not None:
        def bwd(g):
            g1, g2 = g[..., :h], g[..., h:]
            gx = np.concatenate([g1 * cos + g2 * sin, -g1 * sin + g2 * cos], axis=-1)
            tape.accumulate(x, gx.astype(np.float32))
        tape.record(out, (x,), bwd)
    return out


def cross_entropy_next_token(logits: Tensor, targets: np.ndarray,
                             tape: GradTape | None = None) -> Tensor:
    """Mean over positions of -log softmax(logits)[i, targets[i]]."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {tuple(logits.shape)} vs targets {targets.shape}")
    v = logits.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise VocabularyError(f"target id out of range [0, {v})")
    loss, dlogits = backend.softmax_xent(logits.data, targets)
    out = Tensor(np.float32(loss))
    if tape is not None:
        def bwd(g):
            tape.accumulate(logits, dlogits * g)
        tape.record(out, (logits,), bwd)
    return out
