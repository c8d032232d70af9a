"""Weight surgery: add a low-rank delta into a checkpoint, weighted-average
checkpoints (the soup baseline), and measure the rank of checkpoint deltas."""

from __future__ import annotations

import numpy as np

from .checkpoint import Checkpoint
from .errors import MergeError, ShapeError
from .lora import LoraAdapter, materialize_delta


def merge_lora(ckpt: Checkpoint, adapter: LoraAdapter, scale: float = 1.0) -> Checkpoint:
    """out[name] = ckpt[name] + scale * (alpha/rank) * A @ B for each target;
    everything else is copied verbatim. `scale` is a user-facing strength
    multiplier on top of the adapter's own alpha/rank factor."""
    missing = [n for n in adapter.names() if n not in ckpt]
    if missing:
        raise MergeError(f"adapter targets missing from checkpoint: {missing}")
    for name in adapter.names():
        a, b = adapter.mats[name]
        target = ckpt.tensors[name]
        if target.shape != (a.shape[0], b.shape[1]):
            raise ShapeError(f"{name}: checkpoint shape {target.shape} vs "
                             f"delta shape {(a.shape[0], b.shape[1])}")
    out = ckpt.copy()
    for name in adapter.names():
        delta = materialize_delta(adapter, name)
        out.tensors[name].data += np.float32(scale) * delta
    return out


def soup(ckpts, weights) -> Checkpoint:
    """Elementwise weighted average; weights are normalized to sum to 1."""
    ckpts = list(ckpts)
    weights = [float(w) for w in weights]
    if len(ckpts) < 2 or len(weights) != len(ckpts):
        raise MergeError(f"soup needs >= 2 checkpoints with one weight each, "
                         f"got {len(ckpts)} and {len(weights)}")
    if any(w < 0 for w in weights) or sum(weights) <= 0:
        raise MergeError(f"soup weights must be non-negative with positive sum: {weights}")
    ref = ckpts[0]
    for i, c in enumerate(ckpts[1:], start=1):
        if set(c.tensors) != set(ref.tensors):
            diff = sorted(set(c.tensors) ^ set(ref.tensors))
            raise MergeError(f"checkpoint {i} tensor names differ, first mismatch: {diff[0]!r}")
        for name, rec in c.tensors.items():
            rref = ref.tensors[name]
            if rec.shape != rref.shape:
                raise ShapeError(f"{name}: shapes {rec.shape} and {rref.shape} differ")
            if rec.dtype != rref.dtype:
                raise MergeError(f"{name}: dtypes {rec.dtype} and {rref.dtype} differ")
    total = sum(weights)
    norm = [w / total for w in weights]
    out = ref.copy()
    for name in out.tensors:
        # accumulate in float64 so the single rounding happens at the end
        acc = np.zeros(out.tensors[name].shape, dtype=np.float64)
        for w, c in zip(norm, ckpts):
            if w == 0.0:
                continue
            acc += w * c.tensors[name].data.astype(np.float64)
        out.tensors[name].data[...] = acc.astype(np.float32)
    return out


def numerical_rank(delta: np.ndarray, rel_tol: float = 1e-6) -> int:
    """Count of singular values above rel_tol * sigma_max."""
    if not np.any(delta):
        return 0
    s = np.linalg.svd(delta.astype(np.float64), compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int((s > rel_tol * s[0]).sum())


def low_rank_report(ckpt_a: Checkpoint, ckpt_b: Checkpoint) -> dict:
    """Per-tensor numerical rank of (a - b) for every shared 2-d tensor."""
    report = {}
    for name in sorted(set(ckpt_a.tensors) & set(ckpt_b.tensors)):
        ra, rb = ckpt_a.tensors[name], ckpt_b.tensors[name]
        if ra.shape != rb.shape:
            raise ShapeError(f"{name}: shapes {ra.shape} and {rb.shape} differ")
        if len(ra.shape) != 2:
            continue
        report[name] = numerical_rank(ra.data - rb.data)
    return report


def parse_ratio(text: str):
    """"a:b" -> normalized (a/(a+b), b/(a+b)); style-trained model first."""
    parts = text.split(":")
    if len(parts) != 2:
        raise MergeError(f"ratio must look like 'a:b', got {text!r}")
    try:
        a, b = float(parts[0]), float(parts[1])
    except ValueError as e:
        raise MergeError(f"non-numeric ratio {text!r}") from e
    if a < 0 or b < 0 or a + b <= 0:
        raise MergeError(f"ratio parts must be non-negative with positive sum: {text!r}")
    return a / (a + b), b / (a + b)
