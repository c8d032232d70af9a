"""Low-rank adapters: construction, the materialized delta A@B, and
serialization in the checkpoint format."""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from .errors import CheckpointFormatError, RankError, TargetSpecError
from .numerics import Tensor

DEFAULT_TARGETS = ("layers.*.attn.q.weight", "layers.*.attn.v.weight")
ALL_PROJ_TARGETS = ("layers.*.attn.*.weight", "layers.*.ffn.*.weight")


@dataclass(frozen=True)
class TargetSpec:
    """Which 2-d weights to adapt. Patterns use shell-style wildcards against
    canonical tensor names. alpha defaults to the rank, i.e. scale 1."""
    patterns: tuple = DEFAULT_TARGETS
    rank: int = 8
    alpha: float | None = None

    def __post_init__(self):
        if self.rank < 1:
            raise RankError(f"rank must be >= 1, got {self.rank}")
        if self.alpha is not None and self.alpha <= 0:
            raise TargetSpecError("alpha must be positive")

    @property
    def effective_alpha(self) -> float:
        return float(self.rank if self.alpha is None else self.alpha)

    def match(self, names) -> list:
        hits = [n for n in sorted(names)
                if any(fnmatch.fnmatchcase(n, p) for p in self.patterns)]
        return hits


class LoraAdapter:
    """Per-target (A, B) pair with shared rank/alpha; delta = (alpha/rank) A B."""

    def __init__(self, mats: dict, rank: int, alpha: float, meta: dict | None = None):
        for name, (a, b) in mats.items():
            if a.shape[1] != rank or b.shape[0] != rank:
                raise RankError(f"{name}: A {tuple(a.shape)} / B {tuple(b.shape)} "
                                f"inconsistent with rank {rank}")
            if a.shape[0] < 1 or b.shape[1] < 1:
                raise TargetSpecError(f"{name}: degenerate target shape")
        self.mats = dict(mats)   # name -> (A: Tensor[d_out, r], B: Tensor[r, d_in])
        self.rank = rank
        self.alpha = float(alpha)
        self.meta = dict(meta or {})

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    def names(self):
        return sorted(self.mats)

    def copy(self) -> "LoraAdapter":
        mats = {n: (a.copy(), b.copy()) for n, (a, b) in self.mats.items()}
        return LoraAdapter(mats, self.rank, self.alpha, self.meta)


def init_adapter(spec: TargetSpec, target_shapes: dict, seed: int) -> LoraAdapter:
    """A is seeded Gaussian (std 0.02), B is zero, so the initial delta is 0."""
    names = spec.match(target_shapes)
    if not names:
        raise TargetSpecError(f"patterns {spec.patterns} match no weights")
    rng = np.random.default_rng(seed)
    mats = {}
    for name in names:
        shape = tuple(target_shapes[name])
        if len(shape) != 2:
            raise TargetSpecError(f"{name}: adapters require 2-d weights, got {shape}")
        d_out, d_in = shape
        if spec.rank > min(d_out, d_in):
            raise RankError(f"{name}: rank {spec.rank} exceeds min dim {min(d_out, d_in)}")
        a = Tensor.randn(d_out, spec.rank, std=0.02, rng=rng)
        b = Tensor.zeros(spec.rank, d_in)
        mats[name] = (a, b)
    return LoraAdapter(mats, spec.rank, spec.effective_alpha)


def materialize_delta(adapter: LoraAdapter, name: str) -> np.ndarray:
    """scale * A @ B for one target, in fp32."""
    if name not in adapter.mats:
        raise KeyError(f"adapter has no target {name!r}")
    a, b = adapter.mats[name]
    return np.float32(adapter.scale) * (a.data @ b.data)


def save_adapter(adapter: LoraAdapter, path,
                 base_model_fingerprint: str = "") -> None:
    ckpt = Checkpoint(metadata={
        "rank": str(adapter.rank),
        "alpha": repr(adapter.alpha),
        "base_model_fingerprint": base_model_fingerprint or
        adapter.meta.get("base_model_fingerprint", ""),
    })
    for name, (a, b) in adapter.mats.items():
        ckpt.set(f"{name}.lora_A", a.data)
        ckpt.set(f"{name}.lora_B", b.data)
    write_checkpoint(ckpt, path)


def load_adapter(path) -> LoraAdapter:
    ckpt = read_checkpoint(path)
    try:
        rank = int(ckpt.metadata["rank"])
        alpha = float(ckpt.metadata["alpha"])
    except (KeyError, ValueError) as e:
        raise CheckpointFormatError(f"adapter metadata missing or malformed: {e}") from e
    mats = {}
    names = set(ckpt.tensors)
    for tname in sorted(names):
        if tname.endswith(".lora_A"):
            base = tname[:-len(".lora_A")]
            other = f"{base}.lora_B"
            if other not in names:
                raise CheckpointFormatError(f"missing {other!r} for {tname!r}")
            a, b = Tensor(ckpt[tname]), Tensor(ckpt[other])
            if a.shape[1] != rank or b.shape[0] != rank:
                raise CheckpointFormatError(
                    f"{base}: tensor shapes {tuple(a.shape)}/{tuple(b.shape)} "
                    f"inconsistent with metadata rank {rank}")
            mats[base] = (a, b)
        elif tname.endswith(".lora_B"):
            base = tname[:-len(".lora_B")]
            if f"{base}.lora_A" not in names:
                raise CheckpointFormatError(f"missing {base + '.lora_A'!r} for {tname!r}")
        else:
            raise CheckpointFormatError(f"unexpected tensor {tname!r} in adapter file")
    meta = {"base_model_fingerprint": ckpt.metadata.get("base_model_fingerprint", "")}
    return LoraAdapter(mats, rank, alpha, meta)
