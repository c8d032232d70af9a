"""Decoder-only transformer: pre-norm RMSNorm, rotary attention, gated FFN,
tied embedding/output head. Serves as both the "base" and "instruct"
checkpoint at desk scale."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nm
from .corpus import EOS, VOCAB_SIZE
from .errors import ConfigError, ContextLengthError, TargetSpecError
from .numerics import GradTape, Tensor

ATTN_PROJS = ("q", "k", "v", "o")
FFN_PROJS = ("up", "gate", "down")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = VOCAB_SIZE
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    d_ff: int = 512
    ctx_len: int = 256
    norm_eps: float = 1e-5

    def __post_init__(self):
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "ctx_len"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @staticmethod
    def from_json(s: str) -> "ModelConfig":
        return ModelConfig(**json.loads(s))


def weight_shapes(config: ModelConfig) -> dict:
    """Canonical tensor names and their shapes, as stored in checkpoints."""
    d, ff = config.d_model, config.d_ff
    shapes = {"tok_embed.weight": (config.vocab_size, d),
              "final_norm.weight": (d,)}
    for i in range(config.n_layers):
        for p in ATTN_PROJS:
            shapes[f"layers.{i}.attn.{p}.weight"] = (d, d)
        shapes[f"layers.{i}.ffn.up.weight"] = (ff, d)
        shapes[f"layers.{i}.ffn.gate.weight"] = (ff, d)
        shapes[f"layers.{i}.ffn.down.weight"] = (d, ff)
        shapes[f"layers.{i}.attn_norm.weight"] = (d,)
        shapes[f"layers.{i}.ffn_norm.weight"] = (d,)
    return shapes


class TransformerWeights:
    """Named-tensor map; shapes fully determined by the config."""

    def __init__(self, config: ModelConfig, tensors: dict):
        expected = weight_shapes(config)
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        if missing or extra:
            raise ConfigError(f"weight names mismatch: missing={missing} extra={extra}")
        for name, t in tensors.items():
            if tuple(t.shape) != expected[name]:
                raise ConfigError(
                    f"{name}: shape {tuple(t.shape)}, expected {expected[name]}")
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]


def init_weights(config: ModelConfig, seed: int) -> TransformerWeights:
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in weight_shapes(config).items():
        if name.endswith("norm.weight"):
            tensors[name] = Tensor(np.ones(shape, dtype=np.float32))
        else:
            tensors[name] = Tensor.randn(*shape, std=0.02, rng=rng)
    return TransformerWeights(config, tensors)


def _rope_tables(config: ModelConfig, t: int):
    half = config.head_dim // 2
    inv_freq = (10000.0 ** (-np.arange(half, dtype=np.float64) / half))
    angles = np.arange(t, dtype=np.float64)[:, None] * inv_freq[None, :]
    return np.cos(angles).astype(np.float32), np.sin(angles).astype(np.float32)


def _causal_mask(n_heads: int, t: int) -> Tensor:
    m = np.triu(np.full((t, t), -1e9, dtype=np.float32), k=1)
    return Tensor(np.broadcast_to(m, (n_heads, t, t)).copy())


def _project(x: Tensor, weights: TransformerWeights, name: str,
             adapter, tape: GradTape | None) -> Tensor:
    """y = x W^T, plus the adapter path s * (x B^T) A^T when `name` is adapted."""
    w = weights[name]
    y = nm.matmul(x, nm.transpose(w, (1, 0), tape), tape)
    if adapter is not None and name in adapter.mats:
        a, b = adapter.mats[name]
        u = nm.matmul(x, nm.transpose(b, (1, 0), tape), tape)
        v = nm.matmul(u, nm.transpose(a, (1, 0), tape), tape)
        y = nm.add(y, nm.scale(v, adapter.scale, tape), tape)
    return y


def forward(weights: TransformerWeights, config: ModelConfig, input_ids,
            adapter=None, tape: GradTape | None = None) -> Tensor:
    """Causal forward pass over one sequence; returns [T, vocab] logits."""
    ids = np.asarray(input_ids, dtype=np.int64)
    t = len(ids)
    if t > config.ctx_len:
        raise ContextLengthError(f"sequence of {t} tokens exceeds ctx_len {config.ctx_len}")
    if adapter is not None:
        known = set(weight_shapes(config))
        projs = {n for n in known if ".attn." in n or ".ffn." in n}
        bad = sorted(set(adapter.mats) - projs)
        if bad:
            raise TargetSpecError(f"adapter targets non-projection weights: {bad}")

    h, hd = config.n_heads, config.head_dim
    cos, sin = _rope_tables(config, t)
    mask = _causal_mask(h, t)
    inv_sqrt = 1.0 / math.sqrt(hd)

    x = nm.embedding(weights["tok_embed.weight"], ids, tape)
    for i in range(config.n_layers):
        pre = nm.rmsnorm(x, weights[f"layers.{i}.attn_norm.weight"], config.norm_eps, tape)
        q = _project(pre, weights, f"layers.{i}.attn.q.weight", adapter, tape)
        k = _project(pre, weights, f"layers.{i}.attn.k.weight", adapter, tape)
        v = _project(pre, weights, f"layers.{i}.attn.v.weight", adapter, tape)
        # [t, d] -> [heads, t, head_dim]
        q = nm.transpose(nm.reshape(q, (t, h, hd), tape), (1, 0, 2), tape)
        k = nm.transpose(nm.reshape(k, (t, h, hd), tape), (1, 0, 2), tape)
        v = nm.transpose(nm.reshape(v, (t, h, hd), tape), (1, 0, 2), tape)
        q = nm.rotary(q, cos, sin, tape)
        k = nm.rotary(k, cos, sin, tape)
        scores = nm.scale(nm.matmul(q, nm.transpose(k, (0, 2, 1), tape), tape), inv_sqrt, tape)
        probs = nm.softmax_rows(nm.add(scores, mask, tape), tape)
        ctx = nm.matmul(probs, v, tape)
        ctx = nm.reshape(nm.transpose(ctx, (1, 0, 2), tape), (t, config.d_model), tape)
        attn_out = _project(ctx, weights, f"layers.{i}.attn.o.weight", adapter, tape)
        x = nm.add(x, attn_out, tape)

        pre = nm.rmsnorm(x, weights[f"layers.{i}.ffn_norm.weight"], config.norm_eps, tape)
        up = _project(pre, weights, f"layers.{i}.ffn.up.weight", adapter, tape)
        gate = _project(pre, weights, f"layers.{i}.ffn.gate.weight", adapter, tape)
        act = nm.mul(nm.silu(gate, tape), up, tape)
        ffn_out = _project(act, weights, f"layers.{i}.ffn.down.weight", adapter, tape)
        x = nm.add(x, ffn_out, tape)

    x = nm.rmsnorm(x, weights["final_norm.weight"], config.norm_eps, tape)
    # output head tied to the token embedding
    return nm.matmul(x, nm.transpose(weights["tok_embed.weight"], (1, 0), tape), tape)


def to_checkpoint(weights: TransformerWeights) -> "Checkpoint":
    from .checkpoint import Checkpoint
    ckpt = Checkpoint(metadata={"model_config": weights.config.to_json()})
    for name, t in weights.tensors.items():
        ckpt.set(name, t.data)
    return ckpt


def from_checkpoint(ckpt, config: ModelConfig | None = None) -> TransformerWeights:
    """Rebuild weights from a checkpoint; the config comes from the
    checkpoint metadata unless given explicitly."""
    if config is None:
        blob = ckpt.metadata.get("model_config")
        if blob is None:
            raise ConfigError("checkpoint carries no model_config metadata")
        config = ModelConfig.from_json(blob)
    tensors = {name: Tensor(ckpt[name].copy()) for name in ckpt.tensors}
    return TransformerWeights(config, tensors)


@dataclass(frozen=True)
class Sampler:
    mode: str = "greedy"          # "greedy" | "temperature"
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("greedy", "temperature"):
            raise ConfigError(f"unknown sampler mode {self.mode!r}")
        if self.mode == "temperature" and self.temperature <= 0:
            raise ConfigError("temperature must be positive")


def generate(weights: TransformerWeights, config: ModelConfig, prompt_ids,
             sampler: Sampler = Sampler(), max_new: int = 64,
             adapter=None) -> list:
    """Autoregressive decoding; halts at EOS. Returns prompt + new tokens.
    When the sequence outgrows the context, the window slides."""
    ids = [int(i) for i in prompt_ids]
    if len(ids) >= config.ctx_len:
        raise ContextLengthError(
            f"prompt of {len(ids)} tokens must be shorter than ctx_len {config.ctx_len}")
    rng = np.random.default_rng(sampler.seed)
    for _ in range(max_new):
        window = ids[-config.ctx_len:]
        logits = forward(weights, config, window, adapter=adapter).data[-1]
        if sampler.mode == "greedy":
            nxt = int(np.argmax(logits))
        else:
            z = logits.astype(np.float64) / sampler.temperature
            z -= z.max()
            p = np.exp(z)
            p /= p.sum()
            nxt = int(rng.choice(len(p), p=p))
        ids.append(nxt)
        if nxt == EOS:
            break
    return ids
