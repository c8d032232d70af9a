"""LoRA fine-tuning against a frozen checkpoint, next-token objective.

The same trainer covers the main recipe (adapters on the base model) and the
direct-LoRA baseline (pointed at the instruct checkpoint): only the A/B
matrices ever receive updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model as mdl
from .checkpoint import Checkpoint
from .errors import ConfigError, TrainingDivergedError
from .lora import LoraAdapter, TargetSpec, init_adapter
from .numerics import AdamState, GradTape, adam_step, cross_entropy_next_token

CLIP_NORM = 1.0


@dataclass(frozen=True)
class TrainHyper:
    steps: int
    lr: float = 3e-4
    batch_size: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("invalid hyperparameters")


def _clip_global_norm(grads: dict, max_norm: float) -> None:
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if total > max_norm:
        factor = np.float32(max_norm / total)
        for g in grads.values():
            g *= factor


def train_lora(ckpt: Checkpoint, config: mdl.ModelConfig, batches,
               spec: TargetSpec, hyper: TrainHyper):
    """Returns (adapter, per-step mean losses). The checkpoint is never
    mutated; steps=0 returns the freshly initialized adapter."""
    batches = list(batches)
    if not batches:
        raise ConfigError("empty corpus: no training batches")
    weights = mdl.from_checkpoint(ckpt, config)
    shapes = {n: tuple(t.shape) for n, t in weights.tensors.items() if t.ndim == 2}
    adapter = init_adapter(spec, shapes, hyper.seed)

    params = {}
    states = {}
    for name, (a, b) in adapter.mats.items():
        params[f"{name}.lora_A"] = a
        params[f"{name}.lora_B"] = b
    for pname, p in params.items():
        states[pname] = AdamState(p.shape, lr=hyper.lr)

    losses = []
    cursor = 0
    for step in range(hyper.steps):
        grads = {pname: np.zeros_like(p.data) for pname, p in params.items()}
        step_loss = 0.0
        for _ in range(hyper.batch_size):
            batch = batches[cursor % len(batches)]
            cursor += 1
            tape = GradTape()
            logits = mdl.forward(weights, config, batch.input_ids, adapter, tape)
            loss = cross_entropy_next_token(logits, batch.target_ids, tape)
            tape.backward(loss)
            step_loss += loss.item()
            for name, (a, b) in adapter.mats.items():
                grads[f"{name}.lora_A"] += tape.grad(a)
                grads[f"{name}.lora_B"] += tape.grad(b)
            tape.clear()
        step_loss /= hyper.batch_size
        if not math.isfinite(step_loss):
            raise TrainingDivergedError(f"non-finite loss at step {step}")
        losses.append(step_loss)
        for g in grads.values():
            g /= np.float32(hyper.batch_size)
        _clip_global_norm(grads, CLIP_NORM)
        for pname, p in params.items():
            adam_step(states[pname], p, grads[pname])
    return adapter, losses


def eval_perplexity(ckpt: Checkpoint, config: mdl.ModelConfig,
                    batches, adapter: LoraAdapter | None = None) -> float:
    """exp(mean next-token cross-entropy) over all held-out positions."""
    batches = list(batches)
    if not batches:
        raise ConfigError("empty evaluation set")
    weights = mdl.from_checkpoint(ckpt, config)
    total, count = 0.0, 0
    for batch in batches:
        logits = mdl.forward(weights, config, batch.input_ids, adapter)
        loss = cross_entropy_next_token(logits, batch.target_ids)
        total += loss.item() * len(batch.target_ids)
        count += len(batch.target_ids)
    return math.exp(total / count)


def write_loss_csv(losses, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("step,loss\n")
        for i, v in enumerate(losses):
            f.write(f"{i},{v:.6f}\n")
