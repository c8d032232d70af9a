"""Manufacture desk-scale checkpoints.

Real pretrained/instruct models are out of scope, so recipes build their own:
a "base" trained from scratch on neutral text and an "instruct" produced by
continued training of the base on an instruction-formatted corpus. This plain
full-parameter trainer exists only for that; adapter training lives in
`train` and never touches base weights.
"""

from __future__ import annotations

import math

import numpy as np

from . import model as mdl
from .checkpoint import Checkpoint
from .errors import ConfigError, TrainingDivergedError
from .numerics import AdamState, GradTape, adam_step, cross_entropy_next_token
from .train import TrainHyper, _clip_global_norm


def train_full(weights: mdl.TransformerWeights, config: mdl.ModelConfig,
               batches, hyper: TrainHyper) -> list:
    """Update every weight tensor in place; returns per-step mean losses."""
    batches = list(batches)
    if not batches:
        raise ConfigError("empty corpus: no training batches")
    states = {name: AdamState(t.shape, lr=hyper.lr)
              for name, t in weights.tensors.items()}
    losses = []
    cursor = 0
    for step in range(hyper.steps):
        grads = {name: np.zeros_like(t.data) for name, t in weights.tensors.items()}
        step_loss = 0.0
        for _ in range(hyper.batch_size):
            batch = batches[cursor % len(batches)]
            cursor += 1
            tape = GradTape()
            logits = mdl.forward(weights, config, batch.input_ids, None, tape)
            loss = cross_entropy_next_token(logits, batch.target_ids, tape)
            tape.backward(loss)
            step_loss += loss.item()
            for name, t in weights.tensors.items():
                grads[name] += tape.grad(t)
            tape.clear()
        step_loss /= hyper.batch_size
        if not math.isfinite(step_loss):
            raise TrainingDivergedError(f"non-finite loss at step {step}")
        losses.append(step_loss)
        for g in grads.values():
            g /= np.float32(hyper.batch_size)
        _clip_global_norm(grads, 1.0)
        for name, t in weights.tensors.items():
            adam_step(states[name], t, grads[name])
    return losses


def pretrain(config: mdl.ModelConfig, batches, hyper: TrainHyper,
             init_seed: int = 0) -> Checkpoint:
    """Train a fresh model from scratch and return it as a checkpoint."""
    weights = mdl.init_weights(config, init_seed)
    train_full(weights, config, batches, hyper)
    return mdl.to_checkpoint(weights)


def continue_training(ckpt: Checkpoint, batches, hyper: TrainHyper) -> Checkpoint:
    """Continued full-parameter training from an existing checkpoint."""
    weights = mdl.from_checkpoint(ckpt)
    train_full(weights, weights.config, batches, hyper)
    return mdl.to_checkpoint(weights)
