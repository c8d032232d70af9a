"""Bias-corrected Adam, one state object per parameter tensor."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import backend
from .tensor import Tensor

DEFAULT_LR = 3e-4
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPS = 1e-8


class AdamState:
    def __init__(self, shape, lr: float = DEFAULT_LR, beta1: float = DEFAULT_BETA1,
                 beta2: float = DEFAULT_BETA2, eps: float = DEFAULT_EPS):
        self.m = np.zeros(shape, dtype=np.float32)
        self.v = np.zeros(shape, dtype=np.float32)
        self.t = 0
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(state: AdamState, param: Tensor, grad: np.ndarray) -> None:
    """Advance one Adam step, updating `param` in place."""
    if param.shape != state.m.shape or grad.shape != state.m.shape:
        raise ShapeError(
            f"adam_step: param {tuple(param.shape)}, grad {tuple(grad.shape)}, "
            f"state {tuple(state.m.shape)}")
    state.t += 1
    backend.adam_update(param.data, grad, state.m, state.v,
                        state.t, state.lr, state.beta1, state.beta2, state.eps)
