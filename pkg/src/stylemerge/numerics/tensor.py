"""Dense fp32 tensors and a reverse-mode gradient tape."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, TapeError


class Tensor:
    """A dense float32 n-d array. Shape is fixed at construction; values
    mutate only through declared operations (the optimizer update)."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        self.data = arr

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(()))

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)})"

    @staticmethod
    def zeros(*shape) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=np.float32))

    @staticmethod
    def randn(*shape, std: float = 1.0, rng: np.random.Generator) -> "Tensor":
        return Tensor(rng.standard_normal(shape).astype(np.float32) * np.float32(std))


def require_same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


class GradTape:
    """Records primitive operations and replays them in reverse.

    Gradients accumulate (sum) across multiple uses of a tensor. The tape
    holds references to every tensor it touched so that `id()` keys stay
    unique for its lifetime.
    """

    def __init__(self):
        self._ops = []          # backward closures, in recording order
        self._grads = {}        # id(tensor) -> np.ndarray accumulator
        self._on_tape = set()   # ids of tensors produced by recorded ops
        self._refs = []         # keepalive

    def record(self, out: Tensor, inputs, backward_fn) -> None:
        """backward_fn(grad_out) must call accumulate() for each input."""
        self._ops.append((out, backward_fn))
        self._on_tape.add(id(out))
        self._refs.append(out)
        self._refs.extend(inputs)

    def accumulate(self, t: Tensor, grad: np.ndarray) -> None:
        acc = self._grads.get(id(t))
        if acc is None:
            self._grads[id(t)] = np.ascontiguousarray(grad, dtype=np.float32).copy()
        else:
            acc += grad

    def grad_out(self, t: Tensor):
        """Upstream gradient for an op output; None if nothing flowed back."""
        return self._grads.get(id(t))

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise TapeError(f"backward expects a scalar loss, got shape {tuple(loss.shape)}")
        if id(loss) not in self._on_tape:
            raise TapeError("loss was not produced by an operation recorded on this tape")
        self._grads[id(loss)] = np.ones_like(loss.data)
        for out, fn in reversed(self._ops):
            g = self._grads.get(id(out))
            if g is not None:
                fn(g)

    def grad(self, param: Tensor) -> np.ndarray:
        """Gradient accumulated for `param`; zeros if it never saw flow."""
        g = self._grads.get(id(param))
        if g is None:
            return np.zeros_like(param.data)
        return g

    def clear(self) -> None:
        self._ops.clear()
        self._grads.clear()
        self._on_tape.clear()
        self._refs.clear()
