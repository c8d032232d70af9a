from .adam import AdamState, adam_step
from .backend import BACKEND, HAS_EXT
from .ops import (add, cross_entropy_next_token, embedding, matmul, mul,
                  reshape, rmsnorm, rotary, scale, silu, softmax_rows,
                  sum_all, transpose)
from .tensor import GradTape, Tensor

__all__ = [
    "AdamState", "adam_step", "BACKEND", "HAS_EXT", "GradTape", "Tensor",
    "add", "cross_entropy_next_token", "embedding", "matmul", "mul",
    "reshape", "rmsnorm", "rotary", "scale", "silu", "softmax_rows",
    "sum_all", "transpose",
]
