"""Kernel backend selection.

The compiled extension is preferred when present; set STYLEMERGE_KERNELS to
"python" or "ext" to force a choice (forcing "ext" fails loudly if the
extension was not built). Both backends satisfy the same contracts; within a
single backend all kernels are bitwise deterministic.
"""

import os

import numpy as np

_choice = os.environ.get("STYLEMERGE_KERNELS", "auto")

if _choice == "python":
    from . import _kernels_py as _impl
elif _choice == "ext":
    from . import _kernels as _impl  # type: ignore[no-redef]
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as _impl  # type: ignore[no-redef]

BACKEND = _impl.NAME
HAS_EXT = BACKEND == "ext"


def _as_2d_f32(x):
    a = np.ascontiguousarray(x, dtype=np.float32)
    return a.reshape(-1, a.shape[-1])


def softmax_rows(x):
    """Stable softmax over the last axis; returns a new float32 array."""
    a = np.ascontiguousarray(x, dtype=np.float32)
    out = _impl.softmax_rows(_as_2d_f32(a))
    return np.asarray(out).reshape(a.shape)


def softmax_xent(logits, targets):
    """Mean next-token NLL and its gradient w.r.t. the logits."""
    lg = _as_2d_f32(logits)
    tg = np.ascontiguousarray(targets, dtype=np.int64)
    loss, dlogits = _impl.softmax_xent(lg, tg)
    return float(loss), np.asarray(dlogits)


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps):
    """In-place bias-corrected Adam step on flat float32 buffers."""
    _impl.adam_update(param.ravel(), np.ascontiguousarray(grad, dtype=np.float32).ravel(),
                      m.ravel(), v.ravel(), t, lr, beta1, beta2, eps)
