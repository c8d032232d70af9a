"""Pure-numpy reference kernels.

Same contracts as the compiled `_kernels` extension; used as the fallback
when the extension is unavailable (see `backend`). All inputs are C-contiguous
float32; row reductions may accumulate in wider precision.
"""

import numpy as np

NAME = "python"


def softmax_rows(x):
    """Row-wise stable softmax. x: (n, d) float32 -> (n, d) float32."""
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m, dtype=np.float32)
    return e / e.sum(axis=1, keepdims=True, dtype=np.float32)


def softmax_xent(logits, targets):
    """Fused softmax + mean next-token NLL.

    logits: (t, v) float32, targets: (t,) int64 in [0, v).
    Returns (loss, dlogits) where dlogits is the gradient of the mean loss.
    """
    t = logits.shape[0]
    probs = softmax_rows(logits)
    picked = probs[np.arange(t), targets]
    loss = float(-np.log(np.maximum(picked, np.float32(1e-45))).mean())
    dlogits = probs
    dlogits[np.arange(t), targets] -= np.float32(1.0)
    dlogits /= np.float32(t)
    return loss, dlogits


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    """Bias-corrected Adam step, in place on flat float32 views.

    t is the step count *after* incrementing (t >= 1).
    """
    b1 = np.float32(beta1)
    b2 = np.float32(beta2)
    m *= b1
    m += (np.float32(1.0) - b1) * g
    v *= b2
    v += (np.float32(1.0) - b2) * g * g
    mhat = m / np.float32(1.0 - beta1**t)
    vhat = v / np.float32(1.0 - beta2**t)
    p -= np.float32(lr) * mhat / (np.sqrt(vhat) + np.float32(eps))
