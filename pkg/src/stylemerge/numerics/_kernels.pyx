# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-loop kernels: row softmax, fused softmax+NLL, Adam update.

Contracts mirror `_kernels_py`; the backend picks whichever is importable.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport expf, log, sqrt

cnp.import_array()

NAME = "ext"


def softmax_rows(cnp.float32_t[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    out_arr = np.empty((n, d), dtype=np.float32)
    cdef cnp.float32_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double m, s
    for i in range(n):
        m = x[i, 0]
        for j in range(1, d):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(d):
            out[i, j] = expf(<float>(x[i, j] - m))
            s += out[i, j]
        for j in range(d):
            out[i, j] = <cnp.float32_t>(out[i, j] / s)
    return out_arr


def softmax_xent(cnp.float32_t[:, ::1] logits, cnp.int64_t[::1] targets):
    cdef Py_ssize_t t = logits.shape[0]
    cdef Py_ssize_t v = logits.shape[1]
    dl_arr = np.empty((t, v), dtype=np.float32)
    cdef cnp.float32_t[:, ::1] dl = dl_arr
    cdef Py_ssize_t i, j
    cdef double m, s, loss = 0.0, p
    cdef double inv_t = 1.0 / t
    for i in range(t):
        m = logits[i, 0]
        for j in range(1, v):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(v):
            dl[i, j] = expf(<float>(logits[i, j] - m))
            s += dl[i, j]
        p = dl[i, targets[i]] / s
        if p < 1e-45:
            p = 1e-45
        loss -= log(p)
        for j in range(v):
            dl[i, j] = <cnp.float32_t>(dl[i, j] / s * inv_t)
        dl[i, targets[i]] -= <cnp.float32_t>inv_t
    return loss * inv_t, dl_arr


def adam_update(cnp.float32_t[::1] p, cnp.float32_t[::1] g,
                cnp.float32_t[::1] m, cnp.float32_t[::1] v,
                long t, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef double mi, vi
    for i in range(n):
        mi = beta1 * m[i] + (1.0 - beta1) * g[i]
        vi = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        m[i] = <cnp.float32_t>mi
        v[i] = <cnp.float32_t>vi
        p[i] -= <cnp.float32_t>(lr * (mi / c1) / (sqrt(vi / c2) + eps))
