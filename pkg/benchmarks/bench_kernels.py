"""Compare the compiled kernels against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from stylemerge.numerics import _kernels_py as py

try:
    from stylemerge.numerics import _kernels as ext
except ImportError:
    ext = None


def timeit(fn, repeats):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats * 1e6  # us


def bench(repeats):
    rng = np.random.default_rng(0)
    logits = rng.standard_normal((256, 258)).astype(np.float32)
    targets = rng.integers(0, 258, size=256).astype(np.int64)
    n = 1 << 16
    p = rng.standard_normal(n).astype(np.float32)
    g = rng.standard_normal(n).astype(np.float32)
    m = np.zeros(n, dtype=np.float32)
    v = np.zeros(n, dtype=np.float32)

    cases = [
        ("softmax_rows 256x258",
         lambda k: k.softmax_rows(logits)),
        ("softmax_xent 256x258",
         lambda k: k.softmax_xent(logits.copy(), targets)),
        ("adam_update 65536",
         lambda k: k.adam_update(p, g, m, v, 1, 1e-3, 0.9, 0.999, 1e-8)),
    ]
    header = f"{'kernel':<24}{'python (us)':>14}{'ext (us)':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, call in cases:
        t_py = timeit(lambda: call(py), repeats)
        if ext is None:
            print(f"{name:<24}{t_py:>14.1f}{'n/a':>12}{'n/a':>10}")
        else:
            t_ext = timeit(lambda: call(ext), repeats)
            print(f"{name:<24}{t_py:>14.1f}{t_ext:>12.1f}"
                  f"{t_py / t_ext:>9.2f}x")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    bench(parser.parse_args().repeats)
