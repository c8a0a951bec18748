"""Benchmark the jitted kernels against their pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [n]
"""

import sys
import time

import numpy as np

from chainrec import _kernels as K


def make_problem(n, rng):
    coords = np.sort(rng.uniform(0, 1, n))
    dmat = np.abs(coords[:, None] - coords[None, :])
    img = np.minimum((2.2 * np.arange(n)).astype(np.int64) % (n + 7), n - 1)
    eps = np.full(n, 4.0 / n)
    sources = np.zeros(n, dtype=bool)
    sources[: max(1, n // 50)] = True
    return dmat, img, eps, sources


def timed(fn, *args, repeat=3):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 1500
    rng = np.random.default_rng(0)
    dmat, img, eps, sources = make_problem(n, rng)
    inv_eps = 1.0 / eps

    print(f"n = {n}, numba available: {K.HAS_NUMBA}")
    if K.HAS_NUMBA:
        K.warmup()
        t_jit_e, (ip1, ix1) = timed(K._edges_jit, dmat, img, eps)
        t_jit_d, d1 = timed(K._effort_dijkstra_jit, dmat, inv_eps, img, sources)
    t_py_e, (ip2, ix2) = timed(K._edges_py, dmat, img, eps)
    t_py_d, d2 = timed(K._effort_dijkstra_py, dmat, inv_eps, img, sources)

    if K.HAS_NUMBA:
        assert np.array_equal(ip1, ip2) and np.array_equal(ix1, ix2)
        assert np.allclose(d1, d2, equal_nan=True)
        print(f"chain-graph edges : numba {t_jit_e:.4f}s  numpy {t_py_e:.4f}s "
              f"(x{t_py_e / t_jit_e:.1f})")
        print(f"effort dijkstra   : numba {t_jit_d:.4f}s  numpy {t_py_d:.4f}s "
              f"(x{t_py_d / t_jit_d:.1f})")
    else:
        print(f"chain-graph edges : numpy {t_py_e:.4f}s")
        print(f"effort dijkstra   : numpy {t_py_d:.4f}s")


if __name__ == "__main__":
    main()
