"""Compare the numba and pure-numpy pair-sum kernels.

    python benchmarks/bench_kernels.py --sizes 128 256 512 1024 --repeat 5

Thread count for the numba path follows HALFFLOW_THREADS (default 1).
"""

import argparse
import time

import numpy as np

from halfflow import _kernels as kern
from halfflow.spectral import CircleGrid, half_shift


def best_of(fn, repeat):
    fn()                                   # warm-up (JIT compile / cache load)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(M):
    g = CircleGrid(M)
    rng = np.random.default_rng(0)
    u = rng.standard_normal((M, 3))
    ut = half_shift(u)
    w2 = g.h / g.dist**2
    F = rng.standard_normal((M, M, 1))
    return {
        "pair_sq_sum": lambda K: K.pair_sq_sum(u, ut, w2),
        "pair_diff_sum": lambda K: K.pair_diff_sum(u, ut, w2),
        "power_div_sums": lambda K: K.power_div_sums(u, ut, g.h * w2, 2.0),
        "remainder": lambda K: K.remainder(u, ut, u, ut, u, ut, w2),
        "row_col_sums": lambda K: K.row_col_sums(F, g.h * w2),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512, 1024])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kern.numba_impl is None:
        raise SystemExit("numba is not installed")
    print(f"{'kernel':<16}{'M':>6}{'numpy [ms]':>13}{'numba [ms]':>13}{'speedup':>9}")
    for M in args.sizes:
        for name, run in cases(M).items():
            t_np = best_of(lambda: run(kern.numpy_impl), args.repeat)
            t_nb = best_of(lambda: run(kern.numba_impl), args.repeat)
            print(f"{name:<16}{M:>6}{1e3 * t_np:>13.3f}{1e3 * t_nb:>13.3f}{t_np / t_nb:>9.1f}")


if __name__ == "__main__":
    main()
