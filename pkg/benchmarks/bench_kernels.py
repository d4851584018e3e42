"""Compare the compiled and numpy log-domain propagation kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5]

Times propagate_log on the T band of a steady-state model for several chain
lengths, checks both backends agree, and prints one line per size.
"""
import argparse
import time

import numpy as np

from xxzness import kernels, mpo
from xxzness.qlax import QContext


def bands(delta, eps, n):
    ctx = QContext.solved(delta, eps, mpo.default_cutoff(n))
    lo, d, up = mpo.sector_bands(ctx)[0]
    with np.errstate(divide="ignore"):
        return np.log(d), np.log(up), np.log(lo)


def best_time(fn, repeat):
    out = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t)
    return min(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", default="50,100,200,400,800")
    args = ap.parse_args(argv)
    if kernels.propagate_log_ext is None:
        print("compiled extension not built; nothing to compare")
        return 1
    print(f"{'n':>6} {'D':>5} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8} {'rel diff':>10}")
    for n in (int(x) for x in args.sizes.split(",")):
        ld, lu, ll = bands(1.0, 1.0, n)
        run_py = lambda: kernels.propagate_log_py(ld, lu, ll, n, True)
        run_ext = lambda: kernels.propagate_log_ext(ld, lu, ll, n, True)
        a, b = run_py(), run_ext()
        fin = np.isfinite(a)
        diff = float((abs(a[fin] - b[fin]) / np.maximum(1.0, abs(a[fin]))).max())
        if not np.array_equal(fin, np.isfinite(b)):
            diff = float("inf")
        tp, te = best_time(run_py, args.repeat), best_time(run_ext, args.repeat)
        print(f"{n:>6} {len(ld):>5} {1e3 * tp:>12.3f} {1e3 * te:>12.3f} {tp / te:>8.1f} {diff:>10.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
