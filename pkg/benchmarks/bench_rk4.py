"""Compare the compiled and numpy Runge-Kutta kernels.

Run with ``python3 benchmarks/bench_rk4.py [--steps N] [--repeat R]``.  Both
backends integrate the same random stable system and forcing; the script
prints the best wall time of each and the largest state difference.
"""

import argparse
import time

import numpy as np

from attracting_cylinders import kernels


def bench(n: int, steps: int, repeat: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((n, n))
    M = S - (np.max(np.linalg.eigvals(S).real) + 0.5) * np.eye(n)
    forcing = rng.standard_normal((steps, 3, n))
    s0 = rng.standard_normal(n)
    results = {}
    for backend in kernels.AVAILABLE:
        best = np.inf
        for _ in range(repeat):
            t0 = time.perf_counter()
            states, _ = kernels.rk4_lti(M, forcing, s0, 1e-3, backend=backend)
            best = min(best, time.perf_counter() - t0)
        results[backend] = (best, states)
    return results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sizes", type=int, nargs="+", default=[2, 5, 10, 20])
    args = ap.parse_args(argv)
    print(f"backends: {', '.join(kernels.AVAILABLE)}; default {kernels.BACKEND}; steps {args.steps}")
    print(f"{'n':>4} " + " ".join(f"{b + ' [s]':>12}" for b in kernels.AVAILABLE) + f" {'speedup':>8} {'max diff':>10}")
    for n in args.sizes:
        res = bench(n, args.steps, args.repeat)
        times = " ".join(f"{res[b][0]:12.4f}" for b in kernels.AVAILABLE)
        if len(res) == 2:
            speedup = res["python"][0] / res["cython"][0]
            diff = float(np.max(np.abs(res["python"][1] - res["cython"][1])))
            print(f"{n:4d} {times} {speedup:8.1f} {diff:10.2e}")
        else:
            print(f"{n:4d} {times} {'n/a':>8} {'n/a':>10}")


if __name__ == "__main__":
    main()
