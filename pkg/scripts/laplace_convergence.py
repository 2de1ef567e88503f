"""Empirical Laplace functional of eps^2 H against the scaling limit, for several eps.

Usage: python3 scripts/laplace_convergence.py [--reps 10000] [--threads 1] [--out laplace.csv]
"""

import argparse
import csv
import time

from fellerhawkes import Exponential, GridFunction, GridMeasure, Grid
from fellerhawkes.experiments import compare_with_limit, monotone_gaps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=10_000)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--c", type=float, default=-0.3, help="constant test function value")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    grid = Grid(5.0, 1e-3)
    f = GridFunction.constant(grid, args.c)
    mu = GridMeasure.lebesgue(grid)
    t_list = (1.0, 2.0, 5.0)
    results = []
    for eps in (0.2, 0.1, 0.05):
        t0 = time.perf_counter()
        res = compare_with_limit(Exponential(1.0), mu, f, eps, t_list, args.reps, args.seed,
                                 args.threads)
        results.append(res)
        print(f"eps={eps:<5} ({time.perf_counter() - t0:5.1f}s)")
        for t, e, s, m, g in zip(res.t, res.empirical, res.stderr, res.limit, res.gap):
            print(f"  t={t:<4} empirical={e:.5f} +- {s:.5f}  limit={m:.5f}  gap={g:.5f}")
    print("final gaps within max(3 se, 5%):", results[-1].passes())
    print("gaps nonincreasing up to 3 se:  ", monotone_gaps(results))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "t", "empirical", "stderr", "limit", "gap"])
            for r in results:
                for row in zip(r.t, r.empirical, r.stderr, r.limit, r.gap):
                    w.writerow([r.eps, *row])


if __name__ == "__main__":
    main()
