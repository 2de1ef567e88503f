"""Normalized cluster-size MGF excess (l(beta) - 1) / eps at beta = (1 - delta) eps^2 / 2.

Tabulates the exact Lambert-W value against its small-eps limit 1 - sqrt(delta)
for a decreasing sequence of eps.  At delta = 0 the error decays only like
sqrt(eps), since beta then sits within O(eps^3) of the MGF's singularity.

Usage: python3 scripts/cluster_tail.py
"""

import math

from fellerhawkes.simulator import tail_limit_exact


def main():
    deltas = (0.0, 0.25, 0.81)
    print(f"{'eps':>8} " + " ".join(f"{'delta=' + str(d):>22}" for d in deltas))
    for eps in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
        cells = []
        for d in deltas:
            v = tail_limit_exact(1.0 - eps, d)
            cells.append(f"{v:.6f} (err {abs(v - (1 - math.sqrt(d))):.1e})")
        print(f"{eps:8.0e} " + " ".join(f"{c:>22}" for c in cells))


if __name__ == "__main__":
    main()
