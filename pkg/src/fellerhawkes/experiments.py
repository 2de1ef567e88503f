"""Monte Carlo harnesses shared by the command line, scripts and acceptance tests.

Workers return only the statistics they were asked for (point counts and
``(f * xi)(t)`` at a few times), so memory does not grow with the number of
replications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .analytics import laplace_from_values, limit_laplace, first_moment
from .grid_measures import Grid, GridFunction, GridMeasure
from .grid_measures import lattice_convolve
from .kernels import (
    KernelSpec,
    RowConstant,
    discretize_kernel,
    geometric_mixture,
    null_array_sup,
)
from .simulator import HawkesParams, point_counts, run_replications, sample_hawkes

__all__ = [
    "FunctionalTask",
    "simulate_functionals",
    "LimitComparison",
    "compare_with_limit",
    "monotone_gaps",
    "mean_count_prediction",
    "prelimit_count_moments",
]


@dataclass(frozen=True, eq=False)
class FunctionalTask:
    """Per replication: ``(f * xi)(t)`` for ``xi = eps**2 H`` and the point count of ``H``.

    With several parameter sets the processes are sampled independently from
    the same stream and superposed.
    """

    params: tuple
    f_values: np.ndarray
    t_index: tuple
    scale: float

    def __call__(self, r: int, rng: np.random.Generator) -> np.ndarray:
        grid: Grid = self.params[0].grid
        counts = np.zeros(grid.n_cells + 1)
        n_points = 0
        for p in self.params:
            sample = sample_hawkes(p, rng)
            counts += point_counts(sample.times, grid)
            n_points += sample.n_points
        out = np.empty(len(self.t_index) + 1)
        for i, k in enumerate(self.t_index):
            out[i] = self.scale * float(np.dot(self.f_values[k::-1], counts[: k + 1]))
        out[-1] = n_points
        return out


def simulate_functionals(params: HawkesParams | Sequence[HawkesParams], f: GridFunction,
                         t_list: Sequence[float], reps: int, seed: int, threads: int = 1,
                         scale: float | None = None):
    """Arrays ``(values[rep, t], counts[rep])`` over ``reps`` replications.

    ``scale`` multiplies each point's mass and defaults to ``eps**2`` of the
    first parameter set.
    """
    plist = (params,) if isinstance(params, HawkesParams) else tuple(params)
    if scale is None:
        scale = plist[0].eps ** 2
    t_index = tuple(f.grid.index_of(t) for t in t_list)
    task = FunctionalTask(plist, f.values, t_index, scale)
    rows = run_replications(task, reps, seed, threads)
    arr = np.array(rows).reshape(reps, len(t_index) + 1)
    return arr[:, :-1], arr[:, -1]


@dataclass(frozen=True)
class LimitComparison:
    eps: float
    t: tuple
    empirical: tuple
    stderr: tuple
    limit: tuple
    gap: tuple

    def passes(self, rel_tol: float = 0.05, n_se: float = 3.0) -> list[bool]:
        return [g <= max(n_se * s, rel_tol * m)
                for g, s, m in zip(self.gap, self.stderr, self.limit)]

    def to_dict(self) -> dict:
        return {"eps": self.eps, "t": list(self.t), "empirical": list(self.empirical),
                "stderr": list(self.stderr), "limit": list(self.limit), "gap": list(self.gap)}


def compare_with_limit(rho, mu: GridMeasure, f: GridFunction, eps: float,
                       t_list: Sequence[float], reps: int, seed: int, threads: int = 1,
                       family=None, extra_mu: GridMeasure | None = None) -> LimitComparison:
    """Empirical Laplace functional of ``eps**2 H`` against ``exp(h[f] * mu)``.

    ``rho`` is a GID limit kernel (or a list for a periodic family).  When
    ``extra_mu`` is given, two independent processes with backgrounds ``mu``
    and ``extra_mu`` are superposed and compared with the limit for
    ``mu + extra_mu``.
    """
    grid = f.grid
    params = [HawkesParams.near_critical(eps, rho, mu)]
    target_mu = mu
    if extra_mu is not None:
        params.append(HawkesParams.near_critical(eps, rho, extra_mu))
        target_mu = mu + extra_mu
    if family is not None:
        params = [HawkesParams(p.a, family, p.background) for p in params]
    vals, _ = simulate_functionals(params, f, t_list, reps, seed, threads)
    emp = laplace_from_values(vals, t_list)
    limit_spec = HawkesParams.limit_kernel(rho)
    rho_grid = discretize_kernel(limit_spec, grid)
    lim = limit_laplace(f, rho_grid, target_mu)
    lim_vals = tuple(lim.at(t) for t in t_list)
    gaps = tuple(abs(e - m) for e, m in zip(emp.values, lim_vals))
    return LimitComparison(eps, tuple(t_list), tuple(emp.values.tolist()),
                           tuple(emp.stderr.tolist()), lim_vals, gaps)


def monotone_gaps(results: Sequence[LimitComparison], n_se: float = 3.0) -> list[bool]:
    """For eps sorted decreasing: ``gap_{i+1} <= gap_i + n_se (se_i + se_{i+1})`` per time."""
    ordered = sorted(results, key=lambda r: -r.eps)
    out = []
    for prev, nxt in zip(ordered, ordered[1:]):
        for j in range(len(prev.t)):
            slack = n_se * (prev.stderr[j] + nxt.stderr[j])
            out.append(nxt.gap[j] <= prev.gap[j] + slack)
    return out


def mean_count_prediction(params: HawkesParams, t: float, tol: float = 1e-12) -> float:
    """``E H[0, t] = ((rho * mu)[0, t]) / (1 - a)`` with ``rho`` the geometric mixture."""
    grid = params.grid
    rho = geometric_mixture(params.a, params.family, 0, grid, tol)
    ones = GridFunction.constant(grid, 1.0)
    return first_moment(ones, params.a, rho, params.background).at(t)


def prelimit_count_moments(params: HawkesParams, tol: float = 1e-12):
    """Exact ``(E H[0, t], Var H[0, t])`` on the grid for a row-constant family.

    A cluster rooted at 0 has ``N(s) = 1 + sum_children N_i(s - X_i)`` with
    Poisson(a) children, so ``M = 1 + a pi * M`` and
    ``S = E N**2 = g + a pi * S`` with ``g = 1 + 2a (pi * M) + a**2 (pi * M)**2``.
    Both are solved by the geometric mixture.  The immigrants being Poisson,
    ``Var H[0, t] = (S * mu)(t)``.
    """
    if not isinstance(params.family, RowConstant):
        raise ValueError("exact pre-limit moments need a row-constant family")
    grid = params.grid
    n = grid.n_cells + 1
    a = params.a
    pi = discretize_kernel(params.family.spec, grid).masses
    mix = geometric_mixture(a, params.family, 0, grid, tol).masses / (1.0 - a)
    M = lattice_convolve(mix, np.ones(n), n)
    piM = lattice_convolve(pi, M, n)
    S = lattice_convolve(mix, 1.0 + 2.0 * a * piM + a * a * piM ** 2, n)
    mu = params.background.masses
    return lattice_convolve(M, mu, n), lattice_convolve(S, mu, n)


def null_array_warning(family, check_time: float, threshold: float) -> tuple[float, bool]:
    """``(sup_m pi^m[check_time, inf), value > threshold)``."""
    v = null_array_sup(family, None, check_time)
    return v, v > threshold


def gid_limit(spec_or_list) -> KernelSpec:
    return HawkesParams.limit_kernel(spec_or_list)


def stderr_of_mean(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
