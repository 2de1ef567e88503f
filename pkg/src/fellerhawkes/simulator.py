"""Cluster (branching) simulation of nonhomogeneous Hawkes processes.

A single-progenitor cluster is a Galton-Watson tree with Poisson(a)
offspring; a child of a generation-``g`` node is displaced by an independent
draw from the generation kernel ``pi^{g+1}``.  A Hawkes process is the
superposition of independent clusters rooted at Poisson immigrants.

Clusters are grown generation by generation with every node of a generation
handled in one vectorized step.  Children born after the horizon are kept but
never expanded, since their descendants are later still.

The total cluster size has an explicit moment generating function in terms of
the principal branch ``W0`` of the Lambert W function; it is implemented here
together with the near-critical tail functional built on it.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .grid_measures import Grid, GridMeasure
from .kernels import KernelFamily, KernelSpec, Periodic, RowConstant, average_exponent, sample_kernel

__all__ = [
    "lambert_w0",
    "cluster_size_mgf",
    "cluster_size_moment",
    "tail_limit_exact",
    "tail_moment_limit",
    "HawkesParams",
    "ClusterTree",
    "PointSample",
    "ClusterOverflowError",
    "sample_cluster",
    "sample_cluster_sizes",
    "sample_hawkes",
    "scaled_measure",
    "replication_stream",
    "run_replications",
]

INV_E = math.exp(-1.0)
DEFAULT_MAX_NODES = 10_000_000

# coefficients of W0 in p = sqrt(2 (e x + 1)) around the branch point
_BRANCH_SERIES = (-1.0, 1.0, -1.0 / 3.0, 11.0 / 72.0, -43.0 / 540.0,
                  769.0 / 17280.0, -221.0 / 8505.0)


# ---------------------------------------------------------------------------
# Lambert W and cluster-size analytics
# ---------------------------------------------------------------------------


def _halley_w0(x: float, w: float) -> float:
    for _ in range(60):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0:
            break
        step = f / denom
        w_new = w - step
        # stay on the principal branch
        if w_new < -1.0:
            w_new = 0.5 * (w - 1.0)
        if abs(w_new - w) <= 4e-16 * (1.0 + abs(w_new)):
            return w_new
        w = w_new
    return w


def _w0_from_gap(q: float) -> float:
    """``W0(x)`` given ``q = 1 + e x`` (so ``q = 0`` is the branch point).

    Passing ``q`` instead of ``x`` keeps full relative accuracy when ``x`` is
    within rounding distance of ``-1/e``.
    """
    if q < 0:
        raise ValueError("argument below -1/e")
    p = math.sqrt(2.0 * q)
    if p < 1e-3:
        return sum(c * p ** k for k, c in enumerate(_BRANCH_SERIES))
    x = (q - 1.0) * INV_E
    if p < 0.5:
        w0 = sum(c * p ** k for k, c in enumerate(_BRANCH_SERIES))
    elif x < 3.0:
        w0 = math.log1p(x) * (1.0 - 0.3 * math.log1p(x) / (1.0 + math.log1p(x)))
    else:
        lx = math.log(x)
        w0 = lx - math.log(lx)
    return _halley_w0(x, w0)


def lambert_w0(x):
    """Principal branch of the Lambert W function for ``x >= -1/e``.

    Arguments down to ``1e-12`` below ``-1/e`` are clamped to the branch point.
    """
    arr = np.asarray(x, dtype=float)
    out = np.empty(arr.shape)
    flat = arr.ravel()
    res = out.ravel()
    for i, xi in enumerate(flat):
        if not math.isfinite(xi):
            if xi == math.inf:
                res[i] = math.inf
                continue
            raise ValueError(f"lambert_w0 undefined at {xi}")
        if xi < -INV_E - 1e-12:
            raise ValueError(f"lambert_w0 needs x >= -1/e, got {xi}")
        if xi == 0.0:
            res[i] = 0.0
            continue
        res[i] = _w0_from_gap(max(1.0 + math.e * xi, 0.0))
    return float(res[0]) if arr.ndim == 0 else out


def _beta_max(a: float) -> float:
    """``a - 1 - log(a)``, computed without cancellation near ``a = 1``."""
    eps = 1.0 - a
    return -eps - math.log1p(-eps)


def _check_ratio(a: float) -> None:
    if not (0.0 < a < 1.0):
        raise ValueError(f"branching ratio must lie in (0, 1), got {a}")


# a beta within a few ulps of a - 1 - log(a) is the boundary itself; the MGF
# has a square-root singularity there, so rounding would otherwise cost ~1e-8
_BOUNDARY_RTOL = 8 * sys.float_info.epsilon


def _beyond_boundary(a: float, beta: float) -> bool:
    bm = _beta_max(a)
    return beta > bm * (1.0 + _BOUNDARY_RTOL)


def _w_at(a: float, beta: float) -> float:
    # W0(-exp(beta - a + log a)) with 1 + e x = -expm1(beta - beta_max)
    bm = _beta_max(a)
    gap = beta - bm
    if abs(gap) <= _BOUNDARY_RTOL * bm:
        gap = 0.0
    return _w0_from_gap(-math.expm1(gap))


def cluster_size_mgf(a: float, beta: float) -> float:
    """``E exp(beta |H|)`` for the total size ``|H|`` of a Poisson(a) Galton-Watson tree.

    Finite exactly for ``beta <= a - 1 - log(a)``, where it equals
    ``-W0(-exp(beta - a + log a)) / a``.  A ``beta`` above the boundary by a
    few ulps is treated as the boundary itself.
    """
    _check_ratio(a)
    if _beyond_boundary(a, beta):
        return math.inf
    return -_w_at(a, beta) / a


def cluster_size_moment(a: float, beta: float, k: int) -> float:
    """``E |H|^k exp(beta |H|)`` for ``k`` in ``{0, 1, 2}`` (derivatives of the MGF).

    Uses ``dW/dbeta = W / (1 + W)`` along ``x = -exp(beta - a + log a)``.
    Higher orders are not provided.
    """
    _check_ratio(a)
    if k not in (0, 1, 2):
        raise NotImplementedError("only k = 0, 1, 2 are implemented")
    if _beyond_boundary(a, beta) or (k > 0 and beta >= _beta_max(a) * (1.0 - _BOUNDARY_RTOL)):
        return math.inf
    w = _w_at(a, beta)
    if k == 0:
        return -w / a
    if k == 1:
        return -w / (a * (1.0 + w))
    return -w / (a * (1.0 + w) ** 3)


def tail_limit_exact(a: float, delta: float) -> float:
    """``(E exp(beta |H|) - 1) / (1 - a)`` at ``beta = (1 - delta)(1 - a)**2 / 2``.

    Tends to ``1 - sqrt(delta)`` as ``a -> 1``.
    """
    _check_ratio(a)
    if not (0.0 <= delta < 1.0):
        raise ValueError(f"delta must lie in [0, 1), got {delta}")
    eps = 1.0 - a
    beta = 0.5 * (1.0 - delta) * eps * eps
    if beta > _beta_max(a):
        raise ValueError("moment generating function is infinite at this beta")
    return (cluster_size_mgf(a, beta) - 1.0) / eps


def tail_moment_limit(k: int, delta: float) -> float:
    """Limit of ``eps**(2k-1) E |H|^k exp((1 - delta) eps**2 |H| / 2)`` as ``eps -> 0``."""
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    return math.factorial(k - 1) / 2 ** (k - 1) * math.comb(2 * (k - 1), k - 1) * delta ** (0.5 - k)


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------


class ClusterOverflowError(RuntimeError):
    """An unpruned cluster exceeded the node cap."""


@dataclass(frozen=True, eq=False)
class HawkesParams:
    """Branching ratio ``a``, generation kernels and background measure.

    The horizon is the background grid's horizon.
    """

    a: float
    family: KernelFamily
    background: GridMeasure

    def __post_init__(self):
        _check_ratio(self.a)
        if self.background.signed:
            raise ValueError("background measure must be nonnegative")
        for spec in self.family.one_period():
            if spec.atom_at_zero > 0:
                raise ValueError(
                    f"generation kernel {spec!r} charges 0; edge lengths must be positive"
                )

    @property
    def eps(self) -> float:
        return 1.0 - self.a

    @property
    def horizon(self) -> float:
        return self.background.grid.horizon

    @property
    def grid(self) -> Grid:
        return self.background.grid

    @classmethod
    def near_critical(cls, eps: float, rho, mu: GridMeasure) -> "HawkesParams":
        """Pre-limit parameters whose scaled process targets ``F(mu, rho)``.

        ``rho`` is a GID kernel (or a list of them, used periodically).  The
        generation kernels are the ``eps``-thinned kernels, ``a = 1 - eps``
        and the background is ``mu / eps``.
        """
        if isinstance(rho, KernelSpec):
            family: KernelFamily = RowConstant(rho.thin(eps))
        else:
            family = Periodic(tuple(s.thin(eps) for s in rho))
        return cls(1.0 - eps, family, mu.scale(1.0 / eps))

    @staticmethod
    def limit_kernel(rho) -> KernelSpec:
        """Limit kernel targeted by :meth:`near_critical` for the same ``rho``."""
        return rho if isinstance(rho, KernelSpec) else average_exponent(rho)


@dataclass(frozen=True, eq=False)
class ClusterTree:
    """Nodes of one cluster in breadth-first order; node 0 is the root."""

    times: np.ndarray
    generations: np.ndarray
    parents: np.ndarray  # -1 for the root
    horizon: float = math.inf

    @property
    def size(self) -> int:
        return len(self.times)

    def check(self) -> None:
        """Raise ``AssertionError`` if a structural invariant fails."""
        assert self.parents[0] == -1 and np.all(self.parents[1:] >= 0)
        assert self.times[0] == 0.0
        p = self.parents[1:]
        assert np.all(p < np.arange(1, self.size))
        assert np.all(self.times[1:] > self.times[p])
        assert np.all(self.generations[1:] == self.generations[p] + 1)
        # only nodes inside the horizon have children
        assert np.all(self.times[p] <= self.horizon)

    def count_within(self, t: float) -> int:
        return int(np.count_nonzero(self.times <= t))


@dataclass(frozen=True, eq=False)
class PointSample:
    """Points of one Hawkes realization, sorted by time."""

    times: np.ndarray
    generations: np.ndarray
    cluster_ids: np.ndarray
    horizon: float
    a: float
    seed: int | None = None

    @property
    def n_points(self) -> int:
        return len(self.times)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "generation", "cluster_id"])
        for t, g, c in zip(self.times, self.generations, self.cluster_ids):
            w.writerow([repr(float(t)), int(g), int(c)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def summary(self) -> dict:
        return {"n_points": self.n_points, "horizon": self.horizon, "a": self.a,
                "seed": self.seed}

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def _grow(root_times: np.ndarray, root_clusters: np.ndarray, m0: int, a: float,
          family: KernelFamily, horizon: float, rng: np.random.Generator,
          track_parents: bool, max_nodes: int):
    """Grow clusters from the given roots; returns concatenated node arrays."""
    times = [root_times]
    gens = [np.full(len(root_times), m0, dtype=np.int64)]
    clusters = [root_clusters]
    parents = [np.full(len(root_times), -1, dtype=np.int64)]
    n_nodes = len(root_times)
    active = np.flatnonzero(root_times <= horizon)
    active_times = root_times[active]
    active_clusters = root_clusters[active]
    active_ids = active  # global node ids of expandable nodes
    g = m0
    while len(active_times):
        counts = rng.poisson(a, len(active_times))
        total = int(counts.sum())
        if total == 0:
            break
        g += 1
        lengths = np.atleast_1d(sample_kernel(family.kernel(g), rng, total))
        child_times = np.repeat(active_times, counts) + lengths
        child_clusters = np.repeat(active_clusters, counts)
        times.append(child_times)
        gens.append(np.full(total, g, dtype=np.int64))
        clusters.append(child_clusters)
        if track_parents:
            parents.append(np.repeat(active_ids, counts))
        child_ids = np.arange(n_nodes, n_nodes + total)
        n_nodes += total
        if n_nodes > max_nodes:
            raise ClusterOverflowError(
                f"cluster exceeded {max_nodes} nodes; raise max_nodes or use a horizon"
            )
        keep = child_times <= horizon
        active_times = child_times[keep]
        active_clusters = child_clusters[keep]
        active_ids = child_ids[keep]
    out = (np.concatenate(times), np.concatenate(gens), np.concatenate(clusters))
    if track_parents:
        return out + (np.concatenate(parents),)
    return out


def sample_cluster(params: HawkesParams, m0: int, rng: np.random.Generator, *,
                   horizon: float | None = None,
                   max_nodes: int = DEFAULT_MAX_NODES) -> ClusterTree:
    """One single-progenitor cluster rooted at time 0 in generation ``m0``.

    ``horizon`` defaults to the params horizon; pass ``math.inf`` for the
    unpruned tree (guarded by ``max_nodes``).
    """
    h = params.horizon if horizon is None else horizon
    t, g, _, p = _grow(np.zeros(1), np.zeros(1, dtype=np.int64), m0, params.a,
                       params.family, h, rng, True, max_nodes)
    return ClusterTree(t, g, p, h)


def sample_cluster_sizes(a: float, count: int, rng: np.random.Generator,
                         max_nodes: int = DEFAULT_MAX_NODES) -> np.ndarray:
    """Total sizes of ``count`` independent Poisson(a) Galton-Watson trees.

    Only generation sizes are simulated (the sum of ``k`` Poisson(a) counts is
    Poisson(a k)), which is all the size law depends on.
    """
    _check_ratio(a)
    sizes = np.ones(count, dtype=np.int64)
    current = np.ones(count, dtype=np.int64)
    while True:
        alive = current > 0
        if not alive.any():
            return sizes
        current = np.where(alive, rng.poisson(a * current), 0)
        sizes += current
        if sizes.max() > max_nodes:
            raise ClusterOverflowError(f"a cluster exceeded {max_nodes} nodes")


def _sample_immigrants(mu: GridMeasure, rng: np.random.Generator) -> np.ndarray:
    total = mu.total_mass
    if total <= 0:
        return np.zeros(0)
    n = rng.poisson(total)
    if n == 0:
        return np.zeros(0)
    masses = mu.masses
    cell = rng.choice(len(masses), n, p=masses / masses.sum())
    # uniform position inside the cell (t_{k-1}, t_k]; the atom sits at 0
    u = rng.uniform(0.0, 1.0, n)
    dt = mu.grid.dt
    times = np.where(cell == 0, 0.0, (cell - u) * dt)
    return np.sort(times)


def sample_hawkes(params: HawkesParams, rng: np.random.Generator,
                  seed: int | None = None) -> PointSample:
    """One Hawkes realization on ``[0, horizon]`` by superposing clusters."""
    T = params.horizon
    immigrants = _sample_immigrants(params.background, rng)
    if len(immigrants) == 0:
        empty_i = np.zeros(0, dtype=np.int64)
        return PointSample(np.zeros(0), empty_i, empty_i, T, params.a, seed)
    ids = np.arange(len(immigrants), dtype=np.int64)
    t, g, c = _grow(immigrants, ids, 0, params.a, params.family, T, rng, False,
                    DEFAULT_MAX_NODES)
    keep = t <= T
    t, g, c = t[keep], g[keep], c[keep]
    order = np.argsort(t, kind="stable")
    return PointSample(t[order], g[order], c[order], T, params.a, seed)


def scaled_measure(sample: PointSample, eps: float, grid: Grid) -> GridMeasure:
    """Bin the points into grid cells with mass ``eps**2`` each."""
    counts = point_counts(sample.times, grid)
    return GridMeasure.from_masses(grid, eps * eps * counts)


def point_counts(times: np.ndarray, grid: Grid) -> np.ndarray:
    """Number of points at ``0`` and in each cell ``(t_{k-1}, t_k]``."""
    idx = grid.cell_of(times)
    idx = idx[idx <= grid.n_cells]
    return np.bincount(idx, minlength=grid.n_cells + 1).astype(float)


# ---------------------------------------------------------------------------
# replications
# ---------------------------------------------------------------------------


def replication_stream(master_seed: int, r: int) -> np.random.Generator:
    """Independent generator for replication ``r`` derived from ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(r),))
    return np.random.Generator(np.random.PCG64(ss))


def _run_chunk(args):
    fn, master_seed, indices = args
    return [fn(r, replication_stream(master_seed, r)) for r in indices]


def run_replications(fn: Callable, n_reps: int, master_seed: int, threads: int = 1,
                     chunk: int = 64) -> list:
    """``[fn(r, stream(master_seed, r)) for r in range(n_reps)]``, optionally in worker processes.

    Results come back in replication order, so the output does not depend
    on the number of workers.  ``fn`` must be picklable when ``threads > 1``.
    """
    if n_reps < 0:
        raise ValueError("n_reps must be nonnegative")
    indices = list(range(n_reps))
    if threads <= 1 or n_reps <= chunk:
        return _run_chunk((fn, master_seed, indices))
    blocks: Sequence[list[int]] = [indices[i:i + chunk] for i in range(0, n_reps, chunk)]
    out: list = []
    with ProcessPoolExecutor(max_workers=threads) as pool:
        for part in pool.map(_run_chunk, [(fn, master_seed, b) for b in blocks]):
            out.extend(part)
    return out
