"""Laplace functionals, cumulants, first moments and covariances of the limit measure.

For a Feller random measure ``xi ~ F(mu, rho)`` and a test function ``f``,

    E exp((f * xi)(t)) = exp((h[f] * mu)(t)),

with ``h[f]`` the solution of the convolutional Riccati equation.  Expanding
``h[eps f] = sum_n eps**n K_n`` gives the cumulants ``kappa_n = n! K_n * mu``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve

from .grid_measures import Grid, GridFunction, GridMeasure, convolve_fn_measure, lattice_convolve
from .kernels import Exponential, KernelSpec, MittagLeffler, GIDTriplet
from .mittag_leffler import mittag_leffler_density
from .riccati import (
    RiccatiProblem,
    series_terms,
    solve_marching,
    solve_perturbation_system,
)

__all__ = [
    "LaplaceCurve",
    "CumulantReport",
    "CovarianceGrid",
    "limit_laplace",
    "log_limit_laplace",
    "functional_values",
    "laplace_from_values",
    "empirical_laplace",
    "cumulants",
    "partial_cumulants",
    "moments_from_cumulants",
    "first_moment",
    "covariance_functional",
    "covariance_kernel",
    "b_alpha_envelope",
]


@dataclass(frozen=True, eq=False)
class LaplaceCurve:
    """``M(t) = E exp((f * xi)(t))`` at the listed times, with optional MC standard errors."""

    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray | None = None

    def at(self, t: float) -> float:
        k = int(np.argmin(np.abs(self.times - t)))
        return float(self.values[k])

    def stderr_at(self, t: float) -> float:
        if self.stderr is None:
            return 0.0
        k = int(np.argmin(np.abs(self.times - t)))
        return float(self.stderr[k])

    def to_dict(self) -> dict:
        out = {"t": self.times.tolist(), "value": self.values.tolist()}
        if self.stderr is not None:
            out["stderr"] = self.stderr.tolist()
        return out


# ---------------------------------------------------------------------------
# Laplace functionals
# ---------------------------------------------------------------------------


def log_limit_laplace(f: GridFunction, rho: GridMeasure, mu: GridMeasure) -> GridFunction:
    """``(h[f] * mu)(t)`` on the grid."""
    h = solve_marching(RiccatiProblem(f, rho)).h
    return convolve_fn_measure(h, mu)


def limit_laplace(f: GridFunction, rho: GridMeasure, mu: GridMeasure) -> LaplaceCurve:
    """``exp((h[f] * mu)(t))`` at every grid point."""
    logm = log_limit_laplace(f, rho, mu)
    return LaplaceCurve(f.grid.times, np.exp(logm.values))


def functional_values(xi: GridMeasure, f: GridFunction, t_list: Sequence[float]) -> np.ndarray:
    """``(f * xi)(t)`` for each ``t`` in ``t_list`` (nearest grid points)."""
    grid = f.grid
    m = xi.masses
    out = np.empty(len(t_list))
    for i, t in enumerate(t_list):
        k = grid.index_of(t)
        out[i] = float(np.dot(f.values[k::-1], m[: k + 1]))
    return out


def laplace_from_values(values: np.ndarray, t_list: Sequence[float]) -> LaplaceCurve:
    """Monte Carlo estimate from an array ``values[replication, t]`` of ``(f * xi)(t)``."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] == 0:
        raise ValueError("no samples")
    e = np.exp(values)
    n = e.shape[0]
    mean = e.mean(axis=0)
    se = e.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(e.shape[1])
    return LaplaceCurve(np.asarray(t_list, dtype=float), mean, se)


def empirical_laplace(samples: Sequence[GridMeasure], f: GridFunction,
                      t_list: Sequence[float], *, allow_positive: bool = False) -> LaplaceCurve:
    """Sample mean of ``exp((f * xi)(t))`` over the sampled measures, with standard errors.

    Positive test functions are refused unless ``allow_positive`` is set, since
    exponential moments are only finite up to a threshold.
    """
    if len(samples) == 0:
        raise ValueError("empty sample list")
    if not allow_positive and np.any(f.values > 0):
        raise ValueError("f takes positive values; pass allow_positive=True to override")
    vals = np.array([functional_values(xi, f, t_list) for xi in samples])
    return laplace_from_values(vals, t_list)


# ---------------------------------------------------------------------------
# cumulants
# ---------------------------------------------------------------------------


def moments_from_cumulants(kappas: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Raw moments ``m_1..m_n`` from cumulants ``kappa_1..kappa_n`` (n <= 6).

    Uses ``m_n = sum_{k=0}^{n-1} C(n-1, k) kappa_{k+1} m_{n-1-k}``.
    """
    if len(kappas) > 6:
        raise ValueError("moment conversion is provided up to order 6")
    m = [np.ones_like(np.asarray(kappas[0], dtype=float))]
    for n in range(1, len(kappas) + 1):
        total = np.zeros_like(m[0])
        for k in range(n):
            total = total + math.comb(n - 1, k) * np.asarray(kappas[k]) * m[n - 1 - k]
        m.append(total)
    return m[1:]


@dataclass(frozen=True, eq=False)
class CumulantReport:
    """``kappa_n(t)`` for ``n = 1..n_max`` (index 0 holds ``kappa'_0`` for partial cumulants)."""

    grid: Grid
    kappas: list
    K_terms: list
    start_order: int = 1

    def kappa(self, n: int) -> GridFunction:
        return self.kappas[n - self.start_order]

    def moments(self) -> list[GridFunction]:
        if self.start_order != 1:
            raise ValueError("moments need ordinary cumulants")
        m = moments_from_cumulants([k.values for k in self.kappas[:6]])
        return [GridFunction(self.grid, v) for v in m]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        orders = range(self.start_order, self.start_order + len(self.kappas))
        w.writerow(["t"] + [f"k{n}" for n in orders])
        cols = [k.values for k in self.kappas]
        for i, t in enumerate(self.grid.times):
            w.writerow([repr(float(t))] + [repr(float(c[i])) for c in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def cumulants(f: GridFunction, rho: GridMeasure, mu: GridMeasure, n_max: int) -> CumulantReport:
    """``kappa_n = n! (K_n * mu)`` with ``K_1 = f * rho`` and the series recursion for ``K_n``."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    K = series_terms(RiccatiProblem(f, rho), n_max)
    kappas = [convolve_fn_measure(k, mu) * math.factorial(n)
              for n, k in enumerate(K, start=1)]
    return CumulantReport(f.grid, kappas, K)


def partial_cumulants(f0: GridFunction, f: GridFunction, rho: GridMeasure, mu: GridMeasure,
                      n_max: int) -> CumulantReport:
    """``kappa'_n = n! (K'_n * mu)`` for ``n = 0..n_max`` from the perturbation system.

    ``kappa'_0 = h[f0] * mu`` is the log-Laplace functional at ``f0``.
    """
    Kp = solve_perturbation_system(f0, f, rho, n_max)
    kappas = [convolve_fn_measure(k, mu) * math.factorial(n) for n, k in enumerate(Kp)]
    return CumulantReport(f.grid, kappas, Kp, start_order=0)


def first_moment(f: GridFunction, a: float, rho: GridMeasure, mu: GridMeasure,
                 prelimit: bool = True) -> GridFunction:
    """``f * (rho * mu) / (1 - a)``; without the factor when ``prelimit`` is false."""
    if not (0.0 <= a < 1.0):
        raise ValueError("a must lie in [0, 1)")
    rm = lattice_convolve(rho.masses, mu.masses, f.grid.n_cells + 1)
    out = lattice_convolve(f.values, rm, f.grid.n_cells + 1)
    if prelimit:
        out = out / (1.0 - a)
    return GridFunction(f.grid, out)


def covariance_functional(f: GridFunction, g: GridFunction, rho: GridMeasure,
                          mu: GridMeasure) -> GridFunction:
    """``Cov[(f * xi)(t), (g * xi)(t)] = (((f * rho)(g * rho)) * rho) * mu``."""
    n = f.grid.n_cells + 1
    fr = lattice_convolve(f.values, rho.masses, n)
    gr = lattice_convolve(g.values, rho.masses, n)
    inner = lattice_convolve(fr * gr, rho.masses, n)
    return GridFunction(f.grid, lattice_convolve(inner, mu.masses, n))


# ---------------------------------------------------------------------------
# covariance density
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CovarianceGrid:
    """``Sigma(r, s)`` on a product of grid times."""

    r_times: np.ndarray
    s_times: np.ndarray
    sigma: np.ndarray
    alpha: float | None = None
    mu_kind: str = "grid"

    def envelope_ratios(self, r_min: float = 0.1, gap_min: float = 0.05,
                        t_max: float | None = None) -> np.ndarray:
        """``Sigma / B_alpha`` on the off-diagonal region (other entries NaN)."""
        if self.alpha is None:
            raise ValueError("envelope needs a Mittag-Leffler alpha")
        R, S = np.meshgrid(self.r_times, self.s_times, indexing="ij")
        ok = (np.minimum(R, S) >= r_min - 1e-12) & (np.abs(R - S) >= gap_min - 1e-12)
        if t_max is not None:
            ok &= (R <= t_max + 1e-12) & (S <= t_max + 1e-12)
        out = np.full(R.shape, np.nan)
        B = b_alpha_envelope(self.alpha, R[ok], S[ok])
        out[ok] = self.sigma[ok] / B
        return out

    def envelope_constant(self, **kw) -> float:
        """Smallest ``C`` with ``Sigma / B_alpha`` in ``[1/C, C]`` on the region."""
        ratios = self.envelope_ratios(**kw)
        v = ratios[np.isfinite(ratios)]
        return float(max(v.max(), 1.0 / v.min()))

    def envelope_fit(self, **kw) -> tuple[float, float]:
        """``(c, C)``: best scale ``c`` and smallest ``C`` with ``Sigma / (c B_alpha)`` in ``[1/C, C]``."""
        ratios = self.envelope_ratios(**kw)
        v = ratios[np.isfinite(ratios)]
        return float(np.sqrt(v.max() * v.min())), float(np.sqrt(v.max() / v.min()))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r\\s"] + [repr(float(s)) for s in self.s_times])
        for r, row in zip(self.r_times, self.sigma):
            w.writerow([repr(float(r))] + [repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def metadata_json(self) -> str:
        return json.dumps({"alpha": self.alpha, "mu_kind": self.mu_kind}, sort_keys=True)


def _ml_parts(kernel: KernelSpec):
    """``(alpha, scale)`` for kernels with a density of Mittag-Leffler type."""
    if isinstance(kernel, Exponential):
        return 1.0, 1.0 / kernel.rate
    if isinstance(kernel, MittagLeffler):
        return kernel.alpha, kernel.scale
    if isinstance(kernel, GIDTriplet) and kernel.jump_rate == 0:
        return 1.0, kernel.drift
    raise ValueError(
        f"{type(kernel).__name__} has no density handled here; the measure-form "
        "covariance is not implemented"
    )


def covariance_kernel(kernel: KernelSpec, mu: GridMeasure, grid: Grid | None = None,
                      r_times: Sequence[float] | None = None,
                      s_times: Sequence[float] | None = None) -> CovarianceGrid:
    """``Sigma(r, s) = int_0^{min(r,s)} p(r-u) p(s-u) (p * mu)(u) du``.

    ``p(t) = t**(alpha-1) q(t)`` with ``q`` bounded.  The ``u``-integral is a
    midpoint rule on the grid cells in which the singular factor
    ``(r - u)**(alpha - 1)`` is integrated exactly over each cell (on the
    diagonal the factor is ``(r - u)**(2 alpha - 2)``, integrable only for
    ``alpha > 1/2``; otherwise the diagonal is ``inf``).  ``p * mu`` is
    evaluated at cell midpoints treating ``mu`` as piecewise constant on the
    cells, which is exact for Lebesgue measure.
    """
    alpha, scale = _ml_parts(kernel)
    grid = grid or mu.grid
    if not grid.compatible(mu.grid):
        raise ValueError("mu lives on a different grid")
    dt = grid.dt
    n = grid.n_cells
    r_idx = np.arange(n + 1) if r_times is None else np.array([grid.index_of(t) for t in r_times])
    s_idx = np.arange(n + 1) if s_times is None else np.array([grid.index_of(t) for t in s_times])

    half = (np.arange(n) + 0.5) * dt  # cell midpoints u_i, i = 0..n-1
    x = half / scale
    if alpha == 1.0:
        q_half = np.exp(-x) / scale
    else:
        # q(t) = p(t) t^{1-alpha}, scaled density p_s(t) = p(t/scale)/scale
        q_half = mittag_leffler_density(alpha, x) * x ** (1.0 - alpha) / scale ** alpha
    p_half = q_half * half ** (alpha - 1.0)

    # (p * mu)(u_i), mu piecewise constant on cells plus its atom at 0:
    # cell j contributes dens_j [F(u_i - t_{j-1}) - F(u_i - t_j)], a function of i - j
    F_half = kernel.cdf(half)
    D = np.diff(F_half, prepend=0.0)
    P = fftconvolve(mu.cell_mass / dt, D)[:n] + mu.atom_at_zero * p_half

    rows = {}
    for a in sorted(set(r_idx.tolist()) | set(s_idx.tolist())):
        if a == 0:
            continue
        i = np.arange(a)
        left = a * dt - i * dt
        right = np.maximum(left - dt, 0.0)
        W = (left ** alpha - right ** alpha) / alpha
        base = q_half[a - 1 - i] * P[:a]
        # entry b - 1 of the convolution is Sigma(t_a, t_b) for b > a
        row = fftconvolve(W * base, p_half)
        if alpha > 0.5:
            e = 2.0 * alpha - 1.0
            W2 = (left ** e - right ** e) / e
            diag = float(np.sum(W2 * q_half[a - 1 - i] * base))
        else:
            diag = math.inf
        rows[a] = (row, diag)

    sigma = np.zeros((len(r_idx), len(s_idx)))
    for ia, a in enumerate(r_idx):
        for ib, b in enumerate(s_idx):
            if a == 0 or b == 0:
                continue
            lo, hi = (a, b) if a <= b else (b, a)
            row, diag = rows[lo]
            sigma[ia, ib] = diag if lo == hi else row[hi - 1]
    return CovarianceGrid(r_idx * dt, s_idx * dt, sigma, alpha=alpha, mu_kind="grid")


def b_alpha_envelope(alpha: float, r, s):
    """Off-diagonal envelope ``B_alpha(r, s)`` (symmetric in ``r``, ``s``)."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(r == s):
        raise ValueError("B_alpha is defined off the diagonal only")
    if np.any((r <= 0) | (s <= 0)):
        raise ValueError("r and s must be positive")
    lo = np.minimum(r, s)
    hi = np.maximum(r, s)
    x = lo / hi
    base = lo ** (2 * alpha) * hi ** (alpha - 1)
    if alpha < 0.5:
        factor = (1.0 - x) ** (2 * alpha - 1)
    elif alpha == 0.5:
        factor = 1.0 - np.log1p(-x)
    else:
        factor = np.ones_like(x)
    out = base * factor
    return float(out) if out.ndim == 0 else out
