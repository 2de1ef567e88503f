"""Solvers for the convolutional Riccati equation ``h = (f + h**2 / 2) * rho``.

``rho`` is a (sub-)probability measure without an atom at 0, so on the grid

    h(t_k) = sum_{j=1..k} g(t_k - t_j) rho_j,    g = f + h**2 / 2,

only involves already-computed values and the equation can be marched
forward.  Windowed Picard iteration and the power series in ``f`` converge to
the same lattice fixed point and serve as independent cross-checks.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .grid_measures import GridFunction, GridMeasure, lattice_convolve

__all__ = [
    "RiccatiProblem",
    "RiccatiSolution",
    "RiccatiBlowUpError",
    "RiccatiRefusal",
    "NonContractionError",
    "BoundCertificate",
    "StabilityGap",
    "solve_marching",
    "solve_picard",
    "solve_series",
    "solve_perturbation_system",
    "solve_integrated_form",
    "solve_linear",
    "riccati_residual",
    "check_bounds",
    "check_comparison",
    "stability_gap",
]

BLOW_UP = 1e6
SERIES_TRUNCATION_FLAG = 1e-12


class RiccatiBlowUpError(ArithmeticError):
    """The marched solution left ``[-1e6, 1e6]``."""


class RiccatiRefusal(ValueError):
    """The requested method is not admissible for this problem."""


class NonContractionError(RiccatiRefusal):
    """Picard iteration is not a contraction on the chosen window."""


@dataclass(frozen=True, eq=False)
class RiccatiProblem:
    f: GridFunction
    rho: GridMeasure

    def __post_init__(self):
        if not self.f.grid.compatible(self.rho.grid):
            raise ValueError("f and rho live on different grids")
        if self.rho.atom_at_zero != 0:
            raise ValueError("Riccati kernel must not charge 0")
        if self.rho.signed:
            raise ValueError("Riccati kernel must be a nonnegative measure")
        if self.rho.total_mass > 1.0 + 1e-9:
            raise ValueError(f"Riccati kernel has mass {self.rho.total_mass} > 1")

    @property
    def grid(self):
        return self.f.grid

    @property
    def f_sup(self) -> float:
        return self.f.sup_norm()

    def default_tolerance(self) -> float:
        return max(10.0 * self.grid.dt * self.f_sup, 1e-12)


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    h: GridFunction
    residual: float
    method: str
    n_terms: int | None = None
    term_norms: np.ndarray | None = None
    truncated: bool = False
    iterations: int | None = None
    warnings: tuple = field(default=())

    def metadata(self) -> dict:
        out = {"method": self.method, "residual": self.residual}
        if self.n_terms is not None:
            out["n_terms"] = self.n_terms
            out["truncated"] = self.truncated
        if self.iterations is not None:
            out["iterations"] = self.iterations
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out

    def to_json(self) -> str:
        obj = json.loads(self.h.to_json())
        obj["metadata"] = self.metadata()
        return json.dumps(obj)


def riccati_residual(h: np.ndarray, prob: RiccatiProblem) -> float:
    """``sup_k |h - (f + h**2/2) * rho|`` on the grid."""
    g = prob.f.values + 0.5 * h * h
    rhs = lattice_convolve(g, prob.rho.masses, len(h))
    return float(np.max(np.abs(h - rhs)))


def _kernel_rev(rho: GridMeasure) -> np.ndarray:
    return rho.masses[::-1].copy()


# ---------------------------------------------------------------------------
# marching
# ---------------------------------------------------------------------------


def _march(f: np.ndarray, r_rev: np.ndarray, quad: float, lin: np.ndarray | None = None,
           outside: np.ndarray | None = None) -> np.ndarray:
    """March ``x = outside + (f + lin * x + quad * x**2) * rho`` on the lattice.

    ``r_rev`` is the reversed lattice kernel (``r_rev[-1]`` is the atom at 0,
    which must be zero).
    """
    n = len(f)
    N = len(r_rev)
    x = np.zeros(n)
    g = np.empty(n)
    for k in range(n):
        if k:
            xk = float(np.dot(g[:k], r_rev[N - 1 - k:N - 1]))
        else:
            xk = 0.0
        if outside is not None:
            xk += outside[k]
        if not abs(xk) <= BLOW_UP:
            raise RiccatiBlowUpError(f"|h| exceeded {BLOW_UP:g} at t = {k} cells")
        x[k] = xk
        gk = f[k] + quad * xk * xk
        if lin is not None:
            gk += lin[k] * xk
        g[k] = gk
    return x


def solve_marching(prob: RiccatiProblem) -> RiccatiSolution:
    """Single forward pass over the grid, ``O(n**2)``."""
    notes = []
    if float(np.max(prob.f.values)) > 0.5:
        msg = "sup f > 1/2: existence of a global solution is not guaranteed"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    h = _march(prob.f.values, _kernel_rev(prob.rho), 0.5)
    return RiccatiSolution(GridFunction(prob.grid, h), riccati_residual(h, prob),
                           "marching", warnings=tuple(notes))


def solve_integrated_form(F: GridFunction, rho: GridMeasure) -> GridFunction:
    """Solve ``K = F + (K**2 / 2) * rho`` by marching.

    With ``F = f * rho`` this is the same lattice equation as
    :func:`solve_marching`.
    """
    if rho.atom_at_zero != 0:
        raise ValueError("Riccati kernel must not charge 0")
    K = _march(np.zeros_like(F.values), _kernel_rev(rho), 0.5, outside=F.values)
    return GridFunction(F.grid, K)


def solve_linear(source: GridFunction, coef: GridFunction, rho: GridMeasure) -> GridFunction:
    """Solve the linear equation ``X = (source + coef * X) * rho`` by marching."""
    if rho.atom_at_zero != 0:
        raise ValueError("kernel must not charge 0")
    X = _march(source.values, _kernel_rev(rho), 0.0, lin=coef.values)
    return GridFunction(source.grid, X)


# ---------------------------------------------------------------------------
# Picard
# ---------------------------------------------------------------------------


def _envelope_bound(f: np.ndarray) -> float:
    fp = max(float(np.max(f)), 0.0)
    fm = max(float(-np.min(f)), 0.0)
    up = 1.0 - math.sqrt(1.0 - 2.0 * fp) if fp <= 0.5 else math.inf
    return max(fm, up)


def solve_picard(prob: RiccatiProblem, window: float, tol: float = 1e-10,
                 max_iter: int = 500) -> RiccatiSolution:
    """Window-by-window Picard iteration ``h <- (f + h**2/2) * rho``.

    On each window the contribution of the already-solved past is frozen and
    the iteration runs on the window only.  The Lipschitz constant of the map
    on a window is at most ``Q * rho[0, window]`` with ``Q`` a bound on
    ``|h|`` (the envelope bound when ``sup f <= 1/2``, otherwise the largest
    iterate seen); a window where this is ``>= 1`` is refused.
    """
    grid = prob.grid
    if window <= 0:
        raise ValueError("window must be positive")
    m = max(1, int(round(window / grid.dt)))
    f = prob.f.values
    r = prob.rho.masses
    n = len(f)
    rho_window = float(np.sum(r[: m + 1]))
    Q = _envelope_bound(f)
    h = np.zeros(n)
    total_iter = 0
    start = 1  # h(0) = 0 because rho has no atom at 0
    while start < n:
        end = min(start + m, n)  # solve on indices [start, end)
        g_hist = f[:start] + 0.5 * h[:start] ** 2
        hist = lattice_convolve(g_hist, r, end)[start:end]
        r_loc = r[: end - start + 1]
        cur = h[start:end].copy()
        for it in range(max_iter):
            q_bound = Q if math.isfinite(Q) else float(np.max(np.abs(cur)))
            if q_bound * rho_window >= 1.0:
                raise NonContractionError(
                    f"contraction factor {q_bound * rho_window:.3g} >= 1 on window "
                    f"{window}; use a smaller window"
                )
            g_loc = f[start:end] + 0.5 * cur * cur
            # r[0] = 0, so index k only sees g at earlier indices
            new = hist + np.convolve(g_loc, r_loc)[: end - start]
            diff = float(np.max(np.abs(new - cur))) if len(cur) else 0.0
            cur = new
            total_iter += 1
            if not np.all(np.abs(cur) <= BLOW_UP):
                raise RiccatiBlowUpError("Picard iterates exceeded the blow-up guard")
            if diff < tol:
                break
        else:
            raise NonContractionError("Picard iteration did not converge; use a smaller window")
        h[start:end] = cur
        start = end
    return RiccatiSolution(GridFunction(grid, h), riccati_residual(h, prob), "picard",
                           iterations=total_iter)


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------


def _series_terms(f: np.ndarray, r: np.ndarray, n_max: int) -> list[np.ndarray]:
    n = len(f)
    K = [lattice_convolve(f, r, n)]
    for order in range(2, n_max + 1):
        src = np.zeros(n)
        # symmetric sum over i + j = order
        for i in range(1, order // 2 + 1):
            j = order - i
            prod = K[i - 1] * K[j - 1]
            src += prod if i == j else 2.0 * prod
        K.append(lattice_convolve(0.5 * src, r, n))
    return K


def solve_series(prob: RiccatiProblem, n_max: int = 60) -> RiccatiSolution:
    """Partial sum ``K_1 + ... + K_{n_max}`` with ``K_1 = f * rho`` and
    ``K_n = (sum_{i=1}^{n-1} K_i K_{n-i} / 2) * rho``.

    Refused when ``sup |f| > 1/2``.  ``truncated`` is set when the last term
    still exceeds ``1e-12`` in sup norm.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if prob.f_sup > 0.5:
        raise RiccatiRefusal(
            f"series refused: sup|f| = {prob.f_sup:.4g} > 1/2, convergence not guaranteed"
        )
    K = _series_terms(prob.f.values, prob.rho.masses, n_max)
    norms = np.array([float(np.max(np.abs(k))) for k in K])
    h = np.sum(K, axis=0)
    return RiccatiSolution(GridFunction(prob.grid, h), riccati_residual(h, prob),
                           "series", n_terms=n_max, term_norms=norms,
                           truncated=bool(norms[-1] > SERIES_TRUNCATION_FLAG))


def series_terms(prob: RiccatiProblem, n_max: int) -> list[GridFunction]:
    """The individual series terms ``K_1..K_{n_max}``."""
    K = _series_terms(prob.f.values, prob.rho.masses, n_max)
    return [GridFunction(prob.grid, k) for k in K]


def solve_perturbation_system(base_f0: GridFunction, g: GridFunction, rho: GridMeasure,
                              n_max: int) -> list[GridFunction]:
    """Coefficients ``K'_0..K'_{n_max}`` of ``h[f0 + e g] = sum_n e**n K'_n``.

    ``K'_0 = h[f0]``; ``K'_1 = (g + K'_0 K'_1) * rho``; for ``n >= 2``
    ``K'_n = (K'_0 K'_n + sum_{i=1}^{n-1} K'_i K'_{n-i} / 2) * rho``.  Each
    ``n >= 1`` is a linear equation in ``K'_n`` solved by marching.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    prob = RiccatiProblem(base_f0, rho)
    if base_f0.sup_norm() + g.sup_norm() > 0.5:
        raise RiccatiRefusal("perturbation series needs sup|f0| + sup|g| <= 1/2")
    K0 = solve_marching(prob).h
    if K0.sup_norm() >= 1.0:
        raise RiccatiRefusal("sup|K'_0| >= 1: linear equations may be ill-posed")
    out = [K0]
    for order in range(1, n_max + 1):
        if order == 1:
            src = g.values
        else:
            src = np.zeros(len(g.values))
            for i in range(1, order):
                src = src + 0.5 * out[i].values * out[order - i].values
        out.append(solve_linear(GridFunction(g.grid, src), K0, rho))
    return out


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundCertificate:
    passed: bool
    kind: str
    first_violation: int | None = None
    time: float | None = None
    value: float | None = None
    bound: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_bounds(sol: RiccatiSolution, prob: RiccatiProblem, atol: float = 1e-12) -> BoundCertificate:
    """Pointwise envelope ``-sup_{[0,t]} f^- <= h(t) <= 1 - sqrt(1 - 2 sup_{[0,t]} f^+)``.

    The upper bound is checked only where ``sup_{[0,t]} f^+ <= 1/2``.
    """
    f = prob.f.values
    h = sol.h.values
    fplus = np.maximum.accumulate(np.maximum(f, 0.0))
    fminus = np.maximum.accumulate(np.maximum(-f, 0.0))
    lower = -fminus
    with np.errstate(invalid="ignore"):
        upper = np.where(fplus <= 0.5, 1.0 - np.sqrt(np.maximum(1.0 - 2.0 * fplus, 0.0)), np.inf)
    bad = np.flatnonzero((h < lower - atol) | (h > upper + atol))
    if len(bad):
        k = int(bad[0])
        bound = lower[k] if h[k] < lower[k] - atol else upper[k]
        return BoundCertificate(False, "envelope", k, float(prob.grid.times[k]),
                                float(h[k]), float(bound))
    return BoundCertificate(True, "envelope")


def check_comparison(sol1: RiccatiSolution, prob1: RiccatiProblem,
                     sol2: RiccatiSolution, prob2: RiccatiProblem,
                     atol: float = 1e-12) -> BoundCertificate:
    """Given ``f1 <= f2`` and ``h1 + h2 >= 0``, certify ``h1 <= h2`` pointwise."""
    if np.any(prob1.f.values > prob2.f.values):
        raise ValueError("comparison needs f1 <= f2")
    h1, h2 = sol1.h.values, sol2.h.values
    if np.any(h1 + h2 < -atol):
        raise ValueError("comparison needs h1 + h2 >= 0")
    bad = np.flatnonzero(h1 > h2 + atol)
    if len(bad):
        k = int(bad[0])
        return BoundCertificate(False, "comparison", k, float(prob1.grid.times[k]),
                                float(h1[k]), float(h2[k]))
    return BoundCertificate(True, "comparison")


@dataclass(frozen=True)
class StabilityGap:
    lhs: float          # int_0^T sup_{[0,t]} |h2 - h1| dt
    rhs: float          # int_0^T sup_{[0,t]} |f2 - f1| dt
    rhs_convolved: float  # same with F_i = f_i * rho
    M: float
    lambda0: float
    constant: float     # 2 exp(lambda0 T)

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else (0.0 if self.lhs == 0 else math.inf)


def _stability_lambda(M: float, rho: GridMeasure) -> float:
    t = rho.grid.times
    r = rho.masses

    def excess(lam):
        return M * float(np.sum(r * np.exp(-lam * t))) - 0.5

    if excess(0.0) <= 0:
        return 0.0
    hi = 1.0
    while excess(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("could not bracket lambda0")
    return brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-12)


def stability_gap(prob1: RiccatiProblem, prob2: RiccatiProblem,
                  sol1: RiccatiSolution | None = None,
                  sol2: RiccatiSolution | None = None) -> StabilityGap:
    """Both sides of the stability estimate and the constant ``2 exp(lambda0 T)``.

    ``lambda0`` solves ``M * int exp(-lambda u) rho(du) = 1/2`` (0 if already
    below), with ``M`` the larger sup norm of the two solutions.  Integrals
    over ``[0, T]`` are rectangle sums over the grid points.
    """
    if not prob1.grid.compatible(prob2.grid):
        raise ValueError("problems live on different grids")
    if not np.array_equal(prob1.rho.masses, prob2.rho.masses):
        raise ValueError("problems must share rho")
    sol1 = sol1 or solve_marching(prob1)
    sol2 = sol2 or solve_marching(prob2)
    dt = prob1.grid.dt
    dh = np.maximum.accumulate(np.abs(sol2.h.values - sol1.h.values))
    df = np.maximum.accumulate(np.abs(prob2.f.values - prob1.f.values))
    r = prob1.rho.masses
    n = len(df)
    dF = np.maximum.accumulate(np.abs(lattice_convolve(prob2.f.values - prob1.f.values, r, n)))
    M = max(sol1.h.sup_norm(), sol2.h.sup_norm())
    lam = _stability_lambda(M, prob1.rho)
    return StabilityGap(dt * float(dh.sum()), dt * float(df.sum()), dt * float(dF.sum()),
                        M, lam, 2.0 * math.exp(lam * prob1.grid.horizon))
