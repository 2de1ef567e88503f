"""Excitation kernels: closed-form families, GID triplets, sampling and mixtures.

Every kernel is a probability law on ``[0, inf)``.  The GID (geometrically
infinitely divisible) variants are described by their Laplace transform

    rho_hat(lam) = 1 / (1 + phi(lam)),

where ``phi`` is the Laplace exponent of a subordinator.  Exponential and
Mittag-Leffler laws are the cases ``phi(lam) = lam / rate`` and
``phi(lam) = (scale * lam) ** alpha``; :class:`GIDTriplet` covers a drift plus a
finite jump measure, ``phi(lam) = L lam + sum_j w_j (1 - exp(-lam b_j))``.

GID laws can be *thinned*: ``thin(eps)`` multiplies ``phi`` by ``eps``.  A
Hawkes process with branching ratio ``a = 1 - eps`` and generation kernel
``rho.thin(eps)`` then has geometric mixture ``eps * delta_0 + (1 - eps) * rho``
exactly, which is how the near-critical experiments are parametrized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, stats

from .grid_measures import Grid, GridMeasure, convolve_measures, lattice_convolve
from .mittag_leffler import (
    mittag_leffler_cdf,
    mittag_leffler_density,
    mittag_leffler_survival,
)

__all__ = [
    "KernelSpec",
    "Exponential",
    "MittagLeffler",
    "GIDTriplet",
    "Deterministic",
    "Empirical",
    "Pareto",
    "KernelFamily",
    "RowConstant",
    "Periodic",
    "Scaled",
    "spec_from_dict",
    "family_from_dict",
    "discretize_kernel",
    "sample_kernel",
    "sample_positive_stable",
    "convolution_power",
    "geometric_mixture",
    "null_array_sup",
    "tail_ratio_diagnostic",
    "average_exponent",
    "mittag_leffler_density",
]

# largest number of distinct atoms tolerated when enumerating jump convolutions
_MAX_ATOMS = 200_000


# ---------------------------------------------------------------------------
# kernel specifications
# ---------------------------------------------------------------------------


class KernelSpec:
    """Base class for kernel laws.  Subclasses are frozen dataclasses."""

    type_name: str = ""
    is_gid: bool = False

    def cdf(self, t):
        raise NotImplementedError

    def survival(self, t):
        return 1.0 - np.asarray(self.cdf(t), dtype=float)

    @property
    def atom_at_zero(self) -> float:
        return 0.0

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def laplace(self, lam):
        raise NotImplementedError

    def rescaled(self, c: float) -> "KernelSpec":
        """Law of ``c * X``."""
        raise NotImplementedError(f"{type(self).__name__} cannot be rescaled")

    def thin(self, eps: float) -> "KernelSpec":
        """GID kernel whose Laplace exponent is ``eps`` times this one's."""
        raise ValueError(f"{type(self).__name__} is not GID and cannot be thinned")

    def to_dict(self) -> dict:
        raise NotImplementedError


def _check_eps(eps: float) -> None:
    if not (0.0 < eps <= 1.0):
        raise ValueError(f"eps must lie in (0, 1], got {eps}")


@dataclass(frozen=True)
class Exponential(KernelSpec):
    rate: float
    type_name = "exponential"
    is_gid = True

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be positive, got {self.rate}")

    def cdf(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return -np.expm1(-self.rate * t)

    def survival(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return np.exp(-self.rate * t)

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    def laplace(self, lam):
        return self.rate / (self.rate + np.asarray(lam, dtype=float))

    def rescaled(self, c: float) -> "Exponential":
        return Exponential(self.rate / c)

    def thin(self, eps: float) -> "Exponential":
        _check_eps(eps)
        return Exponential(self.rate / eps)

    def to_dict(self) -> dict:
        return {"type": self.type_name, "rate": self.rate}


@dataclass(frozen=True)
class MittagLeffler(KernelSpec):
    """Law of ``scale * Y`` with ``E exp(-lam Y) = 1 / (1 + lam**alpha)``."""

    alpha: float
    scale: float = 1.0
    type_name = "mittag_leffler"
    is_gid = True

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive, got {self.scale}")

    def cdf(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return mittag_leffler_cdf(self.alpha, t / self.scale)

    def survival(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return mittag_leffler_survival(self.alpha, t / self.scale)

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return mittag_leffler_density(self.alpha, t / self.scale) / self.scale

    @property
    def mean(self) -> float:
        return self.scale if self.alpha == 1.0 else math.inf

    def laplace(self, lam):
        return 1.0 / (1.0 + (self.scale * np.asarray(lam, dtype=float)) ** self.alpha)

    def rescaled(self, c: float) -> "MittagLeffler":
        return MittagLeffler(self.alpha, self.scale * c)

    def thin(self, eps: float) -> "MittagLeffler":
        _check_eps(eps)
        return MittagLeffler(self.alpha, self.scale * eps ** (1.0 / self.alpha))

    def to_dict(self) -> dict:
        return {"type": self.type_name, "alpha": self.alpha, "scale": self.scale}


@dataclass(frozen=True)
class GIDTriplet(KernelSpec):
    """Subordinator with drift ``drift`` and jumps ``sum_j weights[j] delta_{locations[j]}``
    evaluated at an independent Exp(1) time.

    The jump measure is finite with support in ``(0, inf)``.  With
    ``drift = 0`` the law has an atom ``1 / (1 + total jump rate)`` at zero.
    """

    drift: float = 0.0
    jump_locations: tuple = ()
    jump_weights: tuple = ()
    type_name = "gid"
    is_gid = True

    def __post_init__(self):
        locs = tuple(float(x) for x in np.atleast_1d(self.jump_locations))
        wts = tuple(float(x) for x in np.atleast_1d(self.jump_weights))
        object.__setattr__(self, "jump_locations", locs)
        object.__setattr__(self, "jump_weights", wts)
        if len(locs) != len(wts):
            raise ValueError("jump_locations and jump_weights differ in length")
        if self.drift < 0 or not math.isfinite(self.drift):
            raise ValueError(f"drift must be nonnegative, got {self.drift}")
        if any(b <= 0 or not math.isfinite(b) for b in locs):
            raise ValueError("jump measure must not charge 0 (locations must be > 0)")
        if any(w < 0 or not math.isfinite(w) for w in wts):
            raise ValueError("jump weights must be nonnegative and finite")
        if self.drift == 0 and self.jump_rate == 0:
            raise ValueError("GID triplet with zero drift and zero jumps is degenerate")

    @classmethod
    def from_grid_measure(cls, drift: float, nu: GridMeasure) -> "GIDTriplet":
        if nu.atom_at_zero != 0:
            raise ValueError("jump measure has an atom at 0")
        idx = np.flatnonzero(nu.cell_mass > 0) + 1
        return cls(drift, tuple(nu.grid.times[idx]), tuple(nu.masses[idx]))

    @property
    def jump_rate(self) -> float:
        return float(sum(self.jump_weights))

    @property
    def atom_at_zero(self) -> float:
        return 1.0 / (1.0 + self.jump_rate) if self.drift == 0 else 0.0

    @property
    def mean(self) -> float:
        return self.drift + float(np.dot(self.jump_weights, self.jump_locations))

    def exponent(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = self.drift * lam
        for b, w in zip(self.jump_locations, self.jump_weights):
            out = out - w * np.expm1(-lam * b)
        return out

    def laplace(self, lam):
        return 1.0 / (1.0 + self.exponent(lam))

    def rescaled(self, c: float) -> "GIDTriplet":
        return GIDTriplet(self.drift * c, tuple(c * b for b in self.jump_locations),
                          self.jump_weights)

    def thin(self, eps: float) -> "GIDTriplet":
        _check_eps(eps)
        return GIDTriplet(self.drift * eps, self.jump_locations,
                          tuple(eps * w for w in self.jump_weights))

    def _jump_law(self):
        c = self.jump_rate
        locs = np.asarray(self.jump_locations)
        probs = np.asarray(self.jump_weights) / c if c > 0 else np.zeros(0)
        return c, locs, probs

    def _mixture_terms(self, t_max: float, tol: float = 1e-15):
        """Yield ``(k, weight_k, atoms_k, probs_k)`` for the jump-count mixture.

        Given ``k`` jumps, the drift part is Gamma(k+1, rate (1+c)/drift) and
        the jump part is the k-fold convolution of the normalized jump law.
        """
        c, locs, probs = self._jump_law()
        q = c / (1.0 + c)
        b_min = float(locs[probs > 0].min()) if c > 0 else math.inf
        atoms = np.zeros(1)
        p = np.ones(1)
        k = 0
        while True:
            wk = (1.0 - q) * q ** k
            keep = atoms <= t_max * (1 + 1e-12)
            yield k, wk, atoms[keep], p[keep]
            k += 1
            if c == 0 or q ** k < tol or k * b_min > t_max * (1 + 1e-12):
                return
            # convolve the atom list with the jump law, merging equal sums
            sums = (atoms[:, None] + locs[None, :]).ravel()
            mass = (p[:, None] * probs[None, :]).ravel()
            sel = (mass > 0) & (sums <= t_max * (1 + 1e-12))
            key = np.round(sums[sel], 12)
            atoms, inv = np.unique(key, return_inverse=True)
            p = np.bincount(inv, weights=mass[sel], minlength=len(atoms))
            if len(atoms) > _MAX_ATOMS:
                raise RuntimeError("jump-measure convolution has too many atoms")
            if len(atoms) == 0:
                return

    def cdf(self, t):
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        t_max = float(np.max(t)) if t.size else 0.0
        c = self.jump_rate
        for k, wk, atoms, probs in self._mixture_terms(max(t_max, 0.0)):
            for b, pb in zip(atoms, probs):
                s = t - b
                if self.drift > 0:
                    g = stats.gamma.cdf(np.maximum(s, 0.0), k + 1,
                                        scale=self.drift / (1.0 + c))
                    out += wk * pb * np.where(s >= 0, g, 0.0)
                else:
                    out += wk * pb * (s >= -1e-12)
        out = np.minimum(out, 1.0)
        return float(out[0]) if scalar else out

    def to_dict(self) -> dict:
        return {
            "type": self.type_name,
            "drift": self.drift,
            "jump_locations": list(self.jump_locations),
            "jump_weights": list(self.jump_weights),
        }


@dataclass(frozen=True)
class Deterministic(KernelSpec):
    location: float
    type_name = "deterministic"

    def __post_init__(self):
        if not (self.location > 0 and math.isfinite(self.location)):
            raise ValueError(f"location must be positive, got {self.location}")

    def cdf(self, t):
        return (np.asarray(t, dtype=float) >= self.location).astype(float)

    @property
    def mean(self) -> float:
        return self.location

    def laplace(self, lam):
        return np.exp(-np.asarray(lam, dtype=float) * self.location)

    def rescaled(self, c: float) -> "Deterministic":
        return Deterministic(self.location * c)

    def to_dict(self) -> dict:
        return {"type": self.type_name, "location": self.location}


@dataclass(frozen=True)
class Pareto(KernelSpec):
    """Tail ``P(X >= t) = min(1, (t / scale) ** -index)``."""

    index: float
    scale: float = 1.0
    type_name = "pareto"

    def __post_init__(self):
        if not (self.index > 0 and self.scale > 0):
            raise ValueError("Pareto index and scale must be positive")

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return np.minimum(1.0, (np.maximum(t, 0.0) / self.scale) ** (-self.index))

    def cdf(self, t):
        return 1.0 - self.survival(t)

    @property
    def mean(self) -> float:
        return self.scale * self.index / (self.index - 1.0) if self.index > 1 else math.inf

    def rescaled(self, c: float) -> "Pareto":
        return Pareto(self.index, self.scale * c)

    def to_dict(self) -> dict:
        return {"type": self.type_name, "index": self.index, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class Empirical(KernelSpec):
    """A probability measure given on a grid (atoms at the right cell endpoints)."""

    measure: GridMeasure
    type_name = "empirical"

    def __post_init__(self):
        m = self.measure
        if m.signed:
            raise ValueError("empirical kernel must be nonnegative")
        if m.atom_at_zero != 0:
            raise ValueError("empirical kernel must not charge 0")
        if abs(m.total_mass - 1.0) > 1e-12:
            raise ValueError(f"empirical kernel has mass {m.total_mass}, expected 1")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        F = self.measure.cdf()
        idx = np.floor(t / self.measure.grid.dt + 1e-9).astype(np.int64)
        idx = np.clip(idx, -1, self.measure.grid.n_cells)
        return np.where(idx < 0, 0.0, F[np.maximum(idx, 0)])

    @property
    def mean(self) -> float:
        return float(np.dot(self.measure.grid.times, self.measure.masses))

    def laplace(self, lam):
        lam = np.asarray(lam, dtype=float)
        return np.sum(self.measure.masses * np.exp(-np.multiply.outer(lam, self.measure.grid.times)), axis=-1)

    def to_dict(self) -> dict:
        g = self.measure.grid
        return {"type": self.type_name, "horizon": g.horizon, "dt": g.dt,
                "data": self.measure.cell_mass.tolist()}


_SPEC_TYPES = {
    "exponential": Exponential,
    "mittag_leffler": MittagLeffler,
    "gid": GIDTriplet,
    "deterministic": Deterministic,
    "pareto": Pareto,
}


def spec_from_dict(d: dict) -> KernelSpec:
    """Build a kernel from a tagged record such as ``{type = "exponential", rate = 1.0}``."""
    d = dict(d)
    try:
        kind = d.pop("type")
    except KeyError:
        raise ValueError("kernel record needs a 'type' field") from None
    if kind == "empirical":
        grid = Grid(d["horizon"], d["dt"])
        return Empirical(GridMeasure(grid, 0.0, np.asarray(d["data"], dtype=float)))
    if kind not in _SPEC_TYPES:
        raise ValueError(f"unknown kernel type {kind!r}; expected one of "
                         f"{sorted(_SPEC_TYPES) + ['empirical']}")
    cls = _SPEC_TYPES[kind]
    try:
        if cls is GIDTriplet:
            return GIDTriplet(d.pop("drift", 0.0), tuple(d.pop("jump_locations", ())),
                              tuple(d.pop("jump_weights", ())), **d)
        return cls(**d)
    except TypeError as exc:
        raise ValueError(f"bad fields for kernel type {kind!r}: {exc}") from None


# ---------------------------------------------------------------------------
# kernel families (generation-dependent kernels)
# ---------------------------------------------------------------------------


class KernelFamily:
    def kernel(self, m: int) -> KernelSpec:
        """Kernel of generation ``m >= 1``."""
        raise NotImplementedError

    def one_period(self) -> list[KernelSpec]:
        raise NotImplementedError


@dataclass(frozen=True)
class RowConstant(KernelFamily):
    spec: KernelSpec

    def kernel(self, m: int) -> KernelSpec:
        return self.spec

    def one_period(self) -> list[KernelSpec]:
        return [self.spec]


@dataclass(frozen=True)
class Periodic(KernelFamily):
    """Generation ``m`` uses ``specs[(m - 1) % period]``."""

    specs: tuple

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        if len(self.specs) < 1:
            raise ValueError("periodic family needs at least one kernel")

    @property
    def period(self) -> int:
        return len(self.specs)

    def kernel(self, m: int) -> KernelSpec:
        return self.specs[(m - 1) % self.period]

    def one_period(self) -> list[KernelSpec]:
        return list(self.specs)


@dataclass(frozen=True)
class Scaled(KernelFamily):
    """``pi(B) = base(n B)``, i.e. the law of ``X / n``."""

    base: KernelSpec
    n: float

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError("scaling factor n must be positive")

    @property
    def spec(self) -> KernelSpec:
        return self.base.rescaled(1.0 / self.n)

    def kernel(self, m: int) -> KernelSpec:
        return self.spec

    def one_period(self) -> list[KernelSpec]:
        return [self.spec]


def family_from_dict(d: dict) -> KernelFamily:
    d = dict(d)
    mode = d.pop("mode", "row_constant")
    if mode == "row_constant":
        return RowConstant(spec_from_dict(d["kernel"]))
    if mode == "periodic":
        return Periodic(tuple(spec_from_dict(s) for s in d["kernels"]))
    if mode == "scaled":
        return Scaled(spec_from_dict(d["kernel"]), float(d["n"]))
    raise ValueError(f"unknown kernel family mode {mode!r}")


def average_exponent(specs: Sequence[KernelSpec]) -> KernelSpec:
    """GID kernel whose Laplace exponent is the average of the given ones.

    This is the limit kernel of a periodic family whose members are thinned
    GID kernels.  Supported combinations: all Exponential / drift-only GID /
    GID triplets (drifts and jump measures average), or Mittag-Leffler laws
    sharing one ``alpha``.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one kernel")
    if len(specs) == 1:
        return specs[0]
    if all(isinstance(s, MittagLeffler) for s in specs) and len({s.alpha for s in specs}) == 1:
        alpha = specs[0].alpha
        if alpha == 1.0:
            return Exponential(1.0 / float(np.mean([s.scale for s in specs])))
        s_alpha = float(np.mean([s.scale ** alpha for s in specs]))
        return MittagLeffler(alpha, s_alpha ** (1.0 / alpha))
    triplets = []
    for s in specs:
        if isinstance(s, Exponential):
            triplets.append(GIDTriplet(1.0 / s.rate))
        elif isinstance(s, MittagLeffler) and s.alpha == 1.0:
            triplets.append(GIDTriplet(s.scale))
        elif isinstance(s, GIDTriplet):
            triplets.append(s)
        else:
            raise ValueError(f"cannot average the Laplace exponent of {s!r}")
    d = len(triplets)
    drift = sum(t.drift for t in triplets) / d
    jumps: dict[float, float] = {}
    for t in triplets:
        for b, w in zip(t.jump_locations, t.jump_weights):
            jumps[b] = jumps.get(b, 0.0) + w / d
    if not jumps:
        return Exponential(1.0 / drift)
    locs = tuple(sorted(jumps))
    return GIDTriplet(drift, locs, tuple(jumps[b] for b in locs))


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------


def _discretize_gid(spec: GIDTriplet, grid: Grid) -> GridMeasure:
    n = grid.n_cells + 1
    T = grid.horizon
    c = spec.jump_rate
    if spec.drift > 0:
        F = stats.gamma.cdf  # noqa: N806
        theta = (1.0 + c) / spec.drift
    total = np.zeros(n)
    for k, wk, atoms, probs in spec._mixture_terms(T):
        # lattice image of the k-fold jump law
        jump = np.zeros(n)
        idx = grid.cell_of(atoms)
        ok = idx < n
        np.add.at(jump, idx[ok], probs[ok])
        if spec.drift > 0:
            G = F(grid.times, k + 1, scale=1.0 / theta)
            base = np.empty(n)
            base[0] = G[0]
            base[1:] = np.diff(G)
        else:
            base = np.zeros(n)
            base[0] = 1.0
        total += wk * lattice_convolve(base, jump, n)
    total = np.maximum(total, 0.0)
    # FFT round-off must not create an atom at 0 when the law has none
    total[0] = spec.atom_at_zero
    return GridMeasure.from_masses(grid, total, tail_mass=max(1.0 - total.sum(), 0.0))


def discretize_kernel(spec: KernelSpec, grid: Grid) -> GridMeasure:
    """Probability kernel on the grid; mass beyond the horizon goes to ``tail_mass``.

    Closed-form laws use exact CDF increments.  A GID triplet is expanded over
    the number of jumps (geometric), each term a Gamma drift part convolved
    with a convolution power of the jump law; jump locations are assigned to
    the grid cell containing them.
    """
    if isinstance(spec, Empirical):
        if not spec.measure.grid.compatible(grid):
            raise ValueError("empirical kernel lives on a different grid")
        return spec.measure
    if isinstance(spec, Deterministic):
        return GridMeasure.dirac(grid, spec.location)
    if isinstance(spec, GIDTriplet):
        if spec.jump_rate == 0:
            return discretize_kernel(Exponential(1.0 / spec.drift), grid)
        return _discretize_gid(spec, grid)
    return GridMeasure.from_cdf(grid, spec.cdf, total=1.0)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_positive_stable(alpha: float, rng: np.random.Generator, size=None):
    """Positive ``alpha``-stable draws with ``E exp(-lam S) = exp(-lam**alpha)`` (Kanter)."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("positive stable law needs alpha in (0, 1)")
    u = rng.uniform(0.0, np.pi, size)
    w = rng.standard_exponential(size)
    a = np.sin(alpha * u) / np.sin(u) ** (1.0 / alpha)
    b = (np.sin((1.0 - alpha) * u) / w) ** ((1.0 - alpha) / alpha)
    return a * b


def sample_kernel(spec: KernelSpec, rng: np.random.Generator, size=None):
    """Exact draws from ``spec``.

    Mittag-Leffler draws use ``scale * E**(1/alpha) * S`` with ``E ~ Exp(1)``
    and ``S`` positive stable; its Laplace transform is
    ``E exp(-(scale lam)**alpha E) = 1 / (1 + (scale lam)**alpha)``.  GID
    triplets are the subordinator (drift plus compound Poisson jumps)
    evaluated at an independent Exp(1) time.
    """
    scalar = size is None
    m = 1 if scalar else int(np.prod(size))
    if isinstance(spec, Exponential):
        out = rng.exponential(1.0 / spec.rate, m)
    elif isinstance(spec, MittagLeffler):
        if spec.alpha == 1.0:
            out = spec.scale * rng.standard_exponential(m)
        else:
            e = rng.standard_exponential(m)
            s = sample_positive_stable(spec.alpha, rng, m)
            out = spec.scale * e ** (1.0 / spec.alpha) * s
    elif isinstance(spec, GIDTriplet):
        e = rng.standard_exponential(m)
        out = spec.drift * e
        c, locs, probs = spec._jump_law()
        if c > 0:
            counts = rng.poisson(c * e)
            total = int(counts.sum())
            if total:
                jumps = locs[rng.choice(len(locs), total, p=probs)] if len(locs) > 1 \
                    else np.full(total, locs[0])
                owner = np.repeat(np.arange(m), counts)
                out = out + np.bincount(owner, weights=jumps, minlength=m)
    elif isinstance(spec, Deterministic):
        out = np.full(m, spec.location)
    elif isinstance(spec, Pareto):
        out = spec.scale * rng.uniform(0.0, 1.0, m) ** (-1.0 / spec.index)
        # uniform(0,1) may return exactly 0
        out[~np.isfinite(out)] = np.finfo(float).max
    elif isinstance(spec, Empirical):
        meas = spec.measure
        p = meas.cell_mass / meas.cell_mass.sum()
        k = rng.choice(meas.grid.n_cells, m, p=p) + 1
        out = k * meas.grid.dt
    else:
        raise TypeError(f"no sampler for {type(spec).__name__}")
    if scalar:
        return float(out[0])
    return np.reshape(out, size)


# ---------------------------------------------------------------------------
# convolution powers and geometric mixtures
# ---------------------------------------------------------------------------


def convolution_power(family: KernelFamily, m: int, j: int, grid: Grid) -> GridMeasure:
    """``pi^{m+1} * ... * pi^{m+j}`` truncated to the grid (``delta_0`` for ``j = 0``)."""
    if j < 0 or m < 0:
        raise ValueError("m and j must be nonnegative")
    out = GridMeasure.dirac(grid, 0.0)
    cache: dict[int, GridMeasure] = {}
    for i in range(m + 1, m + j + 1):
        spec = family.kernel(i)
        key = id(spec)
        if key not in cache:
            cache[key] = discretize_kernel(spec, grid)
        out = convolve_measures(out, cache[key])
    return out


def geometric_mixture(a: float, family: KernelFamily, m: int, grid: Grid,
                      tol: float = 1e-12, *, return_truncation: bool = False):
    """``sum_{k >= 0} (1 - a) a**k pi^{(m, m+k]}`` on the grid.

    Terms are added until ``a**(K+1) * pi^{(m, m+K]}[0, T] < tol``; since the
    grid mass of successive convolution powers is nonincreasing, the omitted
    mass is bounded by that quantity, which is returned as the truncation
    mass when ``return_truncation`` is set.
    """
    if not (0.0 < a < 1.0):
        raise ValueError(f"a must lie in (0, 1), got {a}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = grid.n_cells + 1
    cache: dict[int, np.ndarray] = {}
    power = np.zeros(n)
    power[0] = 1.0
    acc = (1.0 - a) * power
    weight = 1.0 - a
    k = 0
    while True:
        remaining = a ** (k + 1) * float(power.sum())
        if remaining < tol:
            break
        k += 1
        spec = family.kernel(m + k)
        if id(spec) not in cache:
            cache[id(spec)] = discretize_kernel(spec, grid).masses
        power = lattice_convolve(power, cache[id(spec)], n)
        power = np.maximum(power, 0.0)
        weight *= a
        acc = acc + weight * power
    out = GridMeasure.from_masses(grid, acc, tail_mass=max(1.0 - acc.sum(), 0.0))
    # the k = 0 term is exactly (1 - a) delta_0; later terms never charge 0
    # unless a kernel has an atom there
    if all(s.atom_at_zero == 0 for s in family.one_period()):
        out = GridMeasure(grid, 1.0 - a, out.cell_mass, tail_mass=out.tail_mass)
    if return_truncation:
        return out, remaining
    return out


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def null_array_sup(family: KernelFamily, n: float | None, eps: float) -> float:
    """``sup_m pi^m([eps, inf))`` over one period of the family.

    For a :class:`Scaled` family ``n`` replaces the family's own scaling factor;
    other families ignore it.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if isinstance(family, Scaled) and n is not None:
        family = Scaled(family.base, n)
    vals = []
    for spec in family.one_period():
        # P(X >= eps): left limit of the survival function
        if isinstance(spec, Deterministic):
            vals.append(float(spec.location >= eps))
        else:
            vals.append(float(spec.survival(eps)))
    return max(vals)


def tail_ratio_diagnostic(spec: KernelSpec, t_values) -> np.ndarray:
    """``P(X >= t) / ((1/t) int_0^t P(X >= s) ds)`` at each ``t``.

    Tends to a constant in ``(0, 1]`` for regularly varying tails; the limit
    itself is not certified, only tabulated.
    """
    t_values = np.atleast_1d(np.asarray(t_values, dtype=float))
    out = np.empty_like(t_values)
    for i, t in enumerate(t_values):
        integral, _ = integrate.quad(lambda s: float(spec.survival(s)), 0.0, t, limit=200)
        out[i] = float(spec.survival(t)) / (integral / t)
    return out

