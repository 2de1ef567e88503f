"""Functions and measures discretized on a uniform grid of [0, T].

A :class:`GridMeasure` keeps an atom at ``t = 0`` plus one mass per cell
``(t_{k-1}, t_k]``; the cell mass is treated as an atom at the right endpoint
``t_k``.  With that convention every convolution on the grid is an exact
lattice convolution, which keeps associativity and the Young bound exact up to
rounding.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "Grid",
    "GridFunction",
    "GridMeasure",
    "GridMismatchError",
    "convolve_fn_measure",
    "convolve_measures",
    "lattice_convolve",
    "wasserstein1_truncated",
    "variation_norms",
    "l1_norm",
]

# above this many cells the FFT path is used by default
FFT_THRESHOLD = 2048

PathLike = Union[str, Path]


class GridMismatchError(ValueError):
    """Two operands live on incompatible discretizations."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_k = k * dt``, ``k = 0..n_cells`` on ``[0, horizon]``."""

    horizon: float
    dt: float
    n_cells: int = field(init=False)

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        n = int(round(self.horizon / self.dt))
        if n < 1:
            raise ValueError("grid must have at least one cell")
        if abs(n * self.dt - self.horizon) > 1e-9 * self.horizon:
            raise ValueError(
                f"dt={self.dt} does not divide horizon={self.horizon}"
            )
        object.__setattr__(self, "n_cells", n)
        # snap dt so that n_cells * dt reproduces the horizon
        object.__setattr__(self, "dt", self.horizon / n)

    @classmethod
    def from_cells(cls, horizon: float, n_cells: int) -> "Grid":
        return cls(horizon, horizon / n_cells)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.dt

    def cell_of(self, t) -> np.ndarray:
        """Index ``k`` of the cell ``(t_{k-1}, t_k]`` containing ``t`` (0 for t = 0)."""
        t = np.asarray(t, dtype=float)
        k = np.ceil(t / self.dt - 1e-9).astype(np.int64)
        return np.maximum(k, 0)

    def index_of(self, t: float) -> int:
        """Nearest grid index to ``t``."""
        return int(round(t / self.dt))

    def compatible(self, other: "Grid") -> bool:
        return self.n_cells == other.n_cells and math.isclose(
            self.horizon, other.horizon, rel_tol=1e-12
        )


def _check_same_grid(a: Grid, b: Grid) -> None:
    if not a.compatible(b):
        raise GridMismatchError(
            f"incompatible grids: (T={a.horizon}, n={a.n_cells}) vs "
            f"(T={b.horizon}, n={b.n_cells})"
        )


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


def lattice_convolve(a: np.ndarray, b: np.ndarray, n: int, method: str = "auto") -> np.ndarray:
    """First ``n`` entries of the full discrete convolution of ``a`` and ``b``."""
    if method == "auto":
        method = "fft" if min(len(a), len(b)) > FFT_THRESHOLD else "direct"
    if method == "direct":
        out = np.convolve(a, b)
    elif method == "fft":
        out = fftconvolve(a, b)
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    return out[:n]


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values of a function at the grid points ``t_0..t_n``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.n_cells + 1,):
            raise ValueError(
                f"expected {self.grid.n_cells + 1} values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("GridFunction values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: Grid, c: float, *, zero_at_origin: bool = False) -> "GridFunction":
        vals = np.full(grid.n_cells + 1, float(c))
        if zero_at_origin:
            vals[0] = 0.0
        return cls(grid, vals)

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(grid, np.asarray(fn(grid.times), dtype=float))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.n_cells + 1))

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def running_sup(self) -> np.ndarray:
        """``t_k -> sup_{s <= t_k} |f(s)|``."""
        return np.maximum.accumulate(np.abs(self.values))

    def at(self, t: float) -> float:
        """Value at the grid point nearest to ``t``."""
        return float(self.values[self.grid.index_of(t)])

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _check_same_grid(self.grid, other.grid)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _check_same_grid(self.grid, other.grid)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, self.values * float(c))

    __rmul__ = __mul__

    # serialization -------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {
                "horizon": self.grid.horizon,
                "dt": self.grid.dt,
                "data": self.values.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "GridFunction":
        obj = json.loads(text)
        grid = Grid(obj["horizon"], obj["dt"])
        return cls(grid, np.asarray(obj["data"], dtype=float))

    def to_csv(self, path: PathLike | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(self.times, self.values):
            w.writerow([repr(float(t)), repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, text_or_path: str | Path) -> "GridFunction":
        rows = _read_csv_rows(text_or_path)
        t = np.array([r[0] for r in rows])
        v = np.array([r[1] for r in rows])
        return cls(Grid.from_cells(float(t[-1]), len(t) - 1), v)


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """A measure on ``[0, T]``: an atom at 0 plus one mass per grid cell.

    ``cell_mass[k-1]`` is the mass of ``(t_{k-1}, t_k]``.  ``tail_mass`` records
    mass that was known to lie beyond the horizon when the measure was built
    (for instance when discretizing a probability kernel).
    """

    grid: Grid
    atom_at_zero: float
    cell_mass: np.ndarray
    signed: bool = False
    tail_mass: float = 0.0

    def __post_init__(self):
        cm = _frozen(self.cell_mass)
        if cm.shape != (self.grid.n_cells,):
            raise ValueError(
                f"expected {self.grid.n_cells} cell masses, got shape {cm.shape}"
            )
        if not (np.all(np.isfinite(cm)) and math.isfinite(self.atom_at_zero)):
            raise ValueError("masses must be finite")
        if not self.signed:
            if self.atom_at_zero < 0 or np.any(cm < 0):
                raise ValueError("unsigned GridMeasure has negative mass")
        object.__setattr__(self, "cell_mass", cm)
        object.__setattr__(self, "atom_at_zero", float(self.atom_at_zero))

    # constructors ---------------------------------------------------------

    @classmethod
    def from_masses(cls, grid: Grid, masses: np.ndarray, *, signed: bool = False,
                    tail_mass: float = 0.0) -> "GridMeasure":
        """Build from the full lattice vector ``masses[0..n]`` (``masses[0]`` is the atom)."""
        masses = np.asarray(masses, dtype=float)
        if not signed:
            # rounding from FFT convolution can leave tiny negative entries
            masses = np.where((masses < 0) & (masses > -1e-13), 0.0, masses)
        return cls(grid, float(masses[0]), masses[1:], signed=signed, tail_mass=tail_mass)

    @classmethod
    def zeros(cls, grid: Grid) -> "GridMeasure":
        return cls(grid, 0.0, np.zeros(grid.n_cells))

    @classmethod
    def dirac(cls, grid: Grid, location: float, mass: float = 1.0) -> "GridMeasure":
        """Point mass at ``location``, assigned to the cell containing it."""
        masses = np.zeros(grid.n_cells + 1)
        k = int(grid.cell_of(location))
        if k > grid.n_cells:
            return cls.from_masses(grid, masses, tail_mass=mass)
        masses[k] = mass
        return cls.from_masses(grid, masses)

    @classmethod
    def lebesgue(cls, grid: Grid, intensity: float = 1.0) -> "GridMeasure":
        return cls(grid, 0.0, np.full(grid.n_cells, intensity * grid.dt))

    @classmethod
    def from_cdf(cls, grid: Grid, cdf: Callable[[np.ndarray], np.ndarray],
                 total: float | None = None) -> "GridMeasure":
        """Cell masses as exact increments of a distribution function.

        ``cdf(0)`` becomes the atom at zero.  When ``total`` is given the mass
        beyond the horizon, ``total - cdf(T)``, is stored as ``tail_mass``.
        """
        F = np.asarray(cdf(grid.times), dtype=float)
        masses = np.empty_like(F)
        masses[0] = F[0]
        masses[1:] = np.diff(F)
        tail = 0.0 if total is None else max(total - F[-1], 0.0)
        return cls.from_masses(grid, masses, tail_mass=tail)

    # basic accessors ------------------------------------------------------

    @property
    def masses(self) -> np.ndarray:
        """Lattice vector: ``masses[0]`` atom at 0, ``masses[k]`` atom at ``t_k``."""
        out = np.empty(self.grid.n_cells + 1)
        out[0] = self.atom_at_zero
        out[1:] = self.cell_mass
        return out

    @property
    def total_mass(self) -> float:
        return self.atom_at_zero + float(np.sum(self.cell_mass))

    def cdf(self) -> np.ndarray:
        """``F(t_k) = mu[0, t_k]`` at every grid point."""
        return np.cumsum(self.masses)

    def mass_on(self, t: float) -> float:
        """``mu[0, t]`` for ``t`` on the grid (nearest grid point otherwise)."""
        return float(self.cdf()[min(self.grid.index_of(t), self.grid.n_cells)])

    def is_probability(self, tol: float = 1e-12) -> bool:
        return abs(self.total_mass + self.tail_mass - 1.0) <= tol

    def without_atom(self) -> "GridMeasure":
        return GridMeasure(self.grid, 0.0, self.cell_mass, self.signed, self.tail_mass)

    def __add__(self, other: "GridMeasure") -> "GridMeasure":
        _check_same_grid(self.grid, other.grid)
        return GridMeasure(
            self.grid,
            self.atom_at_zero + other.atom_at_zero,
            self.cell_mass + other.cell_mass,
            signed=self.signed or other.signed,
            tail_mass=self.tail_mass + other.tail_mass,
        )

    def __sub__(self, other: "GridMeasure") -> "GridMeasure":
        _check_same_grid(self.grid, other.grid)
        return GridMeasure(
            self.grid,
            self.atom_at_zero - other.atom_at_zero,
            self.cell_mass - other.cell_mass,
            signed=True,
        )

    def scale(self, c: float) -> "GridMeasure":
        return GridMeasure(
            self.grid, self.atom_at_zero * c, self.cell_mass * c,
            signed=self.signed or c < 0, tail_mass=self.tail_mass * c,
        )

    # serialization -------------------------------------------------------

    def to_json(self) -> str:
        obj = {
            "horizon": self.grid.horizon,
            "dt": self.grid.dt,
            "atom_at_zero": self.atom_at_zero,
            "data": self.cell_mass.tolist(),
        }
        if self.signed:
            obj["signed"] = True
        if self.tail_mass:
            obj["tail_mass"] = self.tail_mass
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str) -> "GridMeasure":
        obj = json.loads(text)
        grid = Grid(obj["horizon"], obj["dt"])
        return cls(
            grid,
            obj.get("atom_at_zero", 0.0),
            np.asarray(obj["data"], dtype=float),
            signed=obj.get("signed", False),
            tail_mass=obj.get("tail_mass", 0.0),
        )

    def to_csv(self, path: PathLike | None = None) -> str:
        """Rows ``t, mass``; the ``t = 0`` row carries the atom at zero."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mass"])
        for t, m in zip(self.grid.times, self.masses):
            w.writerow([repr(float(t)), repr(float(m))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, text_or_path: str | Path, *, signed: bool = False) -> "GridMeasure":
        rows = _read_csv_rows(text_or_path)
        t = np.array([r[0] for r in rows])
        m = np.array([r[1] for r in rows])
        grid = Grid.from_cells(float(t[-1]), len(t) - 1)
        return cls.from_masses(grid, m, signed=signed)


def _read_csv_rows(text_or_path: str | Path) -> list[tuple[float, float]]:
    if isinstance(text_or_path, Path) or (
        isinstance(text_or_path, str) and "\n" not in text_or_path
    ):
        text = Path(text_or_path).read_text()
    else:
        text = text_or_path
    reader = csv.reader(io.StringIO(text))
    next(reader)  # header
    return [(float(r[0]), float(r[1])) for r in reader if r]


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def convolve_fn_measure(f: GridFunction, mu: GridMeasure, method: str = "auto") -> GridFunction:
    """``(f * mu)(t_k) = f(t_k) mu({0}) + sum_{j=1..k} f(t_k - t_j) mu(cell j)``."""
    _check_same_grid(f.grid, mu.grid)
    n = f.grid.n_cells + 1
    return GridFunction(f.grid, lattice_convolve(f.values, mu.masses, n, method))


def convolve_measures(mu: GridMeasure, nu: GridMeasure, method: str = "auto") -> GridMeasure:
    """Lattice convolution of two measures, truncated to ``[0, T]``.

    Mass that lands beyond the horizon is dropped; ``tail_mass`` of the result
    is left at zero because the dropped part is not tracked exactly.
    """
    _check_same_grid(mu.grid, nu.grid)
    n = mu.grid.n_cells + 1
    out = lattice_convolve(mu.masses, nu.masses, n, method)
    return GridMeasure.from_masses(mu.grid, out, signed=mu.signed or nu.signed)


def wasserstein1_truncated(nu1: GridMeasure, nu2: GridMeasure, T_cut: float) -> float:
    """``int_0^{T_cut} |F_1(t) - F_2(t)| dt`` for the lattice distribution functions.

    Between grid points the distribution functions are constant (right
    continuous with jumps at ``t_k``), so the rectangle rule with the left
    value on each cell is the exact integral of the lattice CDF gap.
    """
    _check_same_grid(nu1.grid, nu2.grid)
    if nu1.signed or nu2.signed:
        raise ValueError("truncated Wasserstein distance needs nonnegative measures")
    grid = nu1.grid
    if T_cut < 0 or T_cut > grid.horizon * (1 + 1e-12):
        raise ValueError(f"T_cut={T_cut} outside [0, {grid.horizon}]")
    gap = np.abs(nu1.cdf() - nu2.cdf())
    full = int(math.floor(T_cut / grid.dt + 1e-9))
    full = min(full, grid.n_cells)
    total = grid.dt * float(np.sum(gap[:full]))
    rest = T_cut - full * grid.dt
    if rest > 1e-12 * grid.dt and full <= grid.n_cells:
        total += rest * float(gap[full])
    return total


def variation_norms(f: GridFunction) -> tuple[float, float]:
    """``(sup |f|, discrete total variation)``."""
    v = f.values
    return float(np.max(np.abs(v))), float(np.sum(np.abs(np.diff(v))))


def l1_norm(f: GridFunction) -> float:
    """Grid L1 norm ``dt * sum_k |f(t_k)|`` (the norm for which the lattice Young bound is exact)."""
    return f.grid.dt * float(np.sum(np.abs(f.values)))
