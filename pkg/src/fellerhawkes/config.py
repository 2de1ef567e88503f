"""Experiment configuration files (TOML) and their validation.

Kernel semantics: the ``[kernel]`` block describes the *limit* kernel ``rho``.
For simulations at a given ``eps`` the generation kernels are the
``eps``-thinned versions of it (``mode = "row_constant"`` or ``"periodic"``),
or ``base(n .)`` with ``n = kappa / eps`` (``mode = "scaled"``).  Likewise the
``[background]`` block is the limit measure ``mu`` and the simulated process
uses ``mu / eps``.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .grid_measures import Grid, GridFunction, GridMeasure
from .kernels import (
    Exponential,
    KernelFamily,
    KernelSpec,
    Periodic,
    RowConstant,
    Scaled,
    average_exponent,
    spec_from_dict,
)

__all__ = [
    "ConfigError",
    "KernelBlock",
    "BackgroundBlock",
    "TestFunctionBlock",
    "ExperimentConfig",
    "load_config",
    "parse_config",
]


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class KernelBlock:
    mode: str = "row_constant"
    kernels: tuple = (Exponential(1.0),)
    kappa: float = 1.0

    def limit_kernel(self) -> KernelSpec:
        if self.mode == "row_constant":
            return self.kernels[0]
        if self.mode == "periodic":
            return average_exponent(self.kernels)
        base = self.kernels[0]
        m = base.mean
        if not math.isfinite(m):
            raise ConfigError("scaled mode needs a base kernel with finite mean")
        return Exponential(self.kappa / m)

    def family(self, eps: float) -> KernelFamily:
        """Generation kernels of the pre-limit process at ``eps``."""
        if self.mode == "row_constant":
            return RowConstant(self.kernels[0].thin(eps))
        if self.mode == "periodic":
            return Periodic(tuple(k.thin(eps) for k in self.kernels))
        return Scaled(self.kernels[0], self.kappa / eps)

    def to_dict(self) -> dict:
        out = {"mode": self.mode}
        if self.mode == "periodic":
            out["kernels"] = [k.to_dict() for k in self.kernels]
        else:
            out["kernel"] = self.kernels[0].to_dict()
        if self.mode == "scaled":
            out["kappa"] = self.kappa
        return out


@dataclass(frozen=True)
class BackgroundBlock:
    kind: str = "lebesgue"
    intensity: float = 1.0
    path: str | None = None

    def measure(self, grid: Grid, base_dir: Path | None = None) -> GridMeasure:
        if self.kind == "lebesgue":
            return GridMeasure.lebesgue(grid, self.intensity)
        if self.kind == "zero":
            return GridMeasure.zeros(grid)
        p = Path(self.path)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        try:
            mu = GridMeasure.from_csv(p)
        except (OSError, ValueError, IndexError) as exc:
            raise ConfigError(f"cannot read background grid file {p}: {exc}") from None
        if not mu.grid.compatible(grid):
            raise ConfigError("background grid file does not match horizon/dt")
        return mu

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class TestFunctionBlock:
    """Named test-function shapes: ``constant``, ``ramp``, ``negative_bump``."""

    shape: str = "constant"
    c: float = 0.0
    cap: float = math.inf
    center: float = 1.0
    width: float = 0.5
    depth: float = 0.3
    zero_at_origin: bool = False

    def function(self, grid: Grid) -> GridFunction:
        t = grid.times
        if self.shape == "constant":
            v = np.full_like(t, self.c)
        elif self.shape == "ramp":
            v = self.c * np.minimum(t, self.cap)
        elif self.shape == "negative_bump":
            z = (t - self.center) / self.width
            v = np.where(np.abs(z) < 1.0, -self.depth * (1.0 - z * z) ** 2, 0.0)
        else:  # validated at parse time
            raise ConfigError(f"unknown f shape {self.shape!r}")
        if self.zero_at_origin:
            v = v.copy()
            v[0] = 0.0
        return GridFunction(grid, v)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not math.isfinite(d["cap"]):
            d.pop("cap")
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    horizon: float = 5.0
    dt: float = 1e-3
    replications: int = 1000
    kernel: KernelBlock = field(default_factory=KernelBlock)
    background: BackgroundBlock = field(default_factory=BackgroundBlock)
    f: TestFunctionBlock = field(default_factory=TestFunctionBlock)
    eps: tuple = (0.1,)
    t_list: tuple = (1.0, 2.0, 5.0)
    options: dict = field(default_factory=dict)
    output_dir: str | None = None
    base_dir: str | None = None

    @property
    def grid(self) -> Grid:
        return Grid(self.horizon, self.dt)

    def background_measure(self) -> GridMeasure:
        base = Path(self.base_dir) if self.base_dir else None
        return self.background.measure(self.grid, base)

    def test_function(self) -> GridFunction:
        return self.f.function(self.grid)

    def option(self, section: str, key: str, default=None):
        return self.options.get(section, {}).get(key, default)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "horizon": self.horizon,
            "dt": self.dt,
            "replications": self.replications,
            "kernel": self.kernel.to_dict(),
            "background": self.background.to_dict(),
            "f": self.f.to_dict(),
            "eps": list(self.eps),
            "t": list(self.t_list),
            "options": self.options,
        }

    def hash(self) -> str:
        """SHA-256 of the canonical JSON form (sorted keys)."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        d = {**self.__dict__, "seed": int(seed)}
        return ExperimentConfig(**d)


_TOP_KEYS = {"seed", "horizon", "dt", "replications", "kernel", "background", "f",
             "eps", "a", "t", "output_dir", "simulate", "riccati", "cumulants",
             "covariance", "verify"}
_F_SHAPES = {"constant", "ramp", "negative_bump"}


def _number(d: dict, key: str, default, kind=float):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {v!r}")
    return kind(v)


def _parse_kernel(d: dict) -> KernelBlock:
    d = dict(d)
    mode = d.pop("mode", "row_constant")
    try:
        if mode == "periodic":
            ks = d.get("kernels")
            if not ks:
                raise ConfigError("periodic kernel block needs a non-empty 'kernels' list")
            kernels = tuple(spec_from_dict(k) for k in ks)
        elif mode in ("row_constant", "scaled"):
            if "kernel" in d:
                kernels = (spec_from_dict(d["kernel"]),)
            elif "type" in d:
                kernels = (spec_from_dict({k: v for k, v in d.items() if k != "kappa"}),)
            else:
                raise ConfigError("kernel block needs a 'kernel' record")
        else:
            raise ConfigError(f"unknown kernel mode {mode!r}")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    block = KernelBlock(mode, kernels, float(d.get("kappa", 1.0)))
    if mode != "scaled":
        for k in kernels:
            if not k.is_gid:
                raise ConfigError(f"{k.type_name} kernels cannot be thinned; use mode = 'scaled'")
    return block


def parse_config(raw: dict, base_dir: str | None = None) -> ExperimentConfig:
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    seed = _number(raw, "seed", 0, int)
    if not (0 <= seed < 2 ** 64):
        raise ConfigError("seed must be a 64-bit unsigned integer")
    horizon = _number(raw, "horizon", 5.0)
    dt = _number(raw, "dt", 1e-3)
    try:
        Grid(horizon, dt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    reps = _number(raw, "replications", 1000, int)
    if reps < 1:
        raise ConfigError("replications must be at least 1")
    kernel = _parse_kernel(raw.get("kernel", {"kernel": {"type": "exponential", "rate": 1.0}}))

    bg = raw.get("background", {"kind": "lebesgue"})
    kind = bg.get("kind", "lebesgue")
    if kind not in ("lebesgue", "grid_file", "zero"):
        raise ConfigError(f"unknown background kind {kind!r}")
    if kind == "grid_file" and "path" not in bg:
        raise ConfigError("grid_file background needs a 'path'")
    intensity = _number(bg, "intensity", 1.0)
    if intensity < 0:
        raise ConfigError("background intensity must be nonnegative")
    background = BackgroundBlock(kind, intensity, bg.get("path"))

    fd = dict(raw.get("f", {}))
    shape = fd.pop("shape", "constant")
    if shape not in _F_SHAPES:
        raise ConfigError(f"unknown f shape {shape!r}; expected one of {sorted(_F_SHAPES)}")
    try:
        fblock = TestFunctionBlock(shape=shape, **fd)
    except TypeError as exc:
        raise ConfigError(f"bad f block: {exc}") from None

    if "eps" in raw and "a" in raw:
        raise ConfigError("give either eps or a, not both")
    if "a" in raw:
        a_vals = raw["a"] if isinstance(raw["a"], list) else [raw["a"]]
        eps = tuple(1.0 - float(a) for a in a_vals)
    else:
        e = raw.get("eps", [0.1])
        eps = tuple(float(x) for x in (e if isinstance(e, list) else [e]))
    for e in eps:
        if not (0.0 < e < 1.0):
            raise ConfigError(f"eps must lie in (0, 1), got {e}")
    if "t" in raw:
        t_list = tuple(float(x) for x in raw["t"])
    else:
        t_list = tuple(t for t in (1.0, 2.0, 5.0) if t <= horizon) or (horizon,)
    for t in t_list:
        if not (0.0 <= t <= horizon):
            raise ConfigError(f"evaluation time {t} outside [0, horizon]")
    options = {k: dict(raw[k]) for k in ("simulate", "riccati", "cumulants", "covariance", "verify")
               if k in raw}
    return ExperimentConfig(seed, horizon, dt, reps, kernel, background, fblock, eps, t_list,
                            options, raw.get("output_dir"), base_dir)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return parse_config(raw, str(path.parent))
