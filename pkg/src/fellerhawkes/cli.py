"""Command line runner: ``fellerhawkes {simulate,riccati,cumulants,covariance,verify-limit}``.

Exit codes: 0 pass (possibly with warnings), 1 usage or configuration error,
2 numerical refusal, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .analytics import covariance_kernel, cumulants, limit_laplace
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import compare_with_limit, mean_count_prediction, monotone_gaps
from .grid_measures import GridFunction
from .kernels import discretize_kernel, null_array_sup
from .riccati import (
    RiccatiBlowUpError,
    RiccatiProblem,
    RiccatiRefusal,
    check_bounds,
    solve_marching,
    solve_picard,
    solve_series,
)
from .simulator import (
    ClusterOverflowError,
    HawkesParams,
    point_counts,
    run_replications,
    sample_hawkes,
)

__all__ = ["main", "build_parser"]

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_REFUSAL, EXIT_FAIL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fellerhawkes", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "riccati", "cumulants", "covariance", "verify-limit"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="TOML experiment file")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--threads", type=int, default=1, help="worker processes")
        s.add_argument("--out", default=None, help="output directory")
    return p


# ---------------------------------------------------------------------------
# report helpers
# ---------------------------------------------------------------------------


class Report:
    def __init__(self, command: str, cfg: ExperimentConfig):
        self.data = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "config_hash": cfg.hash(),
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "tables": {},
            "verdicts": [],
            "warnings": [],
            "refusals": [],
            "timings": {},
        }

    def verdict(self, name: str, passed: bool, value, tolerance, **extra) -> bool:
        entry = {"name": name, "passed": bool(passed), "value": value, "tolerance": tolerance}
        entry.update(extra)
        self.data["verdicts"].append(entry)
        return bool(passed)

    def warn(self, msg: str) -> None:
        self.data["warnings"].append(msg)

    def refuse(self, method: str, msg: str) -> None:
        self.data["refusals"].append({"method": method, "reason": msg})

    def table(self, name: str, value) -> None:
        self.data["tables"][name] = value

    def timing(self, name: str, seconds: float) -> None:
        self.data["timings"][name] = round(seconds, 6)

    @property
    def failed(self) -> bool:
        return any(not v["passed"] for v in self.data["verdicts"])

    def write(self, out: Path, name: str = "report.json") -> Path:
        path = out / name
        path.write_text(json.dumps(_jsonable(self.data), indent=2, sort_keys=True) + "\n")
        return path


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _output_dir(args, cfg: ExperimentConfig) -> Path:
    out = args.out or os.environ.get("OUTPUT_DIR") or cfg.output_dir or "out"
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc}") from None
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


class _CountTask:
    """Per replication: the point sample (rows) and counts at the check times."""

    def __init__(self, params, t_index, keep_points):
        self.params = params
        self.t_index = t_index
        self.keep_points = keep_points

    def __call__(self, r, rng):
        s = sample_hawkes(self.params, rng)
        counts = np.cumsum(point_counts(s.times, self.params.grid))
        pts = (s.times, s.generations, s.cluster_ids) if self.keep_points else None
        return counts[list(self.t_index)], pts


def cmd_simulate(cfg: ExperimentConfig, args, out: Path, report: Report) -> int:
    eps = cfg.eps[0]
    grid = cfg.grid
    mu = cfg.background_measure()
    params = HawkesParams(1.0 - eps, cfg.kernel.family(eps), mu.scale(1.0 / eps))
    t_list = list(cfg.t_list)
    t_index = [grid.index_of(t) for t in t_list]
    write_points = bool(cfg.option("simulate", "write_points", True))
    t0 = time.perf_counter()
    results = run_replications(_CountTask(params, t_index, write_points), cfg.replications,
                               cfg.seed, args.threads)
    report.timing("simulation", time.perf_counter() - t0)
    counts = np.array([c for c, _ in results]).reshape(len(results), len(t_list))
    if write_points:
        rows = []
        for r, (_, pts) in enumerate(results):
            t, g, c = pts
            rows.extend((r, float(ti), int(gi), int(ci)) for ti, gi, ci in zip(t, g, c))
        _write_csv(out / "points.csv", ["replication", "time", "generation", "cluster_id"], rows)
    t0 = time.perf_counter()
    pred = [mean_count_prediction(params, t) for t in t_list]
    report.timing("prediction", time.perf_counter() - t0)
    n = counts.shape[0]
    mean = counts.mean(axis=0)
    se = counts.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(t_list))
    rows = list(zip(t_list, mean, se, pred))
    _write_csv(out / "mean_counts.csv", ["t", "mean_count", "stderr", "prediction"], rows)
    report.table("mean_counts", [dict(t=t, mean=m, stderr=s, prediction=p) for t, m, s, p in rows])
    for t, m, s, p in rows:
        gap = abs(m - p)
        tol = 3.0 * s
        # a zero background gives identically zero counts and prediction
        report.verdict(f"mean_count_t={t}", gap <= tol or gap <= 1e-9 * max(1.0, p), gap,
                       tol, rule="|mean - prediction| <= 3 stderr")
    report.table("summary", {"n_points_mean_at_horizon": float(mean[-1]) if len(mean) else 0.0,
                             "replications": n, "a": params.a, "eps": eps})
    return EXIT_FAIL if report.failed else EXIT_OK


def cmd_riccati(cfg: ExperimentConfig, args, out: Path, report: Report) -> int:
    grid = cfg.grid
    f = cfg.test_function()
    rho_spec = cfg.kernel.limit_kernel()
    rho = discretize_kernel(rho_spec, grid)
    try:
        prob = RiccatiProblem(f, rho)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    window = float(cfg.option("riccati", "window", 0.5))
    tol = float(cfg.option("riccati", "tol", 1e-10))
    n_max = int(cfg.option("riccati", "n_max", 60))
    sols = {}
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            sols["marching"] = solve_marching(prob)
        except RiccatiBlowUpError as exc:
            report.refuse("marching", str(exc))
    for w in caught:
        report.warn(str(w.message))
    report.timing("marching", time.perf_counter() - t0)
    for name, solver in (("picard", lambda: solve_picard(prob, window, tol)),
                         ("series", lambda: solve_series(prob, n_max))):
        t0 = time.perf_counter()
        try:
            sols[name] = solver()
        except (RiccatiRefusal, RiccatiBlowUpError) as exc:
            report.refuse(name, str(exc))
        report.timing(name, time.perf_counter() - t0)
    if not sols:
        return EXIT_REFUSAL
    names = sorted(sols)
    _write_csv(out / "h.csv", ["t"] + names,
               zip(grid.times, *[sols[k].h.values for k in names]))
    report.table("residuals", {k: s.residual for k, s in sols.items()})
    for k, s in sols.items():
        report.table(f"metadata_{k}", s.metadata())
        if s.truncated:
            report.warn(f"{k}: series truncated (last term above 1e-12)")
    agree_tol = max(tol, 10.0 * grid.dt)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            gap = float(np.max(np.abs(sols[a].h.values - sols[b].h.values)))
            report.verdict(f"gap_{a}_{b}", gap <= agree_tol, gap, agree_tol)
    for k, s in sols.items():
        cert = check_bounds(s, prob)
        report.verdict(f"envelope_{k}", cert.passed, cert.to_dict(), 1e-12)
    c = float(f.values[-1])
    constant_f = np.allclose(f.values[1:], c) and 0.0 <= c <= 0.5
    if constant_f and "marching" in sols and rho.total_mass >= 1.0 - 1e-6:
        target = 1.0 - math.sqrt(1.0 - 2.0 * c)
        val = float(sols["marching"].h.values[-1])
        report.verdict("stationary_value", abs(val - target) <= 1e-3, val, 1e-3, target=target)
    return EXIT_FAIL if report.failed else EXIT_OK


def cmd_cumulants(cfg: ExperimentConfig, args, out: Path, report: Report) -> int:
    grid = cfg.grid
    f = cfg.test_function()
    rho = discretize_kernel(cfg.kernel.limit_kernel(), grid)
    mu = cfg.background_measure()
    n_max = int(cfg.option("cumulants", "n_max", 4))
    try:
        rep = cumulants(f, rho, mu, n_max)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rep.to_csv(out / "cumulants.csv")
    k2 = rep.kappa(2).values if n_max >= 2 else None
    if k2 is not None:
        report.verdict("kappa2_nonnegative", bool(np.all(k2 >= -1e-12)), float(k2.min()), -1e-12)
    report.table("final_values", {f"k{n}": rep.kappa(n).values[-1] for n in range(1, n_max + 1)})
    return EXIT_FAIL if report.failed else EXIT_OK


def cmd_covariance(cfg: ExperimentConfig, args, out: Path, report: Report) -> int:
    grid = cfg.grid
    spec = cfg.kernel.limit_kernel()
    mu = cfg.background_measure()
    stride = int(cfg.option("covariance", "stride", max(1, grid.n_cells // 100)))
    times = grid.times[::stride]
    try:
        cov = covariance_kernel(spec, mu, grid, times, times)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cov.to_csv(out / "covariance.csv")
    meta = json.loads(cov.metadata_json())
    meta["mu_kind"] = cfg.background.kind
    meta["schema_version"] = SCHEMA_VERSION
    (out / "covariance.json").write_text(json.dumps(meta, sort_keys=True) + "\n")
    finite = np.isfinite(cov.sigma) & np.isfinite(cov.sigma.T)
    sym = float(np.max(np.abs(cov.sigma[finite] - cov.sigma.T[finite]), initial=0.0))
    report.verdict("symmetric", sym == 0.0, sym, 0.0)
    if cov.alpha is not None:
        raw = cov.envelope_constant()
        fitted_scale, spread = cov.envelope_fit()
        report.table("envelope", {"alpha": cov.alpha, "C_raw": raw,
                                  "fitted_scale": fitted_scale, "C_after_scale": spread})
    return EXIT_FAIL if report.failed else EXIT_OK


def cmd_verify_limit(cfg: ExperimentConfig, args, out: Path, report: Report) -> int:
    if len(cfg.eps) < 2:
        raise ConfigError("verify-limit needs at least two eps values")
    f = cfg.test_function()
    if np.any(f.values > 0):
        raise ConfigError("verify-limit needs f <= 0")
    mu = cfg.background_measure()
    grid = cfg.grid
    rho_spec = cfg.kernel.limit_kernel()
    check_time = float(cfg.option("verify", "null_check_time", 0.5))
    null_threshold = float(cfg.option("verify", "null_threshold", 0.5))
    rel_tol = float(cfg.option("verify", "rel_tol", 0.05))
    results = []
    rows = []
    for eps in sorted(cfg.eps, reverse=True):
        family = cfg.kernel.family(eps)
        v = null_array_sup(family, None, check_time)
        if v > null_threshold:
            report.warn(f"eps={eps}: sup_m pi^m[{check_time}, inf) = {v:.3g} "
                        f"exceeds {null_threshold}; kernels may not form a null array")
        t0 = time.perf_counter()
        res = compare_with_limit(rho_spec, mu, f, eps, cfg.t_list, cfg.replications,
                                 cfg.seed, args.threads, family=family)
        report.timing(f"eps={eps}", time.perf_counter() - t0)
        results.append(res)
        for j, t in enumerate(res.t):
            rows.append((eps, t, res.empirical[j], res.stderr[j], res.limit[j], res.gap[j]))
    _write_csv(out / "laplace.csv", ["eps", "t", "empirical", "stderr", "limit", "gap"], rows)
    report.table("comparisons", [r.to_dict() for r in results])
    final = min(results, key=lambda r: r.eps)
    for j, t in enumerate(final.t):
        tol = max(3.0 * final.stderr[j], rel_tol * final.limit[j])
        report.verdict(f"final_gap_t={t}", final.gap[j] <= tol, final.gap[j], tol,
                       eps=final.eps, rule="gap <= max(3 stderr, rel_tol * limit)")
    ordered = sorted(results, key=lambda r: -r.eps)
    flags = iter(monotone_gaps(results))
    for prev, nxt in zip(ordered, ordered[1:]):
        for j, t in enumerate(prev.t):
            slack = 3.0 * (prev.stderr[j] + nxt.stderr[j])
            report.verdict(f"monotone_eps={prev.eps}->{nxt.eps}_t={t}", next(flags),
                           nxt.gap[j] - prev.gap[j], slack,
                           rule="gap(next eps) - gap(prev eps) <= 3 (se_prev + se_next)")
    # limit curve for plotting
    lim = limit_laplace(f, discretize_kernel(rho_spec, grid), mu)
    _write_csv(out / "limit_curve.csv", ["t", "limit"], zip(lim.times, lim.values))
    return EXIT_FAIL if report.failed else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "riccati": cmd_riccati,
    "cumulants": cmd_cumulants,
    "covariance": cmd_covariance,
    "verify-limit": cmd_verify_limit,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        out = _output_dir(args, cfg)
        report = Report(args.command, cfg)
        t0 = time.perf_counter()
        code = COMMANDS[args.command](cfg, args, out, report)
        report.timing("total", time.perf_counter() - t0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RiccatiRefusal, RiccatiBlowUpError, ClusterOverflowError) as exc:
        print(f"numerical refusal: {exc}", file=sys.stderr)
        return EXIT_REFUSAL
    if report.data["refusals"] and code == EXIT_OK and args.command != "riccati":
        code = EXIT_REFUSAL
    report.data["exit_code"] = code
    report.write(out)
    status = {EXIT_OK: "pass", EXIT_REFUSAL: "refused", EXIT_FAIL: "FAIL"}[code]
    n_warn = len(report.data["warnings"])
    print(f"{args.command}: {status}" + (f" ({n_warn} warning(s))" if n_warn else "")
          + f"; report at {out / 'report.json'}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
