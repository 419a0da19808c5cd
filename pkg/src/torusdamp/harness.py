"""Experiment configuration, orchestration and result files.

Every experiment is described by one JSON file (see :class:`ExperimentConfig`)
and produces three artifacts in the output directory:

``<kind>.csv``
    one row per parameter point, plot-ready;
``<kind>.json``
    summary with the targeted quantity, the prediction formula, the fit and
    any per-point failures;
``<kind>.txt``
    a short human-readable report.

Exit codes: 0 success, 1 configuration error, 2 numerical failure (partial
output is still written).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import averaging, oned, pseudodiff, spectral2d, timedomain
from .damping import DampingKind, DampingProfile, profile_from_config
from .fitting import FitError, loglog_fit

KINDS = ("resolvent2d", "resolvent1d", "averaging", "normalform", "decay", "generator-spectrum")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

K_RULES: dict = {
    "ceil4": spectral2d.default_K,
    "ceil2+4": lambda h: math.ceil(2 / h) + 4,
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    """Schema of an experiment file.

    Attributes
    ----------
    kind : one of ``KINDS``.
    damping : damping description accepted by ``profile_from_config``.
    h_list : semiclassical parameters (each in ``(0, 1)``).
    K_rule : name in ``K_RULES`` giving the truncation from ``h``.
    tolerance : allowed ``|slope - predicted|``.
    lambda_per_decade : density of the 1D spectral-parameter grid.
    envelope : 2D norms maximise over the frequency window instead of using
        the fixed shift 1.
    shift : fixed spectral parameter when ``envelope`` is false.
    grid_n : 1D collocation size, or transversal grid for averaging.
    window : distance window of the averaging fit.
    K, T, dt, sample_dt : time-domain and generator settings.
    out_dir, seed, threads : output location, seed for randomized probes and
        worker count (0 means all cores).
    """

    kind: str
    damping: dict = field(default_factory=lambda: {"kind": "zero"})
    h_list: list = field(default_factory=lambda: [0.19, 0.15, 0.12, 0.095, 0.075])
    K_rule: str = "ceil4"
    tolerance: float = 0.15
    lambda_per_decade: int = 40
    envelope: bool = True
    shift: float = 1.0
    grid_n: int = 1024
    window: list = field(default_factory=lambda: [1e-3, 1e-1])
    K: int = 16
    T: float = 50.0
    dt: float = 0.02
    sample_dt: float = 0.5
    out_dir: str = "results"
    seed: int = 0
    threads: int = 0

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError("kind", f"expected one of {', '.join(KINDS)}, got {self.kind!r}")
        try:
            profile_from_config(self.damping)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("damping", str(exc)) from exc
        if not self.h_list or any(not 0 < float(h) < 1 for h in self.h_list):
            raise ConfigError("h_list", "values must lie in (0, 1)")
        if self.K_rule not in K_RULES:
            raise ConfigError("K_rule", f"expected one of {', '.join(K_RULES)}")
        if not self.tolerance > 0:
            raise ConfigError("tolerance", "must be positive")
        if self.lambda_per_decade < 4:
            raise ConfigError("lambda_per_decade", "must be at least 4")
        if self.grid_n < 256:
            raise ConfigError("grid_n", "must be at least 256")
        if len(self.window) != 2 or not 0 < self.window[0] < self.window[1]:
            raise ConfigError("window", "must be [d_min, d_max] with 0 < d_min < d_max")
        if not 2 <= self.K <= 256:
            raise ConfigError("K", "must lie in [2, 256]")
        if not (self.T > 0 and self.dt > 0 and self.sample_dt >= self.dt):
            raise ConfigError("dt", "need T > 0, dt > 0 and sample_dt >= dt")
        if self.threads < 0:
            raise ConfigError("threads", "must be non-negative")
        return self

    def profile(self) -> DampingProfile:
        return profile_from_config(self.damping)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        if "kind" not in d:
            raise ConfigError("kind", "missing")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("<file>", "top level must be an object")
        return cls.from_dict(d)


@dataclass
class RunResult:
    rows: list
    summary: dict
    failures: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_NUMERIC if self.failures else EXIT_OK


def _workers(cfg: ExperimentConfig) -> int:
    return cfg.threads or os.cpu_count() or 1


def _map_points(cfg: ExperimentConfig, fn: Callable, points: list) -> tuple:
    """Evaluate ``fn`` on every point; rows come back in input order.

    Failures are caught per point and recorded, the run goes on.
    """
    def safe(p):
        try:
            return fn(p), None
        except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            return None, {"point": p, "error": f"{type(exc).__name__}: {exc}"}

    with ThreadPoolExecutor(max_workers=min(_workers(cfg), max(len(points), 1))) as ex:
        out = list(ex.map(safe, points))
    rows = [r for r, e in out if r is not None]
    failures = [e for _, e in out if e is not None]
    return rows, failures


def _fit_dict(points, predicted, tolerance) -> Optional[dict]:
    try:
        return loglog_fit(points, predicted=predicted, tolerance=tolerance).to_dict()
    except FitError:
        return None


# ---------------------------------------------------------------------------
# experiments


def run_resolvent2d(cfg: ExperimentConfig) -> RunResult:
    a = cfg.profile()
    K_of = K_RULES[cfg.K_rule]

    def point(h):
        K = K_of(h)
        op = spectral2d.StationaryOperator(h, a, K, shift=cfg.shift)
        row = {"h": h, "K": K}
        if op.is_undamped:
            row["resolvent_norm"] = spectral2d.resolvent_norm(op)
            n = np.arange(-K, K + 1) ** 2
            row["closed_form"] = 1.0 / float(np.min(np.abs(h * h * (n[:, None] + n[None, :])
                                                            - cfg.shift)))
            row["shift"] = cfg.shift
        elif cfg.envelope:
            e = spectral2d.resolvent_envelope(a, h, K)
            row.update(resolvent_norm=e.resolvent_norm, shift=e.shift, method=e.method)
        else:
            row.update(resolvent_norm=spectral2d.resolvent_norm(op), shift=cfg.shift)
        return row

    rows, failures = _map_points(cfg, point, sorted(map(float, cfg.h_list), reverse=True))
    try:
        pred = spectral2d.predicted_exponent(a)
        formula = ("2 + 2/(2 beta + 5)" if a.kind is DampingKind.DISK else "2 + 1/(gamma + 2)")
    except ValueError:
        pred, formula = None, "none (undamped or custom damping)"
    fit = None
    if pred is not None:
        fit = _fit_dict([(1 / r["h"], r["resolvent_norm"]) for r in rows], pred, cfg.tolerance)
    quantity = ("max over z in [1, (1+h)^2] of ||(-h^2 Laplacian - z + i h a)^-1||"
                if cfg.envelope and not any("closed_form" in r for r in rows)
                else f"||(-h^2 Laplacian - {cfg.shift:g} + i h a)^-1||")
    return RunResult(rows, {"quantity": quantity, "prediction_formula": formula,
                            "predicted": pred, "fit": fit}, failures)


def _strip_W(a: DampingProfile, n: int) -> np.ndarray:
    if a.kind is not DampingKind.STRIP:
        raise ConfigError("damping", "resolvent1d needs a strip damping")
    x = oned.collocation_grid(n)
    return np.asarray(a(x, np.zeros_like(x)), dtype=float)


def run_resolvent1d(cfg: ExperimentConfig) -> RunResult:
    a = cfg.profile()
    W = _strip_W(a, cfg.grid_n)
    delta = 1.0 / (a.gamma + 2)

    def point(h):
        p = oned.maximize_resolvent_1d(h, W, delta, per_decade=cfg.lambda_per_decade)
        return {"h": h, "lambda": p.lam, "norm": p.norm, "method": p.method}

    rows, failures = _map_points(cfg, point, sorted(map(float, cfg.h_list), reverse=True))
    fit = _fit_dict([(1 / r["h"], r["norm"]) for r in rows], delta, cfg.tolerance)
    return RunResult(rows, {"quantity": "max over lambda of ||(-d^2/dx^2 - lambda^2 + i W/h)^-1||",
                            "prediction_formula": "1/(gamma + 2)", "predicted": delta,
                            "fit": fit}, failures)


def run_averaging(cfg: ExperimentConfig) -> RunResult:
    a = cfg.profile()
    W = averaging.average_along(a, grid_n=cfg.grid_n)
    rows = [{"x": float(x), "W": float(w)} for x, w in zip(W.x, W.samples)]
    failures, fits = [], {}
    if a.kind is DampingKind.DISK:
        pred, formula = a.params.beta + 0.5, "beta + 1/2"
    elif a.kind is DampingKind.STRIP:
        pred, formula = float(a.gamma), "gamma"
    else:
        pred, formula = None, "none"
    for side in ("left", "right"):
        try:
            s, r2 = averaging.fit_vanishing_exponent(W, side, tuple(cfg.window))
            fits[side] = {"exponent": s, "r2": r2,
                          "passed": None if pred is None else abs(s - pred) <= cfg.tolerance}
        except (FitError, ValueError) as exc:
            failures.append({"point": side, "error": str(exc)})
    return RunResult(rows, {"quantity": "vanishing exponent of the average of a along (0, 1)",
                            "prediction_formula": formula, "predicted": pred, "fit": fits},
                     failures)


def run_normalform(cfg: ExperimentConfig) -> RunResult:
    a = cfg.profile()
    K_of = K_RULES[cfg.K_rule]

    def point(h):
        K = K_of(h)
        r = pseudodiff.conjugation_residual(a, h, K, pseudodiff.make_probe(h, K))
        return {"h": h, "K": K, "residual": r}

    rows, failures = _map_points(cfg, point, sorted(map(float, cfg.h_list), reverse=True))
    fit = None
    try:
        fit = loglog_fit([(r["h"], r["residual"]) for r in rows], min_points=3).to_dict()
    except FitError as exc:
        failures.append({"point": "fit", "error": str(exc)})
    return RunResult(rows, {"quantity": "||e^G (P + i h a) e^-G w - (P + i h A(a) - [h^2 D_x^2, G]) w||",
                            "prediction_formula": "residual order in h at least 2 (fit >= 1.8)",
                            "predicted": 2.0, "fit": fit}, failures)


def run_decay(cfg: ExperimentConfig) -> RunResult:
    a = cfg.profile()
    rec = timedomain.measure_decay(a, T=cfg.T, dt=cfg.dt, K=cfg.K, sample_dt=cfg.sample_dt)
    try:
        pred = timedomain.predicted_decay_rate(a)
    except ValueError:
        pred = None
    return RunResult(rec.rows(), {
        "quantity": "E(t)^(1/2) / ||(u0, u1)||_(H^2 x H^1) for a trapped packet",
        "prediction_formula": "1 - 2/(2 beta + 7) (disk), 1 - 1/(gamma + 3) (strip)",
        "predicted": pred, "fit": {"alpha": rec.alpha, "r2": rec.r2, "window": list(rec.window),
                                   "exponential_fits_better": rec.exponential},
        "strictly_decreasing": rec.strictly_decreasing(), "final_energy": rec.final_energy(),
        "note": rec.note})


def run_generator_spectrum(cfg: ExperimentConfig) -> RunResult:
    a = cfg.profile()
    g = spectral2d.generator_spectrum(a, cfg.K)
    order = np.lexsort((g.eigenvalues.real, g.eigenvalues.imag))
    rows = [{"re": float(z.real), "im": float(z.imag)} for z in g.eigenvalues[order]]
    fit = g.decay_fit()
    return RunResult(rows, {"quantity": "eigenvalues of the truncated damped-wave generator",
                            "prediction_formula": "Re lambda <= 0; gap to the axis in 0.5 <= |Im| <= K/2",
                            "predicted": None, "max_real_part": g.max_real_part(),
                            "min_abs_real_in_band": g.min_abs_real_in_band(),
                            "fit": None if fit is None else fit.to_dict()})


RUNNERS: dict = {
    "resolvent2d": run_resolvent2d,
    "resolvent1d": run_resolvent1d,
    "averaging": run_averaging,
    "normalform": run_normalform,
    "decay": run_decay,
    "generator-spectrum": run_generator_spectrum,
}


# ---------------------------------------------------------------------------
# persistence


def _csv_text(rows: list) -> str:
    buf = io.StringIO()
    if rows:
        cols = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _report(cfg: ExperimentConfig, res: RunResult) -> str:
    s = res.summary
    lines = [f"experiment: {cfg.kind}", f"damping: {cfg.damping}",
             f"quantity: {s.get('quantity')}",
             f"prediction: {s.get('prediction_formula')} = {s.get('predicted')}",
             f"points: {len(res.rows)}, failures: {len(res.failures)}"]
    fit = s.get("fit")
    if isinstance(fit, dict) and "slope" in fit:
        lines.append(f"fitted slope {fit['slope']:.4f} (r2 {fit['r2']:.4f}), "
                     f"passed: {fit.get('passed')}")
    elif fit:
        lines.append(f"fit: {json.dumps(_jsonable(fit), sort_keys=True)}")
    for f in res.failures:
        lines.append(f"failure at {f['point']}: {f['error']}")
    return "\n".join(lines) + "\n"


def write_artifacts(cfg: ExperimentConfig, res: RunResult, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = cfg.kind
    paths = {"csv": out_dir / f"{stem}.csv", "json": out_dir / f"{stem}.json",
             "report": out_dir / f"{stem}.txt"}
    paths["csv"].write_text(_csv_text(res.rows))
    summary = dict(res.summary, config=dataclasses.asdict(cfg), failures=res.failures,
                   exit_code=res.exit_code)
    paths["json"].write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    paths["report"].write_text(_report(cfg, res))
    return paths


def run(cfg: ExperimentConfig, out_dir: Optional[Path] = None) -> tuple:
    """Validate, execute and persist; returns ``(exit_code, RunResult | None)``."""
    try:
        cfg.validate()
    except ConfigError as exc:
        print(f"config error in field {exc.field!r}: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    np.random.seed(cfg.seed)
    try:
        res = RUNNERS[cfg.kind](cfg)
    except ConfigError as exc:
        print(f"config error in field {exc.field!r}: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        res = RunResult([], {"quantity": cfg.kind, "prediction_formula": None},
                        [{"point": "run", "error": f"{type(exc).__name__}: {exc}"}])
    write_artifacts(cfg, res, Path(out_dir or cfg.out_dir))
    return res.exit_code, res


# ---------------------------------------------------------------------------
# command line


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torusdamp",
                                description="Damped-wave experiments on the flat torus.")
    sub = p.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind, help=f"run a {kind} experiment")
        s.add_argument("--config", type=Path, help="JSON experiment file")
        s.add_argument("--out", type=Path, help="output directory")
        s.add_argument("--seed", type=int, help="seed for randomized probes")
        s.add_argument("--threads", type=int, help="worker count (0 = all cores)")
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = ExperimentConfig.from_json(args.config.read_text())
            if cfg.kind != args.kind:
                raise ConfigError("kind", f"file says {cfg.kind!r}, command says {args.kind!r}")
        else:
            cfg = ExperimentConfig(kind=args.kind)
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    code, res = run(cfg, args.out)
    if res is not None:
        sys.stdout.write(_report(cfg, res))
    return code


__all__ = ["ConfigError", "ExperimentConfig", "KINDS", "K_RULES", "RunResult", "RUNNERS",
           "build_parser", "main", "run", "write_artifacts"]
