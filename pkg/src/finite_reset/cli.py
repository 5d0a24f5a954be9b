"""Command-line front end.

Every subcommand reads an optional flat TOML file (``--config``) whose keys
match the flag names with underscores; flags given on the command line win.
Outputs go to a directory (``--output``); CSV is written with '.' decimals and
17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import engine as eng
from . import multibit
from . import work_stats as ws
from .coherence import (
    DensityMatrix2,
    Hamiltonian2,
    corrected_quench_work,
    sudden_quench_work,
    transition_probability,
    coherent_average_work,
)
from .thermo_core import ProtocolConfig, delta_trace, evolve_protocol, reset_failure_bound

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"invalid config field '{field_name}': {message}")
        self.field_name = field_name


@dataclass
class RunConfig:
    beta: float = 1.0
    step_energy: float = 0.5
    num_steps: int = 8
    swap_prob: float = 0.5
    therm_steps: int = 2
    t_cold: float = 0.5
    t_hot: float = 1.0
    e_max: float = 5.0
    seed: int = 0
    n_samples: int = 0
    output_path: str = "out"
    format: str = "csv"
    eps: list[float] = field(default_factory=lambda: [0.1, 0.01, 0.001])
    mode: str = "limit-cycle"
    n_bits: int = 1
    kind: str = "engine"
    values: list[int] = field(default_factory=lambda: list(range(1, 21)))
    grid: str = "default"
    workers: int | None = None

    def protocol(self) -> ProtocolConfig:
        return _build(ProtocolConfig, beta=self.beta, step_energy=self.step_energy,
                      num_steps=self.num_steps, swap_prob=self.swap_prob,
                      therm_steps=self.therm_steps)

    def engine(self) -> eng.EngineConfig:
        return _build(eng.EngineConfig, t_cold=self.t_cold, t_hot=self.t_hot, e_max=self.e_max,
                      num_steps=self.num_steps, swap_prob=self.swap_prob,
                      therm_steps=self.therm_steps)

    def validate(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if self.n_samples < 0:
            raise ConfigError("n_samples", "must be >= 0")
        if self.format not in ("csv", "json"):
            raise ConfigError("format", "must be 'csv' or 'json'")
        for e in self.eps:
            if not 0.0 < e < 1.0:
                raise ConfigError("eps", f"{e} is outside (0, 1)")
        if self.n_bits < 1:
            raise ConfigError("n_bits", "must be >= 1")
        if self.mode not in ("first-cycle", "limit-cycle"):
            raise ConfigError("mode", "must be 'first-cycle' or 'limit-cycle'")


def _build(cls, **kwargs):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        name = next((k for k in kwargs if msg.startswith(k) or f" {k} " in f" {msg} "), "config")
        raise ConfigError(name, msg) from exc


def _coerce(name: str, value: Any) -> Any:
    current = RunConfig.__dataclass_fields__[name]
    kind = str(current.type)
    try:
        if name in ("eps",):
            return [float(v) for v in (value.split(",") if isinstance(value, str) else value)]
        if name == "values":
            return _parse_int_list(value)
        if kind.startswith("int"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind.startswith("float"):
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, f"cannot interpret {value!r}") from exc
    return value


def _parse_int_list(value: Any) -> list[int]:
    if isinstance(value, list):
        return [int(v) for v in value]
    text = str(value)
    if ":" in text:
        lo, hi = (int(v) for v in text.split(":"))
        return list(range(lo, hi + 1))
    return [int(v) for v in text.split(",")]


def load_run_config(path: str | None, overrides: dict[str, Any]) -> RunConfig:
    values: dict[str, Any] = {}
    if path:
        try:
            with open(path, "rb") as fh:
                values.update(tomllib.load(fh))
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("config", f"{path}: {exc}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    for key in values:
        if key not in known:
            raise ConfigError(key, "unknown key")
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    cfg.validate()
    return cfg


def _num(x: float) -> float | None:
    """JSON-safe number: non-finite values become null."""
    return float(x) if math.isfinite(x) else None


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write(out_dir: Path, name: str, text: str) -> Path:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / name
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {out_dir / name}: {exc.strerror}") from exc
    return path


def _dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _table_text(rows: list[dict[str, Any]], fmt: str) -> str:
    if fmt == "json":
        return _dump_json(rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if rows:
        writer.writerow(rows[0].keys())
        for row in rows:
            writer.writerow(["" if v is None else _fmt(v) if isinstance(v, float) else v
                             for v in row.values()])
    return buf.getvalue()


def _dist_text(dist: ws.WorkDistribution, fmt: str) -> str:
    return dist.to_csv() if fmt == "csv" else dist.to_json() + "\n"


def cmd_distribution(cfg: RunConfig) -> list[Path]:
    proto = cfg.protocol()
    out = Path(cfg.output_path)
    exact = ws.exact_work_distribution(proto)
    written = [_write(out, f"exact.{cfg.format}", _dist_text(exact, cfg.format))]
    sampled = None
    if cfg.n_samples:
        sampled = ws.sample_trajectories(proto, cfg.n_samples, cfg.seed, workers=cfg.workers).distribution
        written.append(_write(out, f"sampled.{cfg.format}", _dist_text(sampled, cfg.format)))

    lower, upper = ws.average_work_bounds(proto)
    w_max = []
    for eps in cfg.eps:
        w_max.append({
            "eps": eps,
            "exact": ws.empirical_w_max_eps(exact, eps),
            "sampled": None if sampled is None else ws.empirical_w_max_eps(sampled, eps),
            "bound": _num(ws.w_max_eps_bound(proto, eps)),
        })
    tails = []
    for omega in np.linspace(0.0, proto.e_max, 11):
        rep = ws.concentration_report(proto, float(omega), exact)
        tails.append({
            "omega": float(omega),
            "exact_tail": rep.empirical_tail,
            "sampled_tail": None if sampled is None else sampled.two_sided_tail(float(omega)),
            "bound_quasi": rep.bound_quasi,
            "bound_finite": rep.bound_finite,
        })
    summary = {
        "config": {"beta": proto.beta, "step_energy": proto.step_energy, "num_steps": proto.num_steps,
                   "swap_prob": proto.swap_prob, "therm_steps": proto.therm_steps},
        "seed": cfg.seed,
        "n_samples": cfg.n_samples,
        "exact": {"mean": exact.mean(), "variance": exact.variance()},
        "sampled": None if sampled is None else {"mean": sampled.mean(), "variance": sampled.variance()},
        "mean_bounds": {"lower": lower, "upper": upper},
        "unbounded_sensitivity": proto.p_sw == 0.0,
        "reset_failure_bound": reset_failure_bound(proto),
        "final_p_upper": evolve_protocol(proto)[-1].occupation.p_upper,
        "w_max_eps": w_max,
        "concentration": tails,
    }
    written.append(_write(out, "summary.json", _dump_json(summary)))
    return written


def engine_summary(config: eng.EngineConfig, report: eng.CycleReport) -> dict[str, Any]:
    bounds = eng.efficiency_bounds(config)
    try:
        threshold = eng.min_time_positive_output(config)
    except eng.NoEngineRegimeError:
        threshold = math.nan
    return {
        "config": {"t_cold": config.t_cold, "t_hot": config.t_hot, "e_max": config.e_max,
                   "num_steps": config.num_steps, "swap_prob": config.swap_prob,
                   "therm_steps": config.therm_steps},
        "converged": report.converged,
        "cycles": report.cycles,
        "start_p_upper": report.start.p_upper,
        "net_work": report.net_work,
        "duration": report.duration,
        "power": _num(report.power),
        "efficiency": eng.realized_efficiency(report, config),
        "quasistatic_net_work": eng.quasistatic_net_work(config),
        "net_work_bound": eng.net_work_bound(config),
        "power_bound": _num(eng.power_bound(config)) if config.therm_steps >= 1 else None,
        "eta_lower": bounds.eta_lower,
        "eta_upper": bounds.eta_upper,
        "eta_quasi": bounds.eta_quasi,
        "eta_carnot": bounds.eta_carnot,
        "threshold_time": _num(threshold),
    }


def cmd_engine(cfg: RunConfig) -> list[Path]:
    config = cfg.engine()
    report = eng.run_cycle(config, cfg.mode)
    out = Path(cfg.output_path)
    if cfg.format == "csv":
        cycle_text = report.to_csv()
    else:
        rows = list(csv.DictReader(io.StringIO(report.to_csv())))
        cycle_text = _dump_json(rows)
    return [_write(out, f"cycle.{cfg.format}", cycle_text),
            _write(out, "summary.json", _dump_json(engine_summary(config, report)))]


def _sweep_row(cfg: RunConfig, t: int) -> dict[str, Any]:
    if cfg.kind == "engine":
        config = _build(eng.EngineConfig, t_cold=cfg.t_cold, t_hot=cfg.t_hot, e_max=cfg.e_max,
                        num_steps=cfg.num_steps, swap_prob=cfg.swap_prob, therm_steps=t)
        s = engine_summary(config, eng.run_cycle(config, cfg.mode))
        power_out = None if s["power"] is None else -s["power"]
        return {"therm_steps": t, "net_work": s["net_work"], "net_work_bound": s["net_work_bound"],
                "power": s["power"], "power_out": power_out, "power_bound": s["power_bound"],
                "efficiency": s["efficiency"], "eta_lower": s["eta_lower"], "eta_upper": s["eta_upper"]}
    proto = _build(ProtocolConfig, beta=cfg.beta, step_energy=cfg.step_energy, num_steps=cfg.num_steps,
                   swap_prob=cfg.swap_prob, therm_steps=t)
    dist = ws.exact_work_distribution(proto)
    lower, upper = ws.average_work_bounds(proto)
    eps = cfg.eps[0]
    mb = multibit.multi_bit_bound(cfg.n_bits, proto, eps)
    return {"therm_steps": t, "mean": dist.mean(), "mean_lower": lower, "mean_upper": upper,
            "eps": eps, "w_max_eps": ws.empirical_w_max_eps(dist, eps),
            "w_max_eps_bound": _num(ws.w_max_eps_bound(proto, eps)),
            "reset_failure_bound": reset_failure_bound(proto), "n_bits": cfg.n_bits,
            "multi_bit_work_bound": _num(mb.total_work_bound),
            "multi_bit_fail_bound": mb.combined_fail_bound,
            "multi_bit_excess_bound": multibit.average_multibit_excess(cfg.n_bits, proto)}


def cmd_sweep(cfg: RunConfig) -> list[Path]:
    if cfg.kind not in ("engine", "reset"):
        raise ConfigError("kind", "must be 'engine' or 'reset'")
    workers = cfg.workers or ws._default_workers()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(lambda t: _sweep_row(cfg, t), cfg.values))
    return [_write(Path(cfg.output_path), f"sweep.{cfg.format}", _table_text(rows, cfg.format))]


def cmd_coherence_demo(cfg: RunConfig) -> list[Path]:
    """Uncorrected vs corrected quench work for a rotation sweep of the new eigenbasis."""
    p_lower, p_upper = 0.8, 0.2
    h_old = Hamiltonian2.from_levels(0.0, 1.0)
    rho = DensityMatrix2.diagonal(p_lower, p_upper)
    rows = []
    for theta in np.linspace(0.0, math.pi / 2, 13):
        h_new = Hamiltonian2.from_levels(0.0, 2.0, float(theta))
        rows.append({
            "theta": float(theta),
            "transition_prob": transition_probability(h_old, h_new, 0, 1),
            "uncorrected": sudden_quench_work(rho, h_old, h_new),
            "two_measurement": coherent_average_work(p_lower, p_upper,
                                                     transition_probability(h_old, h_new, 0, 1), 1.0, 2.0),
            "corrected": corrected_quench_work(rho, h_old, h_new),
        })
    return [_write(Path(cfg.output_path), f"coherence.{cfg.format}", _table_text(rows, cfg.format))]


# --- verification -----------------------------------------------------------

VERIFY_GRIDS = {
    "default": {"swap_prob": [0.0, 0.3, 1.0], "therm_steps": [0, 1, 3], "beta_step": [0.1, 1.0],
                "num_steps": [10, 50], "ratio": [0.2, 0.5, 0.9], "engine_num_steps": [100]},
    "small": {"swap_prob": [0.0, 0.5], "therm_steps": [0, 2], "beta_step": [0.5],
              "num_steps": [8], "ratio": [0.5], "engine_num_steps": [50]},
}

ENGINE_E_MAX = 5.0


@dataclass
class Check:
    check: str
    config: dict[str, Any]
    bound: float | None
    observed: float
    margin: float | None
    status: str

    def as_row(self) -> dict[str, Any]:
        return {"check": self.check, "config": json.dumps(self.config, sort_keys=True),
                "bound": self.bound, "observed": self.observed, "margin": self.margin,
                "status": self.status}


def _check(name: str, config: dict, bound: float, observed: float, tol: float = 1e-12) -> Check:
    if not math.isfinite(bound):
        return Check(name, config, None, observed, None, "unbounded")
    margin = bound - observed
    return Check(name, config, bound, observed, margin, "pass" if margin >= -tol else "fail")


def run_verification(grid: dict[str, list], bound_scale: dict[str, float] | None = None) -> list[Check]:
    """Bound-domination checks over a parameter grid.

    ``bound_scale`` multiplies named bounds before comparison; it exists so the
    harness can be shown to fail when a bound is wrong.
    """
    scale = {"mean": 1.0, "mcdiarmid": 1.0, "w_max": 1.0, "delta": 1.0, "reset_failure": 1.0,
             "net_work": 1.0, "efficiency": 1.0}
    scale.update(bound_scale or {})
    checks: list[Check] = []
    for p in grid["swap_prob"]:
        for t in grid["therm_steps"]:
            for be in grid["beta_step"]:
                for n in grid["num_steps"]:
                    checks.extend(_protocol_checks(ProtocolConfig(1.0, be, n, p, t), scale))
    for ratio in grid["ratio"]:
        for p in grid["swap_prob"]:
            for t in grid["therm_steps"]:
                for n in grid["engine_num_steps"]:
                    checks.extend(_engine_checks(eng.EngineConfig(ratio, 1.0, ENGINE_E_MAX, n, p, t), scale))
    return checks


def _protocol_checks(c: ProtocolConfig, scale: dict[str, float]) -> list[Check]:
    key = {"beta": c.beta, "step_energy": c.step_energy, "num_steps": c.num_steps,
           "swap_prob": c.swap_prob, "therm_steps": c.therm_steps}
    dist = ws.exact_work_distribution(c)
    lower, upper = ws.average_work_bounds(c)
    mean = dist.mean()
    out = [
        _check("mean_lower", key, mean, lower),
        _check("mean_upper", key, scale["mean"] * (upper + c.step_energy / 2), mean),
        _check("reset_failure", key, scale["reset_failure"] * reset_failure_bound(c),
               evolve_protocol(c)[-1].occupation.p_upper),
        _check("delta", key, *max(((scale["delta"] * r.delta_bound, r.delta_actual) for r in delta_trace(c)),
                                  key=lambda pair: pair[1] - pair[0])),
    ]
    if c.p_sw == 0.0:
        out.append(_check("mcdiarmid", key, math.inf, dist.two_sided_tail(0.0)))
        out.append(_check("w_max_eps", key, math.inf, ws.empirical_w_max_eps(dist, 0.01)))
        return out
    worst = None
    for omega in np.linspace(0.0, c.e_max, 50):
        chk = _check("mcdiarmid", key, scale["mcdiarmid"] * ws.mcdiarmid_bound(c, float(omega)),
                     dist.two_sided_tail(float(omega)))
        if worst is None or chk.margin < worst.margin:
            worst = chk
    out.append(worst)
    for eps in (0.1, 0.01, 0.001):
        out.append(_check(f"w_max_eps[{eps}]", key, scale["w_max"] * ws.w_max_eps_bound(c, eps),
                          ws.empirical_w_max_eps(dist, eps)))
    return out


def _engine_checks(c: eng.EngineConfig, scale: dict[str, float]) -> list[Check]:
    key = {"t_cold": c.t_cold, "t_hot": c.t_hot, "e_max": c.e_max, "num_steps": c.num_steps,
           "swap_prob": c.swap_prob, "therm_steps": c.therm_steps}
    report = eng.run_cycle(c, "limit-cycle")
    bounds = eng.efficiency_bounds(c)
    one_bit = c.t_hot * math.log(2.0)
    slack = c.step_energy / one_bit
    eta = eng.realized_efficiency(report, c)
    # The net-work bound is a continuum statement; each staged half overshoots it by at most
    # step_energy / 2 (left/right Riemann error of a monotone integrand), so allow one step.
    return [
        _check("net_work", key, scale["net_work"] * eng.net_work_bound(c) + c.step_energy,
               report.net_work),
        _check("efficiency_upper", key, bounds.eta_upper + slack, eta),
        _check("efficiency_lower", key, eta, scale["efficiency"] * bounds.eta_lower - slack),
    ]


def cmd_verify(cfg: RunConfig, bound_scale: dict[str, float] | None = None) -> int:
    if cfg.grid not in VERIFY_GRIDS:
        raise ConfigError("grid", f"unknown grid {cfg.grid!r}; choose from {sorted(VERIFY_GRIDS)}")
    checks = run_verification(VERIFY_GRIDS[cfg.grid], bound_scale)
    rows = [c.as_row() for c in checks]
    _write(Path(cfg.output_path), f"verify.{cfg.format}", _table_text(rows, cfg.format))
    failures = [c for c in checks if c.status == "fail"]
    unbounded = sum(c.status == "unbounded" for c in checks)
    for c in failures:
        print(f"VIOLATION {c.check} config={json.dumps(c.config, sort_keys=True)} "
              f"bound={c.bound!r} observed={c.observed!r} margin={c.margin!r}")
    print(f"{len(checks)} checks: {len(checks) - len(failures) - unbounded} pass, "
          f"{unbounded} unbounded, {len(failures)} fail")
    return 1 if failures else 0


# --- argument parsing -------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat TOML file with run parameters")
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", dest="n_samples", type=int)
    common.add_argument("--output", dest="output_path")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--workers", type=int, help=f"worker threads (default ${ws.WORKERS_ENV} or 1)")
    for name in ("beta", "step_energy", "swap_prob", "t_cold", "t_hot", "e_max"):
        common.add_argument("--" + name.replace("_", "-"), dest=name, type=float)
    for name in ("num_steps", "therm_steps", "n_bits"):
        common.add_argument("--" + name.replace("_", "-"), dest=name, type=int)

    parser = argparse.ArgumentParser(prog="finite-reset",
                                     description="Finite-time bit reset and two-bath engine simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("distribution", parents=[common], help="exact and sampled work distributions")
    p.add_argument("--eps", help="comma-separated failure probabilities")
    p = sub.add_parser("engine", parents=[common], help="simulate one engine cycle")
    p.add_argument("--mode", choices=("first-cycle", "limit-cycle"))
    p = sub.add_parser("verify", parents=[common], help="bound-domination checks over a grid")
    p.add_argument("--grid", choices=sorted(VERIFY_GRIDS))
    p.add_argument("--scale-bound", action="append", default=[], help=argparse.SUPPRESS)
    sub.add_parser("coherence-demo", parents=[common], help="quench work with and without correction")
    p = sub.add_parser("sweep", parents=[common], help="sweep therm_steps")
    p.add_argument("--kind", choices=("engine", "reset"))
    p.add_argument("--values", help="therm_steps values, 'a:b' or comma list")
    p.add_argument("--eps", help="failure probability (first value used)")
    p.add_argument("--mode", choices=("first-cycle", "limit-cycle"))
    return parser


COMMANDS = {
    "distribution": cmd_distribution,
    "engine": cmd_engine,
    "coherence-demo": cmd_coherence_demo,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "scale_bound")}
    try:
        cfg = load_run_config(args.config, overrides)
        if args.command == "verify":
            scale = {}
            for item in args.scale_bound:
                name, _, factor = item.partition("=")
                scale[name] = float(factor)
            return cmd_verify(cfg, scale)
        for path in COMMANDS[args.command](cfg):
            print(path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except eng.LimitCycleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
