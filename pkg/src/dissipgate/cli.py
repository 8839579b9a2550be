"""Command-line front end: ``dissipgate <command> [options]``.

Every command writes ``<out>/<command>.csv`` (and a JSON summary where
relevant). CSV files start with ``#`` metadata lines holding the resolved run
configuration; passing such a CSV back through ``--config`` reruns it.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .analytic import InvalidRegimeError, analytic_gate
from .gates import BUILDERS, LABELS, GateSchedule, SystemParams, build
from .lindblad import DimensionError, IntegrationError
from .metrics import default_times, error_series, evaluate, optimal_gate_time, photon_counts
from .optimize import FLOAT_FIELDS, Axis, SweepSpec, default_threads, minimize, sweep

log = logging.getLogger("dissipgate")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
PRESETS = {"paper-hardware": {"g": 4.4, "gamma": 0.3, "kappa": 0.6, "t1": 20.0, "t2": 1.0}}
CONFIG_KEYS = {"command", "gate", "preset", "params", "noise", "threads", "seed", "options"}
NOISE_KEYS = {"enabled", "t1", "t2", "gamma_g"}
PARAM_KEYS = set(FLOAT_FIELDS) - {"t1", "t2", "gamma_g"} | {"fock_cutoff"}
PARAM_FLAGS = {
    "g": "g", "gamma": "gamma", "kappa": "kappa", "omega": "omega", "delta": "delta",
    "big_delta": "Delta", "r": "r",
}
DEFAULT_SCAN_POINTS = 25
NUMERIC_ERRORS = (IntegrationError, DimensionError, np.linalg.LinAlgError, InvalidRegimeError, FloatingPointError)


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config


@dataclasses.dataclass
class RunConfig:
    command: str
    gate: str = "or-spont"
    preset: str | None = None
    params: dict = dataclasses.field(default_factory=dict)
    noise: dict = dataclasses.field(default_factory=lambda: {"enabled": True})
    threads: int | None = None
    seed: int = 0
    options: dict = dataclasses.field(default_factory=dict)

    def system_params(self) -> SystemParams:
        kw: dict[str, Any] = {}
        if self.preset:
            kw.update(PRESETS[self.preset])
        kw.update(self.params)
        noise = dict(self.noise)
        kw["noise"] = bool(noise.pop("enabled", True))
        kw.update(noise)
        try:
            return SystemParams(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid parameters: {exc}") from None

    def resolved(self) -> dict:
        """Every setting that affects the result, with defaults filled in."""
        p = self.system_params().as_dict()
        return {
            "command": self.command,
            "gate": self.gate,
            "preset": self.preset,
            "params": {k: p[k] for k in sorted(PARAM_KEYS)},
            "noise": {"enabled": p["noise"], **{k: p[k] for k in sorted(NOISE_KEYS - {"enabled"})}},
            "seed": self.seed,
            "options": dict(sorted(self.options.items())),
        }


def _check_keys(section: str, got: dict, allowed: set) -> None:
    unknown = set(got) - allowed
    if unknown:
        raise ConfigError(f"unknown {section} key(s): {', '.join(sorted(unknown))}")


def load_config(path: str | Path) -> dict:
    """Read a JSON config file or the embedded config of a CSV artifact."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.suffix == ".csv":
        for line in text.splitlines():
            if line.startswith("# config "):
                text = line[len("# config ") :]
                break
        else:
            raise ConfigError(f"{path} has no embedded config line")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys("config", data, CONFIG_KEYS)
    _check_keys("params", data.get("params", {}), PARAM_KEYS)
    _check_keys("noise", data.get("noise", {}), NOISE_KEYS)
    return data


def build_config(args: argparse.Namespace, option_names: Sequence[str]) -> RunConfig:
    data = load_config(args.config) if args.config else {}
    cmd = args.command
    if data.get("command", cmd) != cmd:
        raise ConfigError(f"config is for command {data['command']!r}, not {cmd!r}")
    cfg = RunConfig(
        command=cmd,
        gate=data.get("gate", "or-spont"),
        preset=data.get("preset"),
        params=dict(data.get("params", {})),
        noise=dict(data.get("noise", {"enabled": True})),
        threads=data.get("threads"),
        seed=int(data.get("seed", 0)),
        options=dict(data.get("options", {})),
    )
    _check_keys("options", cfg.options, set(option_names))
    if args.gate is not None:
        cfg.gate = args.gate
    if args.preset is not None:
        cfg.preset = args.preset
    if cfg.preset is not None and cfg.preset not in PRESETS:
        raise ConfigError(f"unknown preset {cfg.preset!r}; expected one of {sorted(PRESETS)}")
    if cfg.gate not in BUILDERS:
        raise ConfigError(f"unknown gate {cfg.gate!r}; expected one of {sorted(BUILDERS)}")
    for flag, name in PARAM_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            cfg.params[name] = v
    if args.r is not None:
        cfg.params.pop("delta", None)
        cfg.params.pop("Delta", None)
    if args.fock is not None:
        cfg.params["fock_cutoff"] = args.fock
    for name in ("t1", "t2"):
        v = getattr(args, name)
        if v is not None:
            cfg.noise[name] = v
    if args.no_noise:
        cfg.noise["enabled"] = False
    if args.seed is not None:
        cfg.seed = args.seed
    for name in option_names:
        v = getattr(args, name, None)
        if v is not None:
            cfg.options[name] = v
    if args.threads is not None:
        cfg.threads = args.threads
    try:
        cfg.threads = cfg.threads if cfg.threads is not None else default_threads()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.threads < 1:
        raise ConfigError("--threads must be >= 1")
    cfg.system_params()  # validate early
    return cfg


# ------------------------------------------------------------------ output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, float, np.integer, np.floating)):
        return f"{float(v):.8e}"
    return str(v)


def write_csv(path: Path, cfg: RunConfig, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    buf.write(f"# dissipgate {__version__} {cfg.command}\n")
    buf.write(f"# generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n")
    buf.write("# config " + json.dumps(cfg.resolved(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _clean(v: float) -> float | None:
    v = float(v)
    return None if math.isnan(v) else v


# ---------------------------------------------------------------- commands


def _parse_range(text: str) -> np.ndarray:
    """``a:b:n`` (inclusive linspace) or a comma-separated list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return np.linspace(float(a), float(b), int(n))
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}; use a:b:n or a comma list") from None


def _times(opts: dict, default=None):
    if "t_max" in opts:
        return np.linspace(0.0, float(opts["t_max"]), int(opts.get("points", 201)))
    return default


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    p = cfg.system_params()
    gate = build(cfg.gate, p)
    times = _times(cfg.options)
    if times is None and not isinstance(gate, GateSchedule):
        points = int(cfg.options.get("points", 201))
        times = np.linspace(0.0, 100.0, points) if p.omega == 0 else default_times(gate, points)
    series = error_series(gate, times)
    if isinstance(gate, GateSchedule):
        t_opt, min_err, boundary = float(series.times[-1]), float(series.average[-1]), False
    else:
        res = optimal_gate_time(series)
        t_opt, min_err, boundary = res.t_opt, res.min_error, res.at_boundary
    header = ["time_ns", *(f"P_e({lab})" for lab in LABELS), "P_e_avg"]
    rows = [
        [t, *(series.per_input[lab][k] for lab in LABELS), series.average[k]]
        for k, t in enumerate(series.times)
    ]
    write_csv(out / "simulate.csv", cfg, header, rows)
    summary: dict[str, Any] = {"gate": cfg.gate, "t_opt": t_opt, "min_error": min_err, "at_boundary": boundary}
    if cfg.options.get("photons", True) and t_opt > 0:
        summary["photon_counts"] = photon_counts(gate, t_opt)
        summary["mean_photons"] = float(np.mean(list(summary["photon_counts"].values())))
    write_json(out / "simulate.json", summary)
    return summary


def cmd_sweep(cfg: RunConfig, out: Path) -> dict:
    o = cfg.options
    if "axis" not in o or "values" not in o:
        raise ConfigError("sweep needs --axis and --values")
    try:
        axes = [Axis(o["axis"], _parse_range(o["values"]))]
        if o.get("axis2"):
            if "values2" not in o:
                raise ConfigError("--axis2 needs --values2")
            axes.append(Axis(o["axis2"], _parse_range(o["values2"])))
        reopt = tuple(x for x in o.get("reoptimize", "").split(",") if x)
        spec = SweepSpec(cfg.system_params(), tuple(axes), cfg.gate, reopt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    res = sweep(spec, cfg.threads)
    rows = res.rows()
    header = [*res.names, "omega_opt", "t_opt", "min_error", "status"]
    write_csv(out / "sweep.csv", cfg, header, [[r[h] for h in header] for r in rows])
    best = {k: _clean(v) for k, v in res.best().items()}
    summary = {"best": best, "points": len(rows), "failed": sum(r["status"] != "ok" for r in rows)}
    write_json(out / "sweep.json", summary)
    return summary


def _parse_bounds(text: str, free: Sequence[str]) -> dict:
    bounds = {"omega": (0.005, 0.5), "gamma": (0.005, 0.5), "r": (0.05, 5.0)}
    for item in filter(None, (text or "").split(",")):
        try:
            name, rng = item.split("=")
            lo, hi = (float(x) for x in rng.split(":"))
        except ValueError:
            raise ConfigError(f"cannot parse bound {item!r}; use name=lo:hi") from None
        if name not in bounds:
            raise ConfigError(f"bounds given for unknown parameter {name!r}")
        if not 0 < lo < hi:
            raise ConfigError(f"bound {item!r} must satisfy 0 < lo < hi")
        bounds[name] = (lo, hi)
    return {n: bounds[n] for n in free}


def cmd_optimize(cfg: RunConfig, out: Path) -> dict:
    o = cfg.options
    free = tuple(x for x in o.get("free", "omega").split(",") if x)
    for n in free:
        if n not in ("omega", "gamma", "r"):
            raise ConfigError(f"cannot optimise {n!r}; choose from omega, gamma, r")
    if cfg.gate in ("nor", "xor"):
        raise ConfigError("optimize supports the continuous OR gates")
    m = minimize(cfg.system_params(), free, _parse_bounds(o.get("bounds", ""), free), cfg.gate,
                 int(o.get("grid", DEFAULT_SCAN_POINTS)), cfg.threads)
    header = [*free, "min_error"]
    write_csv(out / "optimize.csv", cfg, header, [[pt[n] for n in free] + [e] for pt, e in m.trace])
    summary = {
        "optimum": {n: getattr(m.params, n) for n in free},
        "min_error": m.result.min_error,
        "t_opt": m.result.t_opt,
        "at_bounds": list(m.at_bounds),
        "evaluations": len(m.trace),
    }
    write_json(out / "optimize.json", summary)
    return summary


def cmd_analytic(cfg: RunConfig, out: Path) -> dict:
    if cfg.gate != "or-spont":
        raise ConfigError("the analytic model describes the or-spont gate")
    omegas = _parse_range(cfg.options.get("omega_scan", "0.05:0.3:11"))
    p0 = cfg.system_params()
    rows = []
    for om in omegas:
        p = p0.replace(omega=float(om))
        try:
            ta, pa = analytic_gate(p)
        except InvalidRegimeError:
            ta, pa = math.nan, math.nan
        full = evaluate(build("or-spont", p))
        rows.append([om, ta, full.t_opt, pa, full.min_error])
    header = ["omega", "t_opt_analytic", "t_opt_full", "pe_analytic", "pe_full"]
    write_csv(out / "analytic.csv", cfg, header, rows)
    arr = np.array(rows, dtype=float)
    ia, jf = int(np.nanargmin(arr[:, 3])), int(np.nanargmin(arr[:, 4]))
    summary = {
        "analytic_min": {"omega": arr[ia, 0], "pe_avg": arr[ia, 3], "t_opt": arr[ia, 1]},
        "full_min": {"omega": arr[jf, 0], "pe_avg": arr[jf, 4], "t_opt": arr[jf, 2]},
    }
    write_json(out / "analytic.json", summary)
    return summary


def cmd_photons(cfg: RunConfig, out: Path) -> dict:
    gate = build(cfg.gate, cfg.system_params())
    t_final = cfg.options.get("t_final")
    if t_final is None:
        t_final = evaluate(gate).t_opt
    counts = photon_counts(gate, float(t_final))
    mean = float(np.mean(list(counts.values())))
    write_csv(out / "photons.csv", cfg, ["input", "photons"], [[lab, counts[lab]] for lab in LABELS] + [["average", mean]])
    summary = {"t_final": float(t_final), "photon_counts": counts, "average": mean}
    write_json(out / "photons.json", summary)
    return summary


def cmd_selftest(cfg: RunConfig, out: Path) -> dict:
    """Fast internal consistency checks; raises on failure."""
    from .effective import ComplexDetunings, effective_model, ground_partition
    from .gates import TWO_PI, build_or_spontaneous
    from .hilbert import Space, annihilation, dag
    from .lindblad import LindbladModel, evolve

    checks = {}
    sp_ = Space([3])
    a = annihilation(3)
    m = LindbladModel(sp_, 0.7 * (a + dag(a)), (np.sqrt(0.4) * a,))
    t = np.linspace(0, 5, 6)
    d = np.abs(evolve(m, sp_.projector([2]), t, "rk45").states - evolve(m, sp_.projector([2]), t, "expm").states).max()
    checks["rk45_vs_expm"] = float(d)
    p = SystemParams(noise=False)
    s = build_or_spontaneous(p)
    em = effective_model(ground_partition(s), TWO_PI * p.g, ComplexDetunings.from_params(p))
    gb = s.ground_basis
    got = em.element(em.jump("gamma1"), gb["11"], gb["01"])
    want = np.sqrt(TWO_PI * p.gamma) * TWO_PI * p.omega / 2 / em.derived.delta_eff_1
    checks["effective_jump"] = float(abs(got - want))
    ok = checks["rk45_vs_expm"] < 1e-7 and checks["effective_jump"] < 1e-10
    write_json(out / "selftest.json", {"checks": checks, "ok": ok})
    if not ok:
        raise FloatingPointError(f"self-test failed: {checks}")
    return {"checks": checks, "ok": ok}


COMMANDS = {
    "simulate": (cmd_simulate, ("t_max", "points", "photons")),
    "sweep": (cmd_sweep, ("axis", "values", "axis2", "values2", "reoptimize")),
    "optimize": (cmd_optimize, ("free", "bounds", "grid")),
    "analytic": (cmd_analytic, ("omega_scan",)),
    "photons": (cmd_photons, ("t_final",)),
    "selftest": (cmd_selftest, ()),
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--gate", choices=sorted(BUILDERS))
    common.add_argument("--preset", help="named parameter set (paper-hardware)")
    common.add_argument("--config", metavar="PATH", help="JSON config or CSV artifact to rerun")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory")
    common.add_argument("--threads", type=int, metavar="N")
    common.add_argument("--fock", type=int, metavar="N", help="Fock cutoff of each mode")
    common.add_argument("--seed", type=int)
    common.add_argument("--no-noise", action="store_true", help="disable ground-state noise")
    common.add_argument("-v", "--verbose", action="store_true")
    for flag in PARAM_FLAGS:
        common.add_argument(f"--{flag.replace('_', '-')}", type=float, metavar="GHZ")
    common.add_argument("--t1", type=float, metavar="US")
    common.add_argument("--t2", type=float, metavar="US")

    parser = argparse.ArgumentParser(prog="dissipgate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="error probabilities over time")
    s.add_argument("--t-max", type=float, metavar="NS")
    s.add_argument("--points", type=int)
    s.add_argument("--photons", action=argparse.BooleanOptionalAction, default=None)
    s = sub.add_parser("sweep", parents=[common], help="grid over one or two parameters")
    s.add_argument("--axis")
    s.add_argument("--values", help="a:b:n or comma list")
    s.add_argument("--axis2")
    s.add_argument("--values2")
    s.add_argument("--reoptimize", help="comma list; only 'omega' is supported")
    s = sub.add_parser("optimize", parents=[common], help="minimise the gate error")
    s.add_argument("--free", help="comma list from omega,gamma,r")
    s.add_argument("--bounds", help="e.g. omega=0.005:0.5,gamma=0.005:0.5")
    s.add_argument("--grid", type=int, help=f"coarse grid points per parameter (default {DEFAULT_SCAN_POINTS})")
    s = sub.add_parser("analytic", parents=[common], help="closed-form model vs full simulation")
    s.add_argument("--omega-scan", help="a:b:n grid of drive strengths")
    s = sub.add_parser("photons", parents=[common], help="scattered photons per input")
    s.add_argument("--t-final", type=float, metavar="NS")
    sub.add_parser("selftest", parents=[common], help="quick internal consistency checks")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    fn, option_names = COMMANDS[args.command]
    try:
        cfg = build_config(args, option_names)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        summary = fn(cfg, out)
    except ConfigError as exc:
        print(f"dissipgate: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"dissipgate: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(summary, indent=2, sort_keys=True, default=_jsonable))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
