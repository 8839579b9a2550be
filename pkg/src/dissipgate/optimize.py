"""Parameter sweeps and error minimisation over gate parameters."""

from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize as sp_minimize
from scipy.optimize import minimize_scalar

from .gates import BUILDERS, SystemParams, build
from .lindblad import DimensionError, IntegrationError
from .metrics import GateResult, evaluate

log = logging.getLogger(__name__)

FLOAT_FIELDS = tuple(f.name for f in fields(SystemParams) if f.name not in ("noise", "fock_cutoff"))
NUMERIC_FAILURES = (IntegrationError, DimensionError, np.linalg.LinAlgError, FloatingPointError, ValueError)
OMEGA_BOUNDS = (0.01, 0.6)


def default_threads() -> int:
    env = os.environ.get("DISSIPGATE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"DISSIPGATE_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError("DISSIPGATE_THREADS must be >= 1")
        return n
    return 1


@dataclass(frozen=True)
class Axis:
    name: str
    values: tuple[float, ...]

    def __init__(self, name: str, values: Sequence[float]):
        if name not in FLOAT_FIELDS:
            raise ValueError(f"unknown sweep parameter {name!r}; expected one of {FLOAT_FIELDS}")
        vals = tuple(float(v) for v in values)
        if not vals:
            raise ValueError(f"axis {name!r} has an empty grid")
        d = np.diff(vals)
        if len(d) and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError(f"axis {name!r} grid must be strictly monotone")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class SweepSpec:
    """Grid over one or two parameters of ``base``.

    ``reoptimize`` may contain ``"omega"`` to line-search the drive at each
    point; the gate time is always optimised. The builder re-solves the
    resonance condition at each point.
    """

    base: SystemParams
    axes: tuple[Axis, ...]
    gate: str = "or-spont"
    reoptimize: tuple[str, ...] = ()
    omega_bounds: tuple[float, float] = OMEGA_BOUNDS

    def __post_init__(self):
        if not 1 <= len(self.axes) <= 2:
            raise ValueError("a sweep has one or two axes")
        if self.gate not in BUILDERS:
            raise ValueError(f"unknown gate {self.gate!r}")
        bad = set(self.reoptimize) - {"omega"}
        if bad:
            raise ValueError(f"only omega can be re-optimised, got {sorted(bad)}")
        if any(a.name == "omega" for a in self.axes) and self.reoptimize:
            raise ValueError("omega cannot be both swept and re-optimised")

    def points(self) -> list[tuple[float, ...]]:
        return list(itertools.product(*(a.values for a in self.axes)))


@dataclass(frozen=True)
class SweepResult:
    names: tuple[str, ...]
    coords: np.ndarray
    min_error: np.ndarray
    t_opt: np.ndarray
    omega: np.ndarray
    status: tuple[str, ...]

    def argmin(self) -> int:
        if np.all(np.isnan(self.min_error)):
            raise ValueError("every sweep point failed")
        return int(np.nanargmin(self.min_error))

    def best(self) -> dict[str, float]:
        i = self.argmin()
        row = dict(zip(self.names, self.coords[i]))
        row.update(min_error=float(self.min_error[i]), t_opt=float(self.t_opt[i]), omega=float(self.omega[i]))
        return row

    def rows(self) -> list[dict]:
        out = []
        for i in range(len(self.min_error)):
            row = dict(zip(self.names, (float(c) for c in self.coords[i])))
            row.update(
                omega_opt=float(self.omega[i]),
                t_opt=float(self.t_opt[i]),
                min_error=float(self.min_error[i]),
                status=self.status[i],
            )
            out.append(row)
        return out


def gate_error(gate: str, p: SystemParams, **build_kwargs) -> GateResult:
    return evaluate(build(gate, p, **build_kwargs))


def best_omega(
    gate: str, p: SystemParams, bounds: tuple[float, float] = OMEGA_BOUNDS, xatol: float = 2e-3
) -> tuple[float, GateResult]:
    """Bounded line search of the drive strength (in log space)."""
    cache: dict[float, GateResult] = {}

    def f(u):
        res = cache.get(u)
        if res is None:
            res = cache[u] = gate_error(gate, p.replace(omega=math.exp(u)))
        return res.min_error

    lo, hi = (math.log(b) for b in bounds)
    minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": xatol})
    u = min(cache, key=lambda k: cache[k].min_error)
    return math.exp(u), cache[u]


def _evaluate_point(spec: SweepSpec, values: tuple[float, ...]):
    p = spec.base.replace(**{a.name: v for a, v in zip(spec.axes, values)})
    try:
        if "omega" in spec.reoptimize:
            om, res = best_omega(spec.gate, p, spec.omega_bounds)
        else:
            om, res = p.omega, gate_error(spec.gate, p)
        return res.min_error, res.t_opt, om, "ok"
    except NUMERIC_FAILURES as exc:
        log.warning("sweep point %s failed: %s", values, exc)
        return math.nan, math.nan, math.nan, f"failed: {exc}"


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map preserves input order regardless of completion order
        return list(pool.map(fn, items))


def sweep(spec: SweepSpec, threads: int | None = None) -> SweepResult:
    """Evaluate every grid point; failed points become NaN rows."""
    threads = default_threads() if threads is None else threads
    pts = spec.points()
    out = _map(lambda v: _evaluate_point(spec, v), pts, threads)
    err, t, om, status = zip(*out)
    return SweepResult(
        tuple(a.name for a in spec.axes),
        np.array(pts, dtype=float),
        np.array(err),
        np.array(t),
        np.array(om),
        tuple(status),
    )


@dataclass(frozen=True)
class MinimizeResult:
    params: SystemParams
    result: GateResult
    at_bounds: tuple[str, ...]
    trace: list[tuple[dict, float]] = field(default_factory=list, repr=False)

    def __iter__(self):
        yield self.params
        yield self.result


def minimize(
    base: SystemParams,
    free: Sequence[str],
    bounds: dict[str, tuple[float, float]] | None = None,
    gate: str = "or-spont",
    grid_points: int = 7,
    threads: int | None = None,
    polish: bool = True,
    start: dict[str, float] | None = None,
) -> MinimizeResult:
    """Coarse log-spaced grid followed by a bounded Nelder-Mead polish.

    ``free`` is a subset of ``{"omega", "gamma", "r"}``. ``start`` replaces
    the grid's best point as the simplex start (e.g. an analytic estimate).
    Parameters ending within 1% (in log) of a bound are reported in
    ``at_bounds``.
    """
    free = tuple(free)
    bad = set(free) - {"omega", "gamma", "r"}
    if bad:
        raise ValueError(f"free parameters must be among omega, gamma, r; got {sorted(bad)}")
    threads = default_threads() if threads is None else threads
    trace: list[tuple[dict, float]] = []
    if not free:
        res = gate_error(gate, base)
        return MinimizeResult(base, res, (), [({}, res.min_error)])
    bounds = bounds or {}
    missing = [n for n in free if n not in bounds]
    if missing:
        raise ValueError(f"bounds required for {missing}")
    lo = np.log([bounds[n][0] for n in free])
    hi = np.log([bounds[n][1] for n in free])

    def params_at(u) -> SystemParams:
        return base.replace(**{n: float(math.exp(x)) for n, x in zip(free, u)})

    def run(u):
        try:
            r = gate_error(gate, params_at(u))
        except NUMERIC_FAILURES as exc:
            log.warning("minimize point %s failed: %s", np.exp(u), exc)
            return math.inf, None
        return r.min_error, r

    axes = [np.linspace(a, b, grid_points) for a, b in zip(lo, hi)]
    pts = [np.array(u) for u in itertools.product(*axes)]
    evals = _map(run, pts, threads)
    for u, (e, _) in zip(pts, evals):
        trace.append(({n: float(math.exp(x)) for n, x in zip(free, u)}, e))
    k = int(np.argmin([e for e, _ in evals]))
    best_u, (best_e, best_r) = pts[k], evals[k]
    if best_r is None:
        raise RuntimeError("every coarse-grid point failed")

    if polish:
        x0 = np.log([start[n] for n in free]) if start else best_u
        cache: dict[tuple, tuple[float, GateResult | None]] = {}

        def f(u):
            key = tuple(np.round(u, 12))
            if key not in cache:
                cache[key] = run(np.asarray(u))
                trace.append(({n: float(math.exp(x)) for n, x in zip(free, u)}, cache[key][0]))
            return cache[key][0]

        step = (hi - lo) / max(grid_points - 1, 1)
        simplex = [x0] + [x0 + np.eye(len(free))[i] * 0.5 * step[i] for i in range(len(free))]
        simplex = np.clip(simplex, lo, hi)
        sp_minimize(
            f, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
            options={"initial_simplex": simplex, "xatol": 1e-3, "fatol": 1e-7, "maxiter": 200},
        )
        for key, (e, r) in cache.items():
            if r is not None and e < best_e:
                best_u, best_e, best_r = np.array(key), e, r

    edge = tuple(
        n for n, x, a, b in zip(free, best_u, lo, hi) if min(x - a, b - x) <= 0.01 * max(b - a, 1e-12)
    )
    return MinimizeResult(params_at(best_u), best_r, edge, trace)


def tune_schedule(
    gate: str,
    p: SystemParams,
    excite_scales: Sequence[float] = (0.9, 1.0, 1.1),
    decay_scales: Sequence[float] = (1.0, 2.0),
    threads: int | None = None,
) -> tuple[dict, GateResult]:
    """Coarse scan of stepwise phase durations around the analytic defaults.

    Returns the builder keyword arguments of the best schedule and its result.
    """
    from .gates import SecondModeParams, nor_defaults, xor_defaults

    threads = default_threads() if threads is None else threads
    if gate == "nor":
        _, (te, td) = nor_defaults(p)
        cands = [{"phase_durations": (te * a, td * b)} for a in excite_scales for b in decay_scales]
    elif gate == "xor":
        _, te, td = xor_defaults(p, SecondModeParams())
        cands = [
            {"second_mode_params": SecondModeParams(t_excite=te * a, t_decay=td * b)}
            for a in excite_scales
            for b in decay_scales
        ]
    else:
        raise ValueError(f"{gate!r} is not a stepwise gate")
    results = _map(lambda kw: gate_error(gate, p, **kw), cands, threads)
    k = int(np.argmin([r.min_error for r in results]))
    return cands[k], results[k]
