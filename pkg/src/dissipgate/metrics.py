"""Gate quality and cost: success/error probabilities, optimal gate time, photon counts.

Readout convention: the success probability of an input is the population of
the target *ground* level (|0> or |1>) of the output qubit. Population left in
|e> or |f> counts against success, so transient excitation depresses P_s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .effective import effective_model, ground_partition
from .gates import LABELS, GateSchedule, GateSystem
from .lindblad import Trajectory, propagate, propagate_schedule

DEFAULT_POINTS = 201
PHOTON_TOL = 1e-3


@dataclass(frozen=True)
class ErrorSeries:
    times: np.ndarray
    per_input: Mapping[str, np.ndarray]
    average: np.ndarray

    def __post_init__(self):
        if len(self.times) == 0:
            raise ValueError("an error series needs at least one time")


@dataclass(frozen=True)
class GateResult:
    t_opt: float
    min_error: float
    series: ErrorSeries
    photon_counts: Mapping[str, float] = field(default_factory=dict)
    at_boundary: bool = False

    @property
    def mean_photons(self) -> float:
        return float(np.mean(list(self.photon_counts.values()))) if self.photon_counts else math.nan


def _level_mask(sys, level: int) -> np.ndarray:
    space = sys.space
    q = sys.output_qubit
    return np.array([space.levels(i)[q] == level for i in range(space.total)], dtype=float)


def _target_masks(sys) -> dict[str, np.ndarray]:
    masks = {b: _level_mask(sys, b) for b in (0, 1)}
    return {lab: masks[sys.truth_target[lab]] for lab in LABELS}


def success_probability(traj: Trajectory, sys: GateSystem | GateSchedule, input_label: str) -> np.ndarray:
    """P_s(t) for the trajectory started from ``input_label``."""
    if input_label not in sys.truth_target:
        raise KeyError(f"unknown input label {input_label!r}")
    mask = _target_masks(sys)[input_label]
    return traj.populations() @ mask


def desired_rate(sys: GateSystem) -> float:
    """Slowest effective decay rate (1/ns) out of an input whose output bit is wrong.

    Taken from the effective operators of the gate's own couplings, so it
    applies to every continuous scheme.
    """
    em = effective_model(ground_partition(sys))
    q = sys.output_qubit
    out = []
    for lab in LABELS:
        k = sys.ground_basis[lab]
        if sys.space.levels(k)[q] != sys.truth_target[lab]:
            j = list(em.ground).index(k)
            # diagonal elements only dephase; count transfers out of the input
            out.append(sum(np.sum(np.abs(np.delete(L[:, j], j)) ** 2) for L in em.jumps_eff))
    return float(min(out)) if out else 0.0


def default_times(sys: GateSystem, points: int = DEFAULT_POINTS, span: float = 20.0) -> np.ndarray:
    """Uniform grid over ``span`` decay times of the saturation-corrected desired rate."""
    p = sys.params
    gamma, omega = 2 * math.pi * p.gamma, 2 * math.pi * p.omega
    rate = desired_rate(sys) * gamma**2 / (gamma**2 + 2 * omega**2)
    if not rate > 0:
        raise ValueError("the desired rate vanishes; give an explicit time grid")
    return np.linspace(0.0, span / rate, points)


def _populations(sys, times=None, method="auto", samples_per_phase=40):
    rho0s = np.stack([sys.initial_state(lab) for lab in LABELS])

    def diag(batch):
        return np.einsum("bii->bi", batch).real.copy()

    if isinstance(sys, GateSchedule):
        t, pops, _ = propagate_schedule(sys.schedule, rho0s, samples_per_phase, method, observe=diag)
        return t, np.stack(pops)
    times = default_times(sys) if times is None else np.asarray(times, dtype=float)
    if times[0] != 0:
        raise ValueError("time grid must start at 0")
    return times, np.stack(propagate(sys.model, rho0s, times, method=method, observe=diag))


def error_series(
    sys: GateSystem | GateSchedule,
    times: Sequence[float] | None = None,
    method: str = "auto",
    samples_per_phase: int = 40,
) -> ErrorSeries:
    """Error probabilities of the four computational inputs over time.

    Continuous gates use ``times`` (default: :func:`default_times`); stepwise
    gates are sampled ``samples_per_phase`` times per phase.
    """
    t, pops = _populations(sys, times, method, samples_per_phase)
    masks = _target_masks(sys)
    per = {lab: np.clip(1.0 - pops[:, k] @ masks[lab], 0.0, 1.0) for k, lab in enumerate(LABELS)}
    avg = np.mean([per[lab] for lab in LABELS], axis=0)
    return ErrorSeries(np.asarray(t), per, avg)


def optimal_gate_time(series: ErrorSeries) -> GateResult:
    """Minimum of the average error over the grid.

    ``min_error`` is the smallest grid value (ties go to the earliest time);
    ``t_opt`` is refined by the vertex of the parabola through the minimum and
    its neighbours. A minimum on the first or last grid point is flagged with
    ``at_boundary``.
    """
    t, y = series.times, series.average
    i = int(np.argmin(y))
    if i == 0 or i == len(t) - 1:
        return GateResult(float(t[i]), float(y[i]), series, at_boundary=True)
    t_star = t[i]
    c2, c1, _ = np.polyfit(t[i - 1 : i + 2] - t[i], y[i - 1 : i + 2], 2)
    if c2 > 0:
        dt = -c1 / (2 * c2)
        if t[i - 1] - t[i] <= dt <= t[i + 1] - t[i]:
            t_star = t[i] + dt
    return GateResult(float(t_star), float(y[i]), series)


def _emission_operator(model, labels) -> np.ndarray:
    out = np.zeros((model.dim, model.dim), dtype=complex)
    for L, lab in zip(model.jumps, model.labels):
        if lab in labels:
            out += L.conj().T @ L
    return out


def _rate_observer(op):
    def obs(batch):
        return np.einsum("ij,bji->b", op, batch).real.copy()

    return obs


def photon_counts(
    sys: GateSystem | GateSchedule,
    t_final: float,
    labels: Sequence[str] = LABELS,
    tol: float = PHOTON_TOL,
    method: str = "auto",
    max_points: int = 1 << 14,
) -> dict[str, float]:
    """Scattered photons ``int_0^t_final <sum_k L_k^dag L_k> dt`` per input.

    Only the gate's own jumps count (ground-state noise is excluded). The
    trapezoidal grid is doubled until the estimate changes by less than ``tol``.
    """
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    rho0s = np.stack([sys.initial_state(lab) for lab in labels])
    emit = set(sys.emission_labels)
    n, prev = 64, None
    while True:
        if isinstance(sys, GateSchedule):
            est, cur, elapsed = np.zeros(len(labels)), rho0s, 0.0
            for m, d in sys.schedule.phases:
                d = min(d, t_final - elapsed)
                if d <= 0:
                    break
                grid = np.linspace(0.0, d, n + 1)
                obs = _rate_observer(_emission_operator(m, emit))
                out = propagate(m, cur, grid, method=method, observe=lambda b, obs=obs: (obs(b), b.copy()))
                est = est + trapezoid(np.stack([o[0] for o in out]), grid, axis=0)
                cur, elapsed = out[-1][1], elapsed + d
        else:
            grid = np.linspace(0.0, t_final, n + 1)
            op = _emission_operator(sys.model, emit)
            vals = np.stack(propagate(sys.model, rho0s, grid, method=method, observe=_rate_observer(op)))
            est = trapezoid(vals, grid, axis=0)
        if prev is not None and np.max(np.abs(est - prev)) < tol:
            break
        if n >= max_points:
            break
        prev, n = est, 2 * n
    return {lab: float(v) for lab, v in zip(labels, est)}


def evaluate(
    sys: GateSystem | GateSchedule,
    times: Sequence[float] | None = None,
    with_photons: bool = False,
    method: str = "auto",
) -> GateResult:
    """Error series, optimum and (optionally) photon counts up to the optimum.

    For stepwise gates the operation ends with the schedule, so the result is
    the error at the final time.
    """
    series = error_series(sys, times, method)
    if isinstance(sys, GateSchedule):
        res = GateResult(float(series.times[-1]), float(series.average[-1]), series)
    else:
        res = optimal_gate_time(series)
    if with_photons:
        counts = photon_counts(sys, res.t_opt, method=method)
        res = GateResult(res.t_opt, res.min_error, series, counts, res.at_boundary)
    return res
