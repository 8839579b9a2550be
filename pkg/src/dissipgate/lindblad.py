"""Lindblad master equation: generator, integrators and piecewise schedules.

Two propagation routes are provided:

* ``"rk45"``: adaptive Dormand-Prince 5(4) on the density matrix itself,
  re-symmetrised after every accepted step;
* ``"expm"``: exact propagation with the matrix exponential of the
  (column-stacked) Liouvillian;
* ``"krylov"``: the action of that exponential computed by
  ``scipy.sparse.linalg.expm_multiply``, for supports too large to
  exponentiate densely.

``"auto"`` picks ``"expm"`` when the reduced superoperator is small enough
and ``"krylov"`` otherwise.

Every route first restricts the problem to the basis kets reachable from the
initial state through the Hamiltonian and jump operators. The exponential
routes additionally drop the vectorised entries of rho that can never become
nonzero (for instance coherences between sectors of a conserved charge).
Both reductions are exact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order
from scipy.sparse.linalg import expm_multiply

from .hilbert import Space, check_density_matrix

log = logging.getLogger(__name__)

MAX_LIOUVILLIAN_DIM = 32
# size of the reduced superoperator handled by the dense exponential
MAX_EXPM_SUPPORT = 1600

METHOD_ALIASES = {"adaptive-RK": "rk45", "liouvillian-expm": "expm"}

RTOL = 1e-8
ATOL = 1e-9


class IntegrationError(RuntimeError):
    """Adaptive integration could not proceed (step size underflow)."""

    def __init__(self, message: str, t_reached: float):
        super().__init__(f"{message} (reached t={t_reached:.6g} ns)")
        self.t_reached = t_reached


class DimensionError(ValueError):
    """Problem too large for the requested dense route."""


@dataclass(frozen=True)
class LindbladModel:
    """Hamiltonian (rad/ns) plus rate-scaled jump operators on a space."""

    space: Space
    hamiltonian: np.ndarray
    jumps: tuple[np.ndarray, ...] = ()
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        n = self.space.total
        h = np.asarray(self.hamiltonian, dtype=complex)
        if h.shape != (n, n):
            raise ValueError(f"Hamiltonian shape {h.shape} does not match space dimension {n}")
        if np.max(np.abs(h - h.conj().T), initial=0.0) > 1e-10:
            raise ValueError("Hamiltonian is not Hermitian")
        jumps = tuple(np.asarray(j, dtype=complex) for j in self.jumps)
        for j in jumps:
            if j.shape != (n, n):
                raise ValueError(f"jump shape {j.shape} does not match space dimension {n}")
        labels = tuple(self.labels) or tuple(f"L{k}" for k in range(len(jumps)))
        if len(labels) != len(jumps):
            raise ValueError("one label per jump operator is required")
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.space.total

    def jump(self, label: str) -> np.ndarray:
        return self.jumps[self.labels.index(label)]

    def with_jumps(self, jumps: Sequence[np.ndarray], labels: Sequence[str]) -> "LindbladModel":
        return LindbladModel(
            self.space, self.hamiltonian, self.jumps + tuple(jumps), self.labels + tuple(labels)
        )

    def without_jumps(self) -> "LindbladModel":
        return LindbladModel(self.space, self.hamiltonian)

    def decay_operator(self, labels: Sequence[str] | None = None) -> np.ndarray:
        """Sum of L^dag L over the selected jumps (all by default)."""
        out = np.zeros_like(self.hamiltonian)
        for lab, j in zip(self.labels, self.jumps):
            if labels is None or lab in labels:
                out += j.conj().T @ j
        return out


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant sequence of (model, duration in ns)."""

    phases: tuple[tuple[LindbladModel, float], ...]

    def __post_init__(self):
        phases = tuple((m, float(d)) for m, d in self.phases)
        if not phases:
            raise ValueError("schedule needs at least one phase")
        space = phases[0][0].space
        for m, d in phases:
            if m.space != space:
                raise ValueError("all schedule phases must share one space")
            if not d > 0:
                raise ValueError(f"phase durations must be positive, got {d}")
        object.__setattr__(self, "phases", phases)

    @property
    def space(self) -> Space:
        return self.phases[0][0].space

    @property
    def duration(self) -> float:
        return sum(d for _, d in self.phases)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    model: LindbladModel | Schedule
    phase_boundaries: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")

    def populations(self) -> np.ndarray:
        return np.real(np.einsum("tii->ti", self.states))

    def expect(self, op: np.ndarray) -> np.ndarray:
        return np.real(np.einsum("ij,tji->t", op, self.states))

    def validate(self, tol: float = 1e-8) -> None:
        for rho in self.states:
            check_density_matrix(rho, herm_tol=tol, trace_tol=tol, pos_tol=tol)


def rhs(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    """Right-hand side of the master equation for one density matrix."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != model.hamiltonian.shape:
        raise ValueError(f"state shape {rho.shape} does not match model dimension {model.dim}")
    h = model.hamiltonian
    out = -1j * (h @ rho - rho @ h)
    for j in model.jumps:
        jd = j.conj().T
        jdj = jd @ j
        out += j @ rho @ jd - 0.5 * (jdj @ rho + rho @ jdj)
    return out


def _sparse_liouvillian(h: np.ndarray, jumps: Sequence[np.ndarray]) -> sp.csr_matrix:
    n = h.shape[0]
    eye = sp.identity(n, dtype=complex, format="csr")
    hs = sp.csr_matrix(h)
    out = -1j * (sp.kron(eye, hs) - sp.kron(hs.T, eye))
    for j in jumps:
        js = sp.csr_matrix(j)
        jdj = (js.conj().T @ js).tocsr()
        out = out + sp.kron(js.conj(), js) - 0.5 * sp.kron(eye, jdj) - 0.5 * sp.kron(jdj.T, eye)
    out = out.tocsr()
    out.eliminate_zeros()
    return out


def liouvillian(model: LindbladModel) -> np.ndarray:
    """Dense superoperator acting on column-stacked rho (``rho.ravel(order='F')``)."""
    if model.dim > MAX_LIOUVILLIAN_DIM:
        raise DimensionError(
            f"dense Liouvillian limited to dimension {MAX_LIOUVILLIAN_DIM}, got {model.dim}"
        )
    return _sparse_liouvillian(model.hamiltonian, model.jumps).toarray()


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).ravel(order="F")


def unvec(v: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(v).reshape(n, n, order="F")


# ---------------------------------------------------------------- reductions


def _reach(adjacency: sp.spmatrix, seeds: Sequence[int]) -> np.ndarray:
    """Nodes reachable from ``seeds``; ``adjacency[c, r] != 0`` is an edge c -> r."""
    n = adjacency.shape[0]
    seeds = sorted(set(int(s) for s in seeds))
    if not seeds:
        return np.zeros(0, dtype=int)
    # a virtual root pointing at every seed does one traversal
    root = sp.csr_matrix((np.ones(len(seeds)), ([0] * len(seeds), seeds)), shape=(1, n))
    graph = sp.bmat([[None, root], [sp.csr_matrix((n, 1)), adjacency]], format="csr")
    order = breadth_first_order(graph, 0, directed=True, return_predecessors=False)
    return np.sort(order[order > 0] - 1)


def reachable_kets(models: Sequence[LindbladModel], support: Sequence[int]) -> np.ndarray:
    """Basis kets that can acquire amplitude starting from ``support``.

    The returned set is closed under H, every L and every L^dag L of all the
    given models, so restricting the dynamics to it is exact.
    """
    n = models[0].dim
    pattern = sp.csr_matrix((n, n))
    for m in models:
        mats = [m.hamiltonian, *m.jumps, *(j.conj().T @ j for j in m.jumps)]
        for a in mats:
            pattern = pattern + sp.csr_matrix(np.abs(a) > 0, dtype=float)
    # column c feeds row r
    return _reach(pattern.T.tocsr(), support)


def restrict(model: LindbladModel, kets: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    ix = np.ix_(kets, kets)
    return model.hamiltonian[ix], [j[ix] for j in model.jumps]


def _support(rho0s: np.ndarray) -> np.ndarray:
    mask = np.any(np.abs(rho0s) > 0, axis=0)
    return np.flatnonzero(np.any(mask, axis=0) | np.any(mask, axis=1))


# ---------------------------------------------------------------- propagation

# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_E = _B - np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def _batch_rhs(h: np.ndarray, jumps: Sequence[np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    hnh = h - 0.5j * sum((j.conj().T @ j for j in jumps), np.zeros_like(h))
    hnh_d = hnh.conj().T
    js = [(j, j.conj().T) for j in jumps if np.any(j)]

    def f(rho):
        out = -1j * (hnh @ rho - rho @ hnh_d)
        for j, jd in js:
            out += j @ rho @ jd
        return out

    return f


def _rk45(f, y0: np.ndarray, times: np.ndarray, rtol: float, atol: float, observe) -> list:
    """Integrate ``dy/dt = f(y)`` hitting every output time exactly."""
    y = y0.copy()
    t = float(times[0])
    out = [observe(y)]
    scale = np.max(np.abs(f(y))) + 1e-300
    h = min(0.01 / scale, float(times[-1] - times[0]) or 1.0) if scale > 0 else 1.0
    k1 = f(y)
    for t_next in times[1:]:
        t_next = float(t_next)
        while t < t_next:
            last = False
            if t + h >= t_next:
                h_try = t_next - t
                last = True
            else:
                h_try = h
            ks = [k1]
            for s in range(1, 7):
                yi = y + h_try * sum(a * k for a, k in zip(_A[s], ks))
                ks.append(f(yi))
            y_new = yi  # stage 7 is evaluated at the 5th-order solution (FSAL)
            err = h_try * sum(e * k for e, k in zip(_E, ks) if e != 0)
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            en = float(np.max(np.abs(err) / sc))
            if en <= 1.0:
                t = t_next if last else t + h_try
                y = 0.5 * (y_new + np.swapaxes(y_new.conj(), -1, -2))
                k1 = f(y)
                fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
                if not last:
                    h = h_try * fac
                elif fac < 1:
                    h = min(h, h_try * fac)
            else:
                h = h_try * max(0.2, 0.9 * en ** -0.25)
                if h < 1e-13 * max(1.0, abs(t)):
                    raise IntegrationError("step size underflow", t)
        out.append(observe(y))
    return out


def _vec_reduction(h, jumps, rho0s):
    """Sparse Liouvillian and the vec(rho) entries reachable from ``rho0s``."""
    lv = _sparse_liouvillian(h, jumps).tocsr()
    flat = rho0s.transpose(0, 2, 1).reshape(len(rho0s), -1)
    seeds = np.flatnonzero(np.any(np.abs(flat) > 0, axis=0))
    keep = _reach((abs(lv) > 0).astype(float).T.tocsr(), seeds)
    return lv[keep][:, keep], keep, flat[:, keep].T.copy()


def _vec_stepper(m, b, keep, observe):
    full = np.zeros((m * m, b), dtype=complex)

    def emit(vecs):
        full[keep] = vecs
        rho = full.T.reshape(b, m, m).transpose(0, 2, 1)
        return observe(0.5 * (rho + rho.conj().transpose(0, 2, 1)))

    return emit


def _expm_propagate(h, jumps, rho0s, times, observe, max_support):
    s, keep, vecs = _vec_reduction(h, jumps, rho0s)
    if len(keep) > max_support:
        raise DimensionError(
            f"reduced superoperator of size {len(keep)} exceeds expm limit {max_support}"
        )
    s = s.toarray()
    emit = _vec_stepper(h.shape[0], len(rho0s), keep, observe)
    cache: dict[float, np.ndarray] = {}
    out = [emit(vecs)]
    for dt in np.diff(times):
        key = round(float(dt), 12)
        prop = cache.get(key)
        if prop is None:
            prop = cache[key] = sla.expm(s * dt)
        vecs = prop @ vecs
        out.append(emit(vecs))
    return out


def _krylov_propagate(h, jumps, rho0s, times, observe):
    s, keep, vecs = _vec_reduction(h, jumps, rho0s)
    s = s.tocsc()
    emit = _vec_stepper(h.shape[0], len(rho0s), keep, observe)
    steps = np.diff(times)
    if len(steps) and np.allclose(steps, steps[0], rtol=1e-12, atol=0):
        vs = expm_multiply(s, vecs, start=times[0], stop=times[-1], num=len(times), endpoint=True)
        return [emit(v) for v in vs]
    out = [emit(vecs)]
    for dt in steps:
        vecs = expm_multiply(s * dt, vecs)
        out.append(emit(vecs))
    return out


def propagate(
    model: LindbladModel,
    rho0s: np.ndarray,
    times: Sequence[float],
    method: str = "auto",
    observe: Callable[[np.ndarray], np.ndarray] | None = None,
    rtol: float = RTOL,
    atol: float = ATOL,
    max_support: int = MAX_EXPM_SUPPORT,
):
    """Evolve a batch of density matrices (shape ``(B, n, n)``).

    ``observe`` maps the full batch at each output time to whatever should be
    stored; by default the full states are kept. Returns a list with one entry
    per output time.
    """
    rho0s = np.asarray(rho0s, dtype=complex)
    if rho0s.ndim == 2:
        rho0s = rho0s[None]
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("times must be a nonempty 1-D grid")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    n = model.dim
    if rho0s.shape[1:] != (n, n):
        raise ValueError(f"state shape {rho0s.shape[1:]} does not match model dimension {n}")
    kets = reachable_kets([model], _support(rho0s))
    h, jumps = restrict(model, kets)
    sub0 = rho0s[:, kets][:, :, kets]
    b = len(rho0s)
    full = np.zeros((b, n, n), dtype=complex)
    ix = np.ix_(range(b), kets, kets)

    def lift(sub):
        full[ix] = sub
        return observe(full) if observe is not None else full.copy()

    method = METHOD_ALIASES.get(method, method)
    if method == "auto":
        try:
            return _expm_propagate(h, jumps, sub0, times, lift, max_support)
        except DimensionError:
            method = "krylov"
    if method == "krylov":
        return _krylov_propagate(h, jumps, sub0, times, lift)
    if method == "expm":
        return _expm_propagate(h, jumps, sub0, times, lift, max_support)
    if method == "rk45":
        return _rk45(_batch_rhs(h, jumps), sub0, times, rtol, atol, lift)
    raise ValueError(f"unknown method {method!r}")


def evolve(
    model: LindbladModel,
    rho0: np.ndarray,
    times: Sequence[float],
    method: str = "auto",
    rtol: float = RTOL,
    atol: float = ATOL,
) -> Trajectory:
    """Density matrix on the time grid ``times`` (ns, starting at 0)."""
    check_density_matrix(rho0)
    times = np.asarray(times, dtype=float)
    if times[0] != 0:
        raise ValueError("time grid must start at 0")
    states = propagate(model, rho0, times, method=method, rtol=rtol, atol=atol)
    return Trajectory(times, np.stack([s[0] for s in states]), model)


def _phase_grids(schedule: Schedule, samples_per_phase: int):
    t0 = 0.0
    for m, d in schedule.phases:
        yield m, np.linspace(t0, t0 + d, samples_per_phase + 1)
        t0 += d


def propagate_schedule(
    schedule: Schedule,
    rho0s: np.ndarray,
    samples_per_phase: int = 20,
    method: str = "auto",
    observe=None,
    rtol: float = RTOL,
    atol: float = ATOL,
):
    """Batch version of :func:`evolve_schedule`; returns (times, outputs, boundaries)."""
    rho0s = np.asarray(rho0s, dtype=complex)
    if rho0s.ndim == 2:
        rho0s = rho0s[None]
    times, outs, bounds = [], [], []
    cur = rho0s
    for k, (m, grid) in enumerate(_phase_grids(schedule, samples_per_phase)):
        states = propagate(m, cur, grid - grid[0], method=method, rtol=rtol, atol=atol)
        cur = states[-1]
        sl = slice(0 if k == 0 else 1, None)
        times.extend(grid[sl])
        outs.extend((observe(s) if observe else s) for s in states[sl])
        bounds.append(float(grid[-1]))
    return np.asarray(times), outs, tuple(bounds)


def evolve_schedule(
    schedule: Schedule,
    rho0: np.ndarray,
    samples_per_phase: int = 20,
    method: str = "auto",
) -> Trajectory:
    """Run the phases back to back, seeding each with the previous final state."""
    check_density_matrix(rho0)
    times, outs, bounds = propagate_schedule(schedule, rho0, samples_per_phase, method)
    return Trajectory(times, np.stack([s[0] for s in outs]), schedule, bounds)
