"""Builders for the dissipative OR, NOR and XOR gate models.

All frequencies in :class:`SystemParams` are given as ``value / 2pi`` in GHz
(so ``g=4.4`` means g/2pi = 4.4 GHz); the builders convert them to angular
rad/ns. Times are in ns, coherence times ``t1``/``t2`` in microseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .hilbert import E, F, G0, G1, Space, annihilation, dag, embed, transition
from .lindblad import LindbladModel, Schedule

TWO_PI = 2 * math.pi
LABELS = ("00", "01", "10", "11")
NOISE_PREFIX = "noise"

OR_TABLE = {"00": 0, "01": 1, "10": 1, "11": 1}
NOR_TABLE = {"00": 1, "01": 0, "10": 0, "11": 0}
XOR_TABLE = {"00": 0, "01": 1, "10": 1, "11": 0}

_FIELDS = ("g", "gamma", "kappa", "omega", "delta", "Delta", "r", "gamma_g", "t1", "t2")


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of a gate.

    Rates and frequencies are ``value/2pi`` in GHz. ``delta`` is the cavity
    detuning, ``Delta`` the emitter detuning. Giving ``r = Delta/delta``
    overrides both and places them on the scheme's resonance curve; if neither
    ``r`` nor explicit detunings are given, ``r = gamma/kappa`` is used.
    The ground flip rate ``gamma_g`` defaults to ``1/T1``.
    """

    g: float = 4.4
    gamma: float = 0.3
    kappa: float = 0.6
    omega: float = 0.13
    delta: float | None = None
    Delta: float | None = None
    r: float | None = None
    gamma_g: float | None = None
    t1: float | None = 20.0
    t2: float | None = 1.0
    noise: bool = True
    fock_cutoff: int = 3

    def __post_init__(self):
        for name in ("g", "gamma", "kappa"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.omega < 0:
            raise ValueError(f"omega must be nonnegative, got {self.omega}")
        if self.fock_cutoff < 2:
            raise ValueError(f"fock_cutoff must be >= 2, got {self.fock_cutoff}")
        if self.r is not None and not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")
        if (self.delta is None) != (self.Delta is None) and self.r is None:
            raise ValueError("give both delta and Delta, or r")
        for name in ("t1", "t2"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in (*_FIELDS, "noise", "fock_cutoff")}

    def detunings(self, resonance: float = 1.0) -> tuple[float, float]:
        """(delta, Delta) in angular units on the curve ``delta*Delta = resonance*g^2``."""
        g = TWO_PI * self.g
        if self.r is None and self.delta is not None:
            return TWO_PI * self.delta, TWO_PI * self.Delta
        r = self.r if self.r is not None else self.gamma / self.kappa
        prod = resonance * g * g
        return math.sqrt(prod / r), math.sqrt(prod * r)

    def flip_rate(self) -> float:
        """Ground flip rate gamma_g in rad/ns units (rate per ns)."""
        if self.gamma_g is not None:
            return TWO_PI * self.gamma_g
        if self.t1 is None:
            return 0.0
        return 1.0 / (self.t1 * 1e3)

    def dephasing_rate(self) -> float:
        """Extra pure-dephasing rate so that ground coherences decay at 1/T2."""
        if self.t2 is None:
            return 0.0
        rate = 1.0 / (self.t2 * 1e3) - self.flip_rate()
        if rate < -1e-15:
            raise ValueError(
                f"T2={self.t2} us is longer than the flip-limited coherence time "
                f"{1e-3 / self.flip_rate():.4g} us"
            )
        return max(rate, 0.0)


HARDWARE_DEFAULTS = SystemParams()


@dataclass(frozen=True)
class GateSystem:
    """A continuously operated gate: one Lindblad model plus readout data."""

    name: str
    model: LindbladModel
    ground_basis: Mapping[str, int]
    truth_target: Mapping[str, int]
    params: SystemParams
    output_qubit: int = 0
    resonance: float = 1.0
    drive: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def space(self) -> Space:
        return self.model.space

    def initial_state(self, label: str) -> np.ndarray:
        i = self.ground_basis[label]
        rho = np.zeros((self.space.total,) * 2, dtype=complex)
        rho[i, i] = 1.0
        return rho

    @property
    def emission_labels(self) -> tuple[str, ...]:
        return tuple(lab for lab in self.model.labels if not lab.startswith(NOISE_PREFIX))


@dataclass(frozen=True)
class GateSchedule:
    """A stepwise gate: alternating coherent and dissipative phases."""

    name: str
    schedule: Schedule
    ground_basis: Mapping[str, int]
    truth_target: Mapping[str, int]
    params: SystemParams
    output_qubit: int = 0
    settings: Mapping[str, float] = field(default_factory=dict)

    @property
    def space(self) -> Space:
        return self.schedule.space

    @property
    def model(self) -> LindbladModel:
        """Model of the first phase (used for space/readout bookkeeping only)."""
        return self.schedule.phases[0][0]

    def initial_state(self, label: str) -> np.ndarray:
        i = self.ground_basis[label]
        rho = np.zeros((self.space.total,) * 2, dtype=complex)
        rho[i, i] = 1.0
        return rho

    @property
    def emission_labels(self) -> tuple[str, ...]:
        labels = set()
        for m, _ in self.schedule.phases:
            labels.update(lab for lab in m.labels if not lab.startswith(NOISE_PREFIX))
        return tuple(sorted(labels))


# ------------------------------------------------------------------ helpers


class _Ops:
    """Embedded operator factory for a two-emitter + modes space."""

    def __init__(self, levels: int, modes: int, cutoff: int):
        self.levels = levels
        self.space = Space([levels, levels] + [cutoff] * modes)
        self.eye = self.space.identity()

    def q(self, site: int, ket: int, bra: int) -> np.ndarray:
        return embed(transition(ket, bra, self.levels), site, self.space)

    def mode(self, k: int) -> np.ndarray:
        return embed(annihilation(self.space.dims[2 + k]), 2 + k, self.space)

    def ground(self) -> dict[str, int]:
        zeros = [0] * (len(self.space) - 2)
        return {lab: self.space.index([int(lab[0]), int(lab[1]), *zeros]) for lab in LABELS}


def _jc(a: np.ndarray, up: np.ndarray, g: float) -> np.ndarray:
    """g (a |e><x| + h.c.) for the raising operator ``up`` = |e><x|."""
    term = g * (a @ up)
    return term + dag(term)


def _drive(up: np.ndarray, omega: float) -> np.ndarray:
    return 0.5 * omega * (up + dag(up))


def _build(name, ops, h0, drive, jumps, labels, p, table, resonance):
    model = LindbladModel(ops.space, h0 + drive, tuple(jumps), tuple(labels))
    sys = GateSystem(name, model, ops.ground(), dict(table), p, 0, resonance, drive)
    if p.noise:
        sys = with_ground_noise(sys)
    return sys


# ----------------------------------------------------------------- OR gates


def build_or_spontaneous(p: SystemParams = HARDWARE_DEFAULTS) -> GateSystem:
    """OR gate using spontaneous emission |e> -> |1> of the first emitter."""
    ops = _Ops(3, 1, p.fock_cutoff)
    delta, Delta = p.detunings(1.0)
    g, gamma, kappa, omega = (TWO_PI * x for x in (p.g, p.gamma, p.kappa, p.omega))
    a = ops.mode(0)
    h = delta * dag(a) @ a
    drive = 0
    for j in (0, 1):
        up = ops.q(j, E, G0)
        h = h + Delta * ops.q(j, E, E) + _jc(a, up, g)
        drive = drive + _drive(up, omega)
    jumps = [math.sqrt(gamma) * ops.q(0, G1, E), math.sqrt(gamma) * ops.q(1, G1, E), math.sqrt(kappa) * a]
    return _build("or-spont", ops, h, drive, jumps, ("gamma1", "gamma2", "kappa"), p, OR_TABLE, 1.0)


def build_or_oscillator(
    p: SystemParams = HARDWARE_DEFAULTS, kappa: float | None = None, drive_both: bool = False
) -> GateSystem:
    """OR gate whose dissipative resource is cavity decay.

    The emitters couple |1> <-> |e> to the mode; resonance is ``delta*Delta = 2 g^2``.
    ``kappa`` (/2pi GHz) defaults to ``p.gamma``. Only the first emitter is
    driven unless ``drive_both`` is set.
    """
    kappa = p.gamma if kappa is None else kappa
    p = p.replace(kappa=kappa)
    ops = _Ops(3, 1, p.fock_cutoff)
    delta, Delta = p.detunings(2.0)
    g, gamma, kap, omega = (TWO_PI * x for x in (p.g, p.gamma, p.kappa, p.omega))
    a = ops.mode(0)
    h = delta * dag(a) @ a
    for j in (0, 1):
        h = h + Delta * ops.q(j, E, E) + _jc(a, ops.q(j, E, G1), g)
    drive = _drive(ops.q(0, E, G0), omega)
    if drive_both:
        drive = drive + _drive(ops.q(1, E, G0), omega)
    jumps = [math.sqrt(gamma) * ops.q(0, G1, E), math.sqrt(gamma) * ops.q(1, G1, E), math.sqrt(kap) * a]
    return _build("or-osc", ops, h, drive, jumps, ("gamma1", "gamma2", "kappa"), p, OR_TABLE, 2.0)


def build_or_hybrid(p: SystemParams = HARDWARE_DEFAULTS) -> GateSystem:
    """OR gate with asymmetric couplings: |e>_1 <-> |1>_1 and |e>_2 <-> |0>_2."""
    ops = _Ops(3, 1, p.fock_cutoff)
    delta, Delta = p.detunings(1.0)
    g, gamma, kappa, omega = (TWO_PI * x for x in (p.g, p.gamma, p.kappa, p.omega))
    a = ops.mode(0)
    h = delta * dag(a) @ a
    h = h + Delta * ops.q(0, E, E) + _jc(a, ops.q(0, E, G1), g)
    h = h + Delta * ops.q(1, E, E) + _jc(a, ops.q(1, E, G0), g)
    drive = _drive(ops.q(0, E, G0), omega)
    jumps = [math.sqrt(gamma) * ops.q(0, G1, E), math.sqrt(gamma) * ops.q(1, G1, E), math.sqrt(kappa) * a]
    return _build("or-hybrid", ops, h, drive, jumps, ("gamma1", "gamma2", "kappa"), p, OR_TABLE, 1.0)


# ----------------------------------------------------------- stepwise gates


def dressed_overlap(g: float, Delta: float, partners: int = 1) -> float:
    """Amplitude of the driven bare state in the zero-energy dressed state.

    ``partners`` is the number of bare excited states sharing the cavity
    photon (1 for a two-state block, 2 for the symmetric three-state block).
    """
    return g / math.sqrt(Delta * Delta + partners * g * g)


def transfer_time(omega: float, overlap: float) -> float:
    """Duration (ns) of a full resonant transfer with coupling ``omega/2 * overlap``."""
    return math.pi / (omega * overlap)


def _noise_jumps(space: Space, levels: int, rate: float, dephase: float):
    jumps, labels = [], []
    for j in (0, 1):
        if rate > 0:
            jumps += [
                math.sqrt(rate) * embed(transition(G1, G0, levels), j, space),
                math.sqrt(rate) * embed(transition(G0, G1, levels), j, space),
            ]
            labels += [f"{NOISE_PREFIX}:flip+{j + 1}", f"{NOISE_PREFIX}:flip-{j + 1}"]
        if dephase > 0:
            sz = transition(G0, G0, levels) - transition(G1, G1, levels)
            jumps.append(math.sqrt(dephase / 2) * embed(sz, j, space))
            labels.append(f"{NOISE_PREFIX}:dephase{j + 1}")
    return jumps, labels


def with_ground_noise(sys, t1: float | None = None, t2: float | None = None):
    """Add symmetric ground-state flips and pure dephasing on both qubits.

    Rates come from ``sys.params`` unless ``t1``/``t2`` (microseconds) are given.
    Each qubit gets ``sqrt(g_g)|1><0|``, ``sqrt(g_g)|0><1|`` with ``g_g = 1/T1``
    and a dephasing term making ground coherences decay at ``1/T2``.
    """
    p = sys.params
    if t1 is not None or t2 is not None:
        p = p.replace(t1=t1 if t1 is not None else p.t1, t2=t2 if t2 is not None else p.t2, gamma_g=None)
    rate, dephase = p.flip_rate(), p.dephasing_rate()
    p = p.replace(noise=True)

    def noisy(model: LindbladModel) -> LindbladModel:
        base = [(j, lab) for j, lab in zip(model.jumps, model.labels) if not lab.startswith(NOISE_PREFIX)]
        levels = model.space.dims[0]
        nj, nl = _noise_jumps(model.space, levels, rate, dephase)
        return LindbladModel(
            model.space,
            model.hamiltonian,
            tuple(j for j, _ in base) + tuple(nj),
            tuple(lab for _, lab in base) + tuple(nl),
        )

    if isinstance(sys, GateSchedule):
        sched = Schedule(tuple((noisy(m), d) for m, d in sys.schedule.phases))
        return replace(sys, schedule=sched, params=p)
    return replace(sys, model=noisy(sys.model), params=p)


def without_ground_noise(sys):
    def clean(m: LindbladModel) -> LindbladModel:
        keep = [(j, lab) for j, lab in zip(m.jumps, m.labels) if not lab.startswith(NOISE_PREFIX)]
        return LindbladModel(m.space, m.hamiltonian, tuple(j for j, _ in keep), tuple(l for _, l in keep))

    p = sys.params.replace(noise=False)
    if isinstance(sys, GateSchedule):
        return replace(sys, schedule=Schedule(tuple((clean(m), d) for m, d in sys.schedule.phases)), params=p)
    return replace(sys, model=clean(sys.model), params=p)


def nor_defaults(p: SystemParams, omega_f: float | None = None) -> tuple[float, tuple[float, float]]:
    """Drive on |1>_1 <-> |f>_1 and (excitation, decay) durations for the NOR schedule."""
    g = TWO_PI * p.g
    _, Delta = p.detunings(1.0)
    t_exc = transfer_time(TWO_PI * p.omega, dressed_overlap(g, Delta))
    if omega_f is None:
        omega_f = 1.0 / (2 * t_exc)  # pi pulse in t_exc, expressed as /2pi GHz
    t_dec = 12.0 / (TWO_PI * min(p.gamma, 0.5 * p.kappa))
    return omega_f, (t_exc, t_dec)


def build_nor(
    p: SystemParams = HARDWARE_DEFAULTS,
    omega_f: float | None = None,
    phase_durations: tuple[float, float] | None = None,
    n_cycles: int = 1,
) -> GateSchedule:
    """Stepwise NOR gate on two four-level emitters (levels 0, 1, e, f).

    Phase 1 is coherent: the emitter-cavity couplings |e>_j <-> |1>_j act and
    the first emitter is driven on |0> <-> |e> (engineered resonance
    ``delta*Delta = g^2``) and on |1> <-> |f>. Phase 2 switches the drives off
    and turns on optical pumping ``sqrt(gamma)|0><f|_1`` and cavity loss.
    ``omega_f`` is /2pi GHz, durations are ns.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    dflt_f, dflt_t = nor_defaults(p, omega_f)
    omega_f = dflt_f if omega_f is None else omega_f
    durations = dflt_t if phase_durations is None else tuple(phase_durations)
    if len(durations) != 2 or min(durations) <= 0:
        raise ValueError(f"phase durations must be two positive numbers, got {durations}")
    ops = _Ops(4, 1, p.fock_cutoff)
    delta, Delta = p.detunings(1.0)
    g, gamma, kappa, omega = (TWO_PI * x for x in (p.g, p.gamma, p.kappa, p.omega))
    wf = TWO_PI * omega_f
    a = ops.mode(0)
    h0 = delta * dag(a) @ a
    for j in (0, 1):
        h0 = h0 + Delta * ops.q(j, E, E) + _jc(a, ops.q(j, E, G1), g)
    drive = _drive(ops.q(0, E, G0), omega) + _drive(ops.q(0, F, G1), wf)
    excite = LindbladModel(ops.space, h0 + drive)
    decay = LindbladModel(
        ops.space, h0, (math.sqrt(gamma) * ops.q(0, G0, F), math.sqrt(kappa) * a), ("gamma_f", "kappa")
    )
    phases = ((excite, durations[0]), (decay, durations[1])) * n_cycles
    sys = GateSchedule(
        "nor", Schedule(phases), ops.ground(), dict(NOR_TABLE), p, 0,
        {"omega_f": omega_f, "t_excite": durations[0], "t_decay": durations[1], "n_cycles": n_cycles},
    )
    return with_ground_noise(sys) if p.noise else sys


@dataclass(frozen=True)
class SecondModeParams:
    """Settings of the |f>-manifold and mode b used by the XOR gate.

    ``r2`` places (delta_2, Delta_2) on ``delta_2*Delta_2 = 2 g^2``; ``omega_f``
    drives |1>_1 <-> |f>_1 (defaults to equalising the two transfer times);
    ``kappa_a``/``kappa_b`` are optional cavity losses (/2pi GHz).
    """

    r2: float = 1.0
    omega_f: float | None = None
    kappa_a: float = 0.0
    kappa_b: float = 0.0
    t_excite: float | None = None
    t_decay: float | None = None


def xor_defaults(p: SystemParams, m: SecondModeParams) -> tuple[float, float, float]:
    g = TWO_PI * p.g
    _, Delta1 = p.detunings(1.0)
    Delta2 = math.sqrt(2 * g * g * m.r2)
    ce, cf = dressed_overlap(g, Delta1, 1), dressed_overlap(g, Delta2, 2)
    omega_f = p.omega * ce / cf if m.omega_f is None else m.omega_f
    t_exc = transfer_time(TWO_PI * p.omega, ce)
    t_dec = 15.0 / (TWO_PI * p.gamma)
    return omega_f, (m.t_excite or t_exc), (m.t_decay or t_dec)


def build_xor(p: SystemParams = HARDWARE_DEFAULTS, second_mode_params: SecondModeParams | None = None) -> GateSchedule:
    """Stepwise XOR gate: swaps |01> <-> |11> with the result on the first qubit.

    Emitters have levels 0, 1, e, f; |e>_j couples to mode a via |0>_j and
    |f>_j couples to mode b via |1>_j. Resonances: ``delta_1*Delta_1 = g^2``
    and ``delta_2*Delta_2 = 2 g^2``. Phase 1 drives the first emitter on
    |0> <-> |e> and |1> <-> |f>; phase 2 removes the drives and lets |e>_1 decay
    to |1> and |f>_1 decay to |0>.
    """
    m = second_mode_params or SecondModeParams()
    omega_f, t_exc, t_dec = xor_defaults(p, m)
    ops = _Ops(4, 2, p.fock_cutoff)
    g, gamma, omega = (TWO_PI * x for x in (p.g, p.gamma, p.omega))
    delta1, Delta1 = p.detunings(1.0)
    delta2, Delta2 = math.sqrt(2 * g * g / m.r2), math.sqrt(2 * g * g * m.r2)
    a, b = ops.mode(0), ops.mode(1)
    h0 = delta1 * dag(a) @ a + delta2 * dag(b) @ b
    for j in (0, 1):
        h0 = h0 + Delta1 * ops.q(j, E, E) + _jc(a, ops.q(j, E, G0), g)
        h0 = h0 + Delta2 * ops.q(j, F, F) + _jc(b, ops.q(j, F, G1), g)
    drive = _drive(ops.q(0, E, G0), omega) + _drive(ops.q(0, F, G1), TWO_PI * omega_f)
    jumps = [math.sqrt(gamma) * ops.q(0, G1, E), math.sqrt(gamma) * ops.q(0, G0, F)]
    labels = ["gamma_e", "gamma_f"]
    for k, (rate, op) in enumerate(((m.kappa_a, a), (m.kappa_b, b))):
        if rate > 0:
            jumps.append(math.sqrt(TWO_PI * rate) * op)
            labels.append("kappa_" + "ab"[k])
    excite = LindbladModel(ops.space, h0 + drive)
    decay = LindbladModel(ops.space, h0, tuple(jumps), tuple(labels))
    sys = GateSchedule(
        "xor", Schedule(((excite, t_exc), (decay, t_dec))), ops.ground(), dict(XOR_TABLE), p, 0,
        {"omega_f": omega_f, "t_excite": t_exc, "t_decay": t_dec, "r2": m.r2},
    )
    return with_ground_noise(sys) if p.noise else sys


BUILDERS = {
    "or-spont": build_or_spontaneous,
    "or-osc": build_or_oscillator,
    "or-hybrid": build_or_hybrid,
    "nor": build_nor,
    "xor": build_xor,
}
RESONANCE = {"or-spont": 1.0, "or-osc": 2.0, "or-hybrid": 1.0, "nor": 1.0, "xor": 1.0}


def build(gate: str, p: SystemParams, **kwargs):
    try:
        builder = BUILDERS[gate]
    except KeyError:
        raise ValueError(f"unknown gate {gate!r}; expected one of {sorted(BUILDERS)}") from None
    return builder(p, **kwargs)
