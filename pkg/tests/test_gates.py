import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dissipgate.gates import (
    BUILDERS,
    LABELS,
    NOISE_PREFIX,
    NOR_TABLE,
    OR_TABLE,
    RESONANCE,
    TWO_PI,
    XOR_TABLE,
    GateSchedule,
    SystemParams,
    build,
    dressed_overlap,
    without_ground_noise,
)
from dissipgate.hilbert import check_density_matrix
from dissipgate.metrics import success_probability
from dissipgate.lindblad import evolve

GATES = tuple(BUILDERS)
TABLES = {"or-spont": OR_TABLE, "or-osc": OR_TABLE, "or-hybrid": OR_TABLE, "nor": NOR_TABLE, "xor": XOR_TABLE}


@pytest.mark.parametrize(
    "kwargs",
    [dict(g=0), dict(gamma=-1), dict(kappa=0), dict(omega=-0.1), dict(r=0), dict(delta=1.0),
     dict(t1=0), dict(t2=-1), dict(fock_cutoff=1)],
)
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        SystemParams(**kwargs)


def test_t2_longer_than_flip_limit_is_rejected():
    with pytest.raises(ValueError, match="T2"):
        SystemParams(t1=1.0, t2=5.0).dephasing_rate()
    with pytest.raises(ValueError):
        build("or-spont", SystemParams(t1=1.0, t2=5.0))


def test_default_detunings_follow_rate_ratio():
    p = SystemParams()
    delta, Delta = p.detunings()
    assert Delta / delta == pytest.approx(0.3 / 0.6, rel=1e-12)
    assert delta * Delta == pytest.approx((TWO_PI * 4.4) ** 2, rel=1e-12)


def test_explicit_detunings_are_kept():
    delta, Delta = SystemParams(delta=2.0, Delta=3.0).detunings()
    assert (delta, Delta) == pytest.approx((TWO_PI * 2.0, TWO_PI * 3.0))


@settings(max_examples=40, deadline=None)
@given(r=st.floats(0.05, 20), gate=st.sampled_from(("or-spont", "or-osc", "or-hybrid")))
def test_builders_sit_on_resonance(r, gate):
    sys = build(gate, SystemParams(r=r, noise=False))
    delta, Delta = sys.params.detunings(sys.resonance)
    g = TWO_PI * sys.params.g
    assert abs(delta * Delta / (sys.resonance * g * g) - 1) < 1e-12
    assert sys.resonance == RESONANCE[gate]
    i = sys.space.index
    h = sys.model.hamiltonian
    # cavity frequency on a one-photon state with both emitters in |1>
    assert h[i((1, 1, 1)), i((1, 1, 1))].real == pytest.approx(delta, rel=1e-12)


@pytest.mark.parametrize("gate", GATES)
def test_truth_table_indicator_at_time_zero(gate):
    sys = build(gate, SystemParams(noise=False))
    assert dict(sys.truth_target) == TABLES[gate]
    for lab in LABELS:
        traj = evolve(sys.model, sys.initial_state(lab), [0.0])
        ps = success_probability(traj, sys, lab)[0]
        own_bit = sys.space.levels(sys.ground_basis[lab])[sys.output_qubit]
        assert ps == pytest.approx(float(own_bit == TABLES[gate][lab]), abs=1e-15)


@pytest.mark.parametrize("gate", GATES)
def test_ground_basis_and_initial_states(gate):
    sys = build(gate, SystemParams(noise=False))
    for lab in LABELS:
        idx = sys.ground_basis[lab]
        levels = sys.space.levels(idx)
        assert levels[:2] == (int(lab[0]), int(lab[1]))
        assert all(n == 0 for n in levels[2:])
        rho = sys.initial_state(lab)
        check_density_matrix(rho)
        assert rho[idx, idx] == 1


def test_space_dimensions():
    p = SystemParams(noise=False)
    assert build("or-spont", p).space.dims == (3, 3, 3)
    assert build("nor", p).space.dims == (4, 4, 3)
    assert build("xor", p).space.dims == (4, 4, 3, 3)
    assert build("or-spont", p.replace(fock_cutoff=4)).space.dims == (3, 3, 4)


@pytest.mark.parametrize("gate", GATES)
def test_noise_jumps_are_labelled_and_removable(gate):
    noisy = build(gate, SystemParams())
    clean = build(gate, SystemParams(noise=False))
    labels = noisy.model.labels if not isinstance(noisy, GateSchedule) else sum(
        (m.labels for m, _ in noisy.schedule.phases), ()
    )
    noise = [lab for lab in labels if lab.startswith(NOISE_PREFIX)]
    assert len(noise) > 0
    assert not any(lab.startswith(NOISE_PREFIX) for lab in noisy.emission_labels)
    assert noisy.emission_labels == clean.emission_labels
    stripped = without_ground_noise(noisy)
    assert stripped.emission_labels == clean.emission_labels
    assert not stripped.params.noise


def test_noise_rates_match_coherence_times():
    p = SystemParams(t1=20.0, t2=1.0)
    sys = build("or-spont", p)
    ops = dict(zip(sys.model.labels, sys.model.jumps))
    flip = ops[f"{NOISE_PREFIX}:flip+1"]
    assert np.sum(np.abs(flip) ** 2) / 9 == pytest.approx(1 / 20e3, rel=1e-12)  # 9 spectator states
    deph = ops[f"{NOISE_PREFIX}:dephase1"]
    # |0><1| coherence decays at flip rate + 2 * (dephase/2) = 1/T2
    d = deph[sys.space.index((0, 0, 0)), sys.space.index((0, 0, 0))].real
    assert 2 * d * d + 1 / 20e3 == pytest.approx(1 / 1e3, rel=1e-12)
    assert p.flip_rate() == pytest.approx(1 / 20e3)
    assert SystemParams(gamma_g=1e-5).flip_rate() == pytest.approx(TWO_PI * 1e-5)


def test_spontaneous_or_operators():
    p = SystemParams(noise=False)
    sys = build("or-spont", p)
    i = sys.space.index
    h = sys.model.hamiltonian
    g = TWO_PI * p.g
    assert h[i((2, 0, 0)), i((0, 0, 1))] == pytest.approx(g)
    assert h[i((2, 0, 0)), i((0, 0, 0))] == pytest.approx(TWO_PI * p.omega / 2)
    assert np.allclose(h, h.conj().T)
    L = dict(zip(sys.model.labels, sys.model.jumps))
    assert L["gamma1"][i((1, 0, 0)), i((2, 0, 0))] == pytest.approx(math.sqrt(TWO_PI * p.gamma))
    assert L["kappa"][i((0, 0, 0)), i((0, 0, 1))] == pytest.approx(math.sqrt(TWO_PI * p.kappa))


def test_oscillator_defaults_and_options():
    p = SystemParams(noise=False)
    sys = build("or-osc", p)
    assert sys.params.kappa == p.gamma
    i = sys.space.index
    h = sys.model.hamiltonian
    assert h[i((2, 0, 0)), i((0, 0, 0))] != 0
    assert h[i((0, 2, 0)), i((0, 0, 0))] == 0
    both = build("or-osc", p, drive_both=True).model.hamiltonian
    assert both[i((0, 2, 0)), i((0, 0, 0))] != 0
    assert build("or-osc", p, kappa=0.5).params.kappa == 0.5


def test_dressed_overlap_limits():
    assert dressed_overlap(1.0, 0.0) == 1.0
    assert dressed_overlap(1.0, 0.0, partners=2) == pytest.approx(1 / math.sqrt(2))
    assert dressed_overlap(1.0, 1.0) == pytest.approx(1 / math.sqrt(2))


def test_stepwise_schedules():
    nor = build("nor", SystemParams(noise=False), n_cycles=2)
    assert len(nor.schedule.phases) == 4
    assert nor.settings["n_cycles"] == 2
    with pytest.raises(ValueError):
        build("nor", SystemParams(), n_cycles=0)
    with pytest.raises(ValueError):
        build("nor", SystemParams(), phase_durations=(1.0, -1.0))
    xor = build("xor", SystemParams(noise=False))
    assert xor.schedule.phases[0][0].jumps == ()
    assert set(xor.emission_labels) == {"gamma_e", "gamma_f"}


def test_unknown_gate():
    with pytest.raises(ValueError, match="unknown gate"):
        build("and", SystemParams())
