"""End-to-end acceptance checks, one test per criterion.

Each test prints a single verdict line; the lines are repeated in the
terminal summary.
"""

import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from dissipgate.analytic import analytic_gate, resonant_solution
from dissipgate.effective import (
    ComplexDetunings,
    block_inverse,
    dressed_states,
    effective_model,
    ground_partition,
    nh_hamiltonian,
    rates,
)
from dissipgate.gates import LABELS, TWO_PI, GateSchedule, SystemParams, build, build_or_oscillator, build_or_spontaneous
from dissipgate.hilbert import Space, check_density_matrix
from dissipgate.lindblad import LindbladModel, evolve, propagate, propagate_schedule, reachable_kets, restrict
from dissipgate.metrics import evaluate
from dissipgate.optimize import Axis, SweepSpec, best_omega, minimize, sweep

pytestmark = pytest.mark.acceptance

HARDWARE = SystemParams()
THREADS = 4


def per_input_at_optimum(res):
    i = int(np.argmin(res.series.average))
    return {lab: float(v[i]) for lab, v in res.series.per_input.items()}


def test_r_sweep_optimum(verdict):
    r_values = np.round(np.arange(0.2, 0.8001, 0.04), 10)
    res = sweep(SweepSpec(HARDWARE, (Axis("r", r_values),), reoptimize=("omega",)), threads=THREADS)
    best = res.best()
    ok = abs(best["min_error"] - 0.023) <= 0.005 and abs(best["r"] - 0.44) <= 0.08
    detail = f"min error {best['min_error']:.4f} at r={best['r']:.2f} (omega {best['omega']:.3f})"
    assert verdict(1, "r-sweep optimum", ok, detail), detail


def test_two_parameter_optimum(verdict):
    m = minimize(
        HARDWARE, ("omega", "gamma"), {"omega": (0.005, 0.5), "gamma": (0.005, 0.5)},
        grid_points=25, threads=THREADS,
    )
    e = m.result.min_error
    ok = 0.008 <= e <= 0.015
    detail = f"min error {e:.4f} at omega={m.params.omega:.4f}, gamma={m.params.gamma:.4f}, bounds hit {m.at_bounds or 'none'}"
    assert verdict(2, "two-parameter optimum", ok, detail), detail


def test_photon_counts(verdict):
    res = evaluate(build("or-spont", HARDWARE), with_photons=True)
    want = {"00": 0.38, "01": 1.96, "10": 1.96, "11": 0.02}
    got = res.photon_counts
    ok = all(abs(got[k] - v) <= 0.05 for k, v in want.items()) and abs(res.mean_photons - 1.08) <= 0.05
    detail = ", ".join(f"{k}: {got[k]:.3f}" for k in LABELS) + f"; average {res.mean_photons:.3f} at t={res.t_opt:.1f} ns"
    assert verdict(3, "photon counts", ok, detail), detail


def test_analytic_model_against_full_simulation(verdict):
    lo, hi = math.log(0.02), math.log(0.6)
    an = minimize_scalar(lambda u: analytic_gate(HARDWARE.replace(omega=math.exp(u)))[1], bounds=(lo, hi), method="bounded")
    an_omega, an_err = math.exp(an.x), an.fun
    full_omega, full = best_omega("or-spont", HARDWARE, (0.02, 0.6))
    ratios = []
    for w in np.linspace(0.05, 0.3, 11):
        t_an, _ = analytic_gate(HARDWARE.replace(omega=w))
        ratios.append(t_an / evaluate(build("or-spont", HARDWARE.replace(omega=w))).t_opt)
    worst = max(abs(r - 1) for r in ratios)
    checks = {
        "analytic value": abs(an_err - 0.030) <= 0.003 and abs(an_omega - 0.19) <= 0.03,
        "full value": abs(full.min_error - 0.028) <= 0.003 and abs(full_omega - 0.21) <= 0.03,
        "t_opt agreement": worst <= 0.20,
    }
    detail = (
        f"analytic {an_err:.4f} at omega={an_omega:.3f}; full {full.min_error:.4f} at omega={full_omega:.3f}; "
        f"worst t_opt deviation {worst:.1%}; failed: {[k for k, v in checks.items() if not v] or 'none'}"
    )
    assert verdict(4, "analytic vs full", all(checks.values()), detail), detail


def _fitted_rates(p):
    sys = build_or_spontaneous(p)
    rs = rates(p)
    rho0 = np.stack([sys.initial_state("01"), sys.initial_state("00")])

    def diag(b):
        return np.einsum("bii->bi", b).real.copy()

    tp = np.linspace(0, 2.5 / rs.gamma_plus, 100)
    p11 = np.stack(propagate(sys.model, rho0[:1], tp, observe=diag))[:, 0, sys.ground_basis["11"]]
    sel = tp >= 0.3 / rs.gamma_plus
    gp = -np.polyfit(tp[sel], np.log(1 - p11[sel]), 1)[0]
    tm = np.linspace(0, 0.5 / rs.gamma_minus, 100)
    p00 = np.stack(propagate(sys.model, rho0[1:], tm, observe=diag))[:, 0, sys.ground_basis["00"]]
    sel = tm >= 0.1 * tm[-1]
    # |00> leaves through either emitter at gamma_minus each
    gm = -np.polyfit(tm[sel], np.log(p00[sel]), 1)[0] / 2
    return gp, gm, rs


def test_rate_formulas_against_dynamics(verdict):
    parts, ok = [], True
    for omega in (0.3 / 4, 0.3 / 8):
        gp, gm, rs = _fitted_rates(HARDWARE.replace(omega=omega, noise=False))
        dp, dm = gp / rs.gamma_plus - 1, gm / rs.gamma_minus - 1
        ok &= abs(dp) <= 0.05 and abs(dm) <= 0.05
        parts.append(f"omega={omega:.4f}: gamma+ {dp:+.2%}, gamma- {dm:+.2%}")
    strong = SystemParams(g=44.0, gamma=0.3, kappa=0.3, omega=0.3 / 4, noise=False)
    gp, gm, _ = _fitted_rates(strong)
    dr = (gp / gm) / (strong.g / strong.gamma) ** 2 - 1
    ok &= abs(dr) <= 0.10
    parts.append(f"ratio vs g^2/gamma^2 at g=44, kappa=gamma: {dr:+.2%}")
    detail = "; ".join(parts)
    assert verdict(5, "rate formulas vs dynamics", ok, detail), detail


def _effective_case(sys, resonance):
    p = sys.params
    cd = ComplexDetunings.from_params(p, resonance)
    em = effective_model(ground_partition(sys), TWO_PI * p.g, cd)
    W = TWO_PI * p.omega / 2
    sg, sk = math.sqrt(TWO_PI * p.gamma) * W, math.sqrt(TWO_PI * p.kappa) * W
    return em, em.derived, W, sg, sk


def test_effective_operator_closed_forms(verdict):
    errs = []

    def compare(em, gb, op, ket, bra, want):
        got = em.element(op, gb[ket], gb[bra])
        errs.append(abs(got - want) / max(abs(want), 1e-300))

    sys = build_or_spontaneous(SystemParams(noise=False))
    em, c, W, sg, sk = _effective_case(sys, 1.0)
    gb = sys.ground_basis
    L1, L2, Lk, h = em.jump("gamma1"), em.jump("gamma2"), em.jump("kappa"), em.h_eff
    compare(em, gb, L1, "11", "01", sg / c.delta_eff_1)
    compare(em, gb, L2, "11", "10", sg / c.delta_eff_1)
    compare(em, gb, L1, "10", "00", sg * (1 / c.delta_eff_2 + 1 / c.g_eff_1))
    compare(em, gb, L2, "01", "00", sg * (1 / c.delta_eff_2 + 1 / c.g_eff_1))
    compare(em, gb, Lk, "00", "00", sk * 2 / c.g_eff_3)
    compare(em, gb, Lk, "01", "01", sk / c.g_eff_2)
    compare(em, gb, Lk, "10", "10", sk / c.g_eff_2)
    compare(em, gb, h, "01", "01", -(W**2) * (1 / c.delta_eff_1).real)
    compare(em, gb, h, "00", "00", -(W**2) * 2 * (1 / c.delta_eff_2 + 1 / c.g_eff_1).real)

    osc = build_or_oscillator(SystemParams(noise=False), drive_both=True)
    em, c, W, sg, sk = _effective_case(osc, 2.0)
    gb = osc.ground_basis
    L1, L2, Lk, h = em.jump("gamma1"), em.jump("gamma2"), em.jump("kappa"), em.h_eff
    compare(em, gb, L1, "10", "00", sg / c.delta_eff_1)
    compare(em, gb, L1, "11", "01", sg / c.delta_eff_2)
    compare(em, gb, L1, "11", "10", sg / c.g_eff_1)
    compare(em, gb, L2, "01", "00", sg / c.delta_eff_1)
    compare(em, gb, L2, "11", "10", sg / c.delta_eff_2)
    compare(em, gb, L2, "11", "01", sg / c.g_eff_1)
    compare(em, gb, Lk, "10", "00", sk / c.g_eff_2)
    compare(em, gb, Lk, "11", "01", sk / c.g_eff_3)
    compare(em, gb, h, "01", "01", -(W**2) * (1 / c.delta_eff_2).real)
    compare(em, gb, h, "00", "00", -(W**2) * 2 * (1 / c.delta_eff_1).real)

    p = SystemParams(noise=False)
    part = ground_partition(build_or_spontaneous(p))
    i = sys.space.index
    pos = {int(k): n for n, k in enumerate(part.excited)}
    b = np.array([pos[i((2, 1, 0))], pos[i((0, 1, 1))]])
    inv = block_inverse(nh_hamiltonian(part))[np.ix_(b, b)]
    cd = ComplexDetunings.from_params(p)
    d, D, g = cd.delta_t, cd.Delta_t, TWO_PI * p.g
    printed = np.array([[d, -g], [-g, D]]) / (d * D - g * g)
    inv_err = float(np.max(np.abs(inv - printed) / np.abs(printed)))
    worst = max(errs)
    ok = worst <= 1e-10 and inv_err <= 1e-13
    detail = f"{len(errs)} entries, worst relative deviation {worst:.1e}; block inverse {inv_err:.1e}"
    assert verdict(6, "effective-operator closed forms", ok, detail), detail


GATES = ("or-spont", "or-osc", "or-hybrid", "nor", "xor")


def _gate_states(sys):
    rho0 = np.stack([sys.initial_state(lab) for lab in LABELS])
    if isinstance(sys, GateSchedule):
        _, outs, _ = propagate_schedule(sys.schedule, rho0, 20)
        return [s for batch in outs for s in batch]
    res = evaluate(sys)
    t = np.linspace(0, 1.5 * res.t_opt, 40)
    return [s for batch in propagate(sys.model, rho0, t) for s in batch]


def _small_reductions():
    for gate in GATES:
        sys = build(gate, HARDWARE)
        models = [m for m, _ in sys.schedule.phases] if isinstance(sys, GateSchedule) else [sys.model]
        for m in models:
            kets = reachable_kets([m], [sys.ground_basis[lab] for lab in LABELS])
            if len(kets) <= 32:
                h, jumps = restrict(m, kets)
                yield gate, LindbladModel(Space([len(kets)]), h, tuple(jumps)), kets


def test_property_suite(verdict):
    issues = []
    for gate in GATES:
        for rho in _gate_states(build(gate, HARDWARE)):
            try:
                check_density_matrix(rho, herm_tol=1e-8, trace_tol=1e-8, pos_tol=1e-8)
            except ValueError as exc:
                issues.append(f"{gate}: {exc}")
                break

    rk_worst, n_red = 0.0, 0
    for gate, m, _ in _small_reductions():
        n_red += 1
        rho0 = np.zeros((m.dim, m.dim), complex)
        rho0[0, 0] = 0.5
        rho0[-1, -1] = 0.5
        t = np.linspace(0, 30, 7)
        d = np.abs(evolve(m, rho0, t, "adaptive-RK").states - evolve(m, rho0, t, "liouvillian-expm").states).max()
        rk_worst = max(rk_worst, float(d))
    if rk_worst > 1e-7:
        issues.append(f"rk45 vs expm {rk_worst:.1e}")

    p = SystemParams(delta=4.4, Delta=4.4, noise=False)
    s = build_or_spontaneous(p)
    part = ground_partition(s)
    pos = {int(k): n for n, k in enumerate(part.excited)}
    i = s.space.index
    triple = np.array([pos[i(lv)] for lv in ((2, 0, 0), (0, 2, 0), (0, 0, 1))])
    w, _ = dressed_states(part, triple)
    g = TWO_PI * p.g
    e_err = float(np.max(np.abs(np.sort(w) - np.array([(1 - math.sqrt(2)) * g, g, (1 + math.sqrt(2)) * g]))))
    if e_err > 1e-10:
        issues.append(f"dressed energies {e_err:.1e}")

    sol = resonant_solution(HARDWARE)
    col = float(max(np.abs(sol.M2.sum(axis=0)).max(), np.abs(sol.M1.sum(axis=0)).max()))
    if col > 1e-12:
        issues.append(f"rate matrix column sums {col:.1e}")

    sys = build("or-spont", HARDWARE)
    rho0 = sys.initial_state("01")
    whole = evolve(sys.model, rho0, [0.0, 30.0]).states[-1]
    mid = evolve(sys.model, rho0, [0.0, 12.0]).states[-1]
    split = evolve(sys.model, mid, [0.0, 18.0]).states[-1]
    semi = float(np.abs(whole - split).max())
    if semi > 1e-7:
        issues.append(f"semigroup {semi:.1e}")

    detail = (
        f"physicality on {len(GATES)} gates; rk45 vs expm {rk_worst:.1e} over {n_red} reductions; "
        f"dressed energies {e_err:.1e}; column sums {col:.1e}; semigroup {semi:.1e}"
        + (f"; issues: {issues}" if issues else "")
    )
    assert verdict(7, "property suite", not issues, detail), detail


def test_truth_tables(verdict):
    parts, ok = [], True
    bounds = {"omega": (0.005, 0.5), "gamma": (0.005, 0.5)}
    for gate in ("or-spont", "or-osc", "or-hybrid"):
        m = minimize(HARDWARE, ("omega", "gamma"), bounds, gate=gate, grid_points=7, threads=THREADS)
        per = per_input_at_optimum(m.result)
        ok &= max(per.values()) < 0.03
        parts.append(f"{gate} worst {max(per.values()):.4f}")
    for gate in ("nor", "xor"):
        res = evaluate(build(gate, HARDWARE))
        per = {lab: float(v[-1]) for lab, v in res.series.per_input.items()}
        ok &= max(per.values()) < 0.10
        parts.append(f"{gate} worst {max(per.values()):.4f}")
    detail = "; ".join(parts)
    assert verdict(8, "truth tables", ok, detail), detail
