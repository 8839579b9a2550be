"""Closed-form model of the spontaneous-emission OR gate.

The undesired process |00> -> error is a two-state rate system ``M1``; the
desired process is reduced to a Lambda system (|01>, dressed |phi_->, |11>)
with the drive replaced by an incoherent pumping rate ``Gamma`` (``M2``).
All rates are in 1/ns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .effective import rates
from .gates import TWO_PI, SystemParams


class InvalidRegimeError(ValueError):
    """The closed-form optimum does not exist for these parameters."""


@dataclass(frozen=True)
class OptimalDetunings:
    delta_opt: float
    Delta_opt: float
    r_opt: float
    delta_approx: float
    Delta_approx: float


def optimal_detunings(g: float, gamma: float, kappa: float) -> OptimalDetunings:
    """Detunings maximising the desired rate (any consistent frequency unit)."""
    if min(g, gamma, kappa) <= 0:
        raise ValueError("g, gamma and kappa must be positive")
    if 4 * g * g <= gamma * kappa:
        raise ValueError("optimal detunings need 4 g^2 > gamma kappa")
    Delta = math.sqrt(gamma * (4 * g * g - gamma * kappa)) / (2 * math.sqrt(kappa))
    delta = 4 * g * g * Delta / (gamma * gamma + 4 * Delta * Delta)
    return OptimalDetunings(
        delta_opt=delta,
        Delta_opt=Delta,
        r_opt=gamma / kappa,
        delta_approx=math.sqrt(kappa / gamma) * g,
        Delta_approx=math.sqrt(gamma / kappa) * g,
    )


def m1(gamma_minus: float, gamma_g: float) -> np.ndarray:
    """Rate matrix for (|00>, error) populations."""
    a, b = gamma_minus + gamma_g, gamma_g
    return np.array([[-2 * a, 2 * b], [2 * a, -2 * b]])


def pe00(gamma_minus: float, gamma_g: float, t) -> np.ndarray:
    """Error probability of input |00> from the two-state rate model."""
    t = np.asarray(t, dtype=float)
    total = gamma_minus + 2 * gamma_g
    if total == 0:
        return np.zeros_like(t)
    return (gamma_minus + gamma_g) / total * (1 - np.exp(-2 * total * t))


def offresonant_error(p: SystemParams, t) -> np.ndarray:
    return pe00(rates(p).gamma_minus, p.flip_rate(), t)


@dataclass(frozen=True)
class LambdaParams:
    omega_d: float
    kappa_d: float
    gamma_d: float
    Gamma: float

    @classmethod
    def from_rates(cls, omega: float, gamma: float, kappa: float) -> "LambdaParams":
        omega_d = math.sqrt(kappa / (kappa + gamma)) * omega
        kd = kappa * gamma / (kappa + gamma)
        tot = 2 * kd
        return cls(omega_d, kd, kd, omega_d**2 * tot / (omega_d**2 + tot**2))

    @classmethod
    def from_params(cls, p: SystemParams) -> "LambdaParams":
        return cls.from_rates(TWO_PI * p.omega, TWO_PI * p.gamma, TWO_PI * p.kappa)


def m2(lp: LambdaParams, gamma_g: float) -> np.ndarray:
    """Rate matrix for (|01>, |phi_->, |11>) populations."""
    G, kd, gd, gg = lp.Gamma, lp.kappa_d, lp.gamma_d, gamma_g
    return np.array(
        [
            [-G - gg, kd, gg],
            [G, -gd - kd, 0.0],
            [gg, gd, -gg],
        ]
    )


@dataclass(frozen=True)
class AnalyticSolution:
    lambda_plus: float
    lambda_minus: float
    lambda_plus_approx: float
    lambda_minus_approx: float
    b_plus: float
    b_minus: float
    c: float
    gamma_minus: float
    gamma_g: float
    M1: np.ndarray
    M2: np.ndarray
    pe01: Callable[[np.ndarray], np.ndarray]
    pe00: Callable[[np.ndarray], np.ndarray]
    t_opt: float
    pe_avg_min: float
    lambda0: float = 0.0
    invalid_reason: str = ""

    def pe_avg(self, t) -> np.ndarray:
        """Average error with the |10> and |11> inputs taken as error-free."""
        return 0.25 * (self.pe01(t) + self.pe00(t))


def _weights(G, gd, gg, lp, lm):
    def b(l_own, l_other):
        num = G * gd - gg * (G + 2 * gg + l_other)
        den = G * gd + l_own * (2 * G + 4 * gd + 4 * gg) + G * gg + 4 * gd * gg + 3 * l_own**2
        return num / den

    c = (G * gd - gg * (G + gg + lp + gg + lm)) / (G * gd + G * gg + 4 * gd * gg)
    return b(lp, lm), b(lm, lp), c


def resonant_solution(p: SystemParams, gamma_minus: float | None = None) -> AnalyticSolution:
    """Eigen-solution of the Lambda rate model and the resulting optimum.

    ``B_- e^{l_- t} + B_+ e^{l_+ t} + C`` is the population of |11> for input
    |01>, so ``pe01 = 1 -`` that sum. ``gamma_minus`` defaults to the exact
    complex-detuning rate. When the closed-form optimum does not exist,
    ``t_opt`` and ``pe_avg_min`` are NaN and ``invalid_reason`` says why.
    """
    gg = p.flip_rate()
    gm = rates(p).gamma_minus if gamma_minus is None else gamma_minus
    lp_ = LambdaParams.from_params(p)
    G, gd = lp_.Gamma, lp_.gamma_d
    disc = G * G + 4 * gd * gd + 4 * gg * (gg - 2 * gd)
    if disc <= 0:
        raise InvalidRegimeError("degenerate eigenvalues of the resonant rate matrix")
    root = math.sqrt(disc)
    l_plus = 0.5 * (-G - 2 * (gd + gg) + root)
    l_minus = 0.5 * (-G - 2 * (gd + gg) - root)
    b_plus, b_minus, c = _weights(G, gd, gg, l_plus, l_minus)
    M1, M2 = m1(gm, gg), m2(lp_, gg)

    def f01(t):
        t = np.asarray(t, dtype=float)
        return 1.0 - (b_minus * np.exp(l_minus * t) + b_plus * np.exp(l_plus * t) + c)

    def f00(t):
        return pe00(gm, gg, t)

    # stationary point of the average error once the fast l_- term has died out
    a = 2 * (gm + 2 * gg)
    arg = 2 * (gm + gg) / (b_plus * l_plus)
    den = a + l_plus
    t_opt, pe_min, reason = math.nan, math.nan, ""
    if not (arg > 0 and den != 0):
        reason = f"no closed-form optimum (log argument {arg:.3g}, rate {den:.3g})"
    else:
        t_opt = math.log(arg) / den
        if t_opt <= 0:
            reason = f"closed-form optimum at nonpositive time {t_opt:.3g}"
            t_opt = math.nan
        else:
            pe_min = float(0.25 * (f01(t_opt) + f00(t_opt)))
    return AnalyticSolution(
        lambda_plus=l_plus,
        lambda_minus=l_minus,
        lambda_plus_approx=-0.5 * (G + 2 * gg),
        lambda_minus_approx=-0.5 * (G + gg + 4 * gd),
        b_plus=b_plus,
        b_minus=b_minus,
        c=c,
        gamma_minus=gm,
        gamma_g=gg,
        M1=M1,
        M2=M2,
        pe01=f01,
        pe00=f00,
        t_opt=t_opt,
        pe_avg_min=pe_min,
        invalid_reason=reason,
    )


def analytic_gate(p: SystemParams) -> tuple[float, float]:
    """(t_opt in ns, minimal average error) of the closed-form model."""
    sol = resonant_solution(p)
    if sol.invalid_reason:
        raise InvalidRegimeError(sol.invalid_reason)
    return sol.t_opt, sol.pe_avg_min


def expm_populations(M: np.ndarray, v0, t) -> np.ndarray:
    """Rate-equation populations ``exp(M t) v0`` for each time in ``t``."""
    v0 = np.asarray(v0, dtype=float)
    return np.array([sla.expm(M * ti) @ v0 for ti in np.atleast_1d(t)])
