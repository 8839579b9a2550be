"""Adiabatic elimination of the excited manifold (effective operator formalism).

With the space split into ground and excited kets, weak drives ``V_+``
(ground -> excited) are treated perturbatively:

    H_eff = -1/2 V_- [H_NH^-1 + (H_NH^-1)^dag] V_+ + H_g
    L_eff = L H_NH^-1 V_+

where ``H_NH = H_e - i/2 sum_k L_k^dag L_k`` on the excited block.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .gates import TWO_PI, SystemParams
from .hilbert import Space
from .lindblad import LindbladModel

COND_WARN = 1e12


class SingularBlockError(np.linalg.LinAlgError):
    """An excited block of H_NH cannot be inverted."""


@dataclass(frozen=True)
class Partition:
    model: LindbladModel
    ground: np.ndarray
    excited: np.ndarray
    v_plus: np.ndarray
    v_minus: np.ndarray
    h_e: np.ndarray
    h_g: np.ndarray


def partition(
    model: LindbladModel,
    ground_indices: Sequence[int],
    drive: np.ndarray | None = None,
    tol: float = 1e-12,
) -> Partition:
    """Split ``model.hamiltonian`` into ground, excited and coupling parts.

    All operators stay full-size; ``v_plus`` only has entries from ground
    columns into excited rows. Without ``drive`` every ground-excited matrix
    element counts as coupling and ``H = h_g + h_e + v_plus + v_minus``
    holds exactly. When the Hermitian drive operator is given, ``v_plus`` is
    its ground-to-excited part and drive terms acting inside the excited
    manifold are removed from ``h_e`` (they only enter at higher order).
    """
    n = model.dim
    ground = np.unique(np.asarray(ground_indices, dtype=int))
    if len(ground) == 0 or ground[0] < 0 or ground[-1] >= n:
        raise ValueError(f"ground indices must lie in [0, {n})")
    excited = np.setdiff1d(np.arange(n), ground)
    h = model.hamiltonian
    pg = np.zeros(n, dtype=bool)
    pg[ground] = True
    pe = ~pg
    source = h if drive is None else drive
    up = source * np.outer(pe, pg)
    down = source * np.outer(pg, pe)
    if np.max(np.abs(down - up.conj().T), initial=0.0) > tol:
        raise ValueError("ground-excited couplings are not Hermitian conjugates of each other")
    h_g = h * np.outer(pg, pg)
    bare = h if drive is None else h - drive
    h_e = bare * np.outer(pe, pe)
    v_plus, v_minus = up, up.conj().T
    if drive is None:
        resid = np.max(np.abs(h - (h_g + h_e + v_plus + v_minus)))
        assert resid <= tol, resid
    elif np.max(np.abs((h - drive) * np.outer(pe, pg)), initial=0.0) > tol:
        raise ValueError("the Hamiltonian couples ground and excited states outside the drive")
    return Partition(model, ground, excited, v_plus, v_minus, h_e, h_g)


def nh_hamiltonian(p: Partition) -> np.ndarray:
    """Excited-block non-Hermitian Hamiltonian, indexed by ``p.excited``."""
    ix = np.ix_(p.excited, p.excited)
    h = p.h_e[ix].astype(complex)
    for L in p.model.jumps:
        h = h - 0.5j * (L.conj().T @ L)[ix]
    return h


def block_decompose(h_nh: np.ndarray, tol: float = 0.0) -> list[np.ndarray]:
    """Connected components of the coupling graph of ``h_nh`` (local indices)."""
    adj = csr_matrix((np.abs(h_nh) > tol) | (np.abs(h_nh.T) > tol))
    count, label = connected_components(adj, directed=False)
    blocks = [np.flatnonzero(label == k) for k in range(count)]
    return sorted(blocks, key=lambda b: b[0])


def driven_blocks(p: Partition, h_nh: np.ndarray | None = None) -> list[np.ndarray]:
    """Blocks (local indices into ``p.excited``) that ``v_plus`` feeds."""
    h_nh = nh_hamiltonian(p) if h_nh is None else h_nh
    fed = np.any(np.abs(p.v_plus[p.excited][:, p.ground]) > 0, axis=1)
    return [b for b in block_decompose(h_nh) if fed[b].any()]


def block_inverse(h_nh: np.ndarray, blocks: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """Inverse of ``h_nh`` assembled from per-block LU factorisations.

    Blocks not listed are left as zero, which is harmless as long as nothing
    maps into them.
    """
    blocks = block_decompose(h_nh) if blocks is None else blocks
    inv = np.zeros_like(h_nh, dtype=complex)
    for b in blocks:
        sub = h_nh[np.ix_(b, b)]
        cond = np.linalg.cond(sub)
        if not np.isfinite(cond):
            raise SingularBlockError(f"singular H_NH block on excited indices {b.tolist()}")
        if cond > COND_WARN:
            warnings.warn(f"H_NH block {b.tolist()} has condition number {cond:.2e}", RuntimeWarning)
        lu = sla.lu_factor(sub)
        inv[np.ix_(b, b)] = sla.lu_solve(lu, np.eye(len(b)))
    return inv


@dataclass(frozen=True)
class ComplexDetunings:
    """delta_t = delta - i kappa/2 and Delta_t = Delta - i gamma/2 (rad/ns)."""

    delta_t: complex
    Delta_t: complex

    def __post_init__(self):
        if self.delta_t.imag > 0 or self.Delta_t.imag > 0:
            raise ValueError("complex detunings must have nonpositive imaginary parts")

    @classmethod
    def from_params(cls, p: SystemParams, resonance: float = 1.0) -> "ComplexDetunings":
        delta, Delta = p.detunings(resonance)
        return cls(complex(delta, -0.5 * TWO_PI * p.kappa), complex(Delta, -0.5 * TWO_PI * p.gamma))


@dataclass(frozen=True)
class EffectiveCouplings:
    """Closed-form effective couplings and detunings built from the complex detunings."""

    g_eff_1: complex
    g_eff_2: complex
    g_eff_3: complex
    delta_eff_1: complex
    delta_eff_2: complex

    @classmethod
    def from_detunings(cls, g: float, cd: ComplexDetunings) -> "EffectiveCouplings":
        d, D = cd.delta_t, cd.Delta_t
        return cls(
            g_eff_1=-2 * D + d * D * D / (g * g),
            g_eff_2=g - d * D / g,
            g_eff_3=2 * g - d * D / g,
            delta_eff_1=D - g * g / d,
            delta_eff_2=D - g * g / (d - g * g / D),
        )


@dataclass(frozen=True)
class EffectiveModel:
    """Effective ground-block dynamics; matrices are indexed by ``ground``."""

    ground: np.ndarray
    h_eff: np.ndarray
    jumps_eff: tuple[np.ndarray, ...]
    labels: tuple[str, ...]
    derived: EffectiveCouplings | None = None

    def jump(self, label: str) -> np.ndarray:
        return self.jumps_eff[self.labels.index(label)]

    def element(self, op: np.ndarray, ket: int, bra: int) -> complex:
        """Matrix element between full-space basis indices ``ket`` and ``bra``."""
        pos = {int(k): i for i, k in enumerate(self.ground)}
        return complex(op[pos[ket], pos[bra]])

    def as_lindblad(self) -> LindbladModel:
        """The effective dynamics as a Lindblad model on the ground block alone."""
        space = Space([len(self.ground)])
        h = 0.5 * (self.h_eff + self.h_eff.conj().T)
        return LindbladModel(space, h, self.jumps_eff, self.labels)


def effective_model(p: Partition, g: float | None = None, detunings: ComplexDetunings | None = None) -> EffectiveModel:
    """Effective Hamiltonian and jumps of ``p``.

    ``g`` (rad/ns) and ``detunings`` are optional; when both are given the
    closed-form couplings are attached as ``derived``.
    """
    ex, gr = p.excited, p.ground
    h_nh = nh_hamiltonian(p)
    inv = block_inverse(h_nh, driven_blocks(p, h_nh))
    vp = p.v_plus[np.ix_(ex, gr)]
    vm = p.v_minus[np.ix_(gr, ex)]
    h_eff = -0.5 * vm @ (inv + inv.conj().T) @ vp + p.h_g[np.ix_(gr, gr)]
    prop = inv @ vp
    # jumps may return the system to the ground block only
    jumps = tuple(L[np.ix_(gr, ex)] @ prop for L in p.model.jumps)
    derived = EffectiveCouplings.from_detunings(g, detunings) if g is not None and detunings is not None else None
    return EffectiveModel(gr, h_eff, jumps, p.model.labels, derived)


def dressed_states(p: Partition, block: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors of ``H_e`` on one block (local indices)."""
    idx = p.excited[np.asarray(block)]
    sub = p.h_e[np.ix_(idx, idx)]
    return np.linalg.eigh(0.5 * (sub + sub.conj().T))


@dataclass(frozen=True)
class RateSet:
    """Effective decay rates in 1/ns."""

    gamma_plus: float
    gamma_minus: float
    gamma_plus_opt: float
    gamma_minus_opt: float
    gamma_plus_sd: float


def rates(p: SystemParams, resonance: float = 1.0) -> RateSet:
    """Desired (|01> -> |11>) and undesired (|00> -> |10>) effective rates.

    The exact forms use complex detunings; ``*_opt`` are the optimal-point
    approximations and ``gamma_plus_sd`` the saturation-corrected rate.
    """
    g, gamma, omega = TWO_PI * p.g, TWO_PI * p.gamma, TWO_PI * p.omega
    cd = ComplexDetunings.from_params(p, resonance)
    d, D = cd.delta_t, cd.Delta_t
    pre = gamma * (omega / 2) ** 2
    return RateSet(
        gamma_plus=pre * abs(d / (d * D - g * g)) ** 2,
        gamma_minus=pre * abs(d / (d * D - 2 * g * g)) ** 2,
        gamma_plus_opt=omega**2 / (4 * gamma),
        gamma_minus_opt=gamma * omega**2 / (4 * g * g),
        gamma_plus_sd=gamma * omega**2 / (4 * (gamma**2 + 2 * omega**2)),
    )


def ground_partition(sys) -> Partition:
    """Partition of a gate model with the computational states as ground block."""
    return partition(sys.model, sorted(sys.ground_basis.values()), drive=sys.drive)
