"""Composite Hilbert spaces and dense operator helpers.

Leg order used throughout the package: emitter 1, emitter 2, mode a, (mode b).
Emitter levels are indexed 0 -> |0>, 1 -> |1>, 2 -> |e>, 3 -> |f>.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

G0, G1, E, F = 0, 1, 2, 3


@dataclass(frozen=True)
class Space:
    """Ordered list of subsystem dimensions."""

    dims: tuple[int, ...]

    def __init__(self, dims: Sequence[int]):
        dims = tuple(int(d) for d in dims)
        if not dims:
            raise ValueError("a space needs at least one subsystem")
        if any(d < 1 for d in dims):
            raise ValueError(f"subsystem dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self) -> int:
        return len(self.dims)

    def index(self, levels: Sequence[int]) -> int:
        """Flat basis index of a product basis state."""
        if len(levels) != len(self.dims):
            raise ValueError(f"expected {len(self.dims)} levels, got {len(levels)}")
        for lvl, d in zip(levels, self.dims):
            if not 0 <= lvl < d:
                raise IndexError(f"level {lvl} out of range for dimension {d}")
        return int(np.ravel_multi_index(tuple(levels), self.dims))

    def levels(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(index, self.dims))

    def basis(self, levels: Sequence[int]) -> np.ndarray:
        ket = np.zeros(self.total, dtype=complex)
        ket[self.index(levels)] = 1.0
        return ket

    def projector(self, levels: Sequence[int]) -> np.ndarray:
        """Density matrix of a product basis state."""
        rho = np.zeros((self.total, self.total), dtype=complex)
        i = self.index(levels)
        rho[i, i] = 1.0
        return rho

    def identity(self) -> np.ndarray:
        return np.eye(self.total, dtype=complex)


def identity(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex)


def annihilation(d: int) -> np.ndarray:
    """Truncated bosonic lowering operator on ``d`` Fock levels."""
    if d < 2:
        raise ValueError(f"Fock cutoff must be >= 2, got {d}")
    return np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)


def number(d: int) -> np.ndarray:
    return np.diag(np.arange(d)).astype(complex)


def transition(ket: int, bra: int, d: int) -> np.ndarray:
    """Single-entry matrix |ket><bra| on a ``d``-level system."""
    if not (0 <= ket < d and 0 <= bra < d):
        raise IndexError(f"transition |{ket}><{bra}| out of range for dimension {d}")
    m = np.zeros((d, d), dtype=complex)
    m[ket, bra] = 1.0
    return m


def embed(local_op: np.ndarray, site: int, space: Space) -> np.ndarray:
    """Tensor ``local_op`` into ``space`` at leg ``site`` with identities elsewhere."""
    if not 0 <= site < len(space):
        raise IndexError(f"site {site} out of range for {len(space)} subsystems")
    local_op = np.asarray(local_op, dtype=complex)
    d = space.dims[site]
    if local_op.shape != (d, d):
        raise ValueError(
            f"operator shape {local_op.shape} does not match dimension {d} of site {site}"
        )
    factors = [local_op if i == site else identity(dk) for i, dk in enumerate(space.dims)]
    return reduce(np.kron, factors)


def dag(op: np.ndarray) -> np.ndarray:
    return op.conj().T


def partial_trace(rho: np.ndarray, keep: Sequence[int], space: Space) -> np.ndarray:
    """Reduced state on the legs in ``keep`` (sorted, unique)."""
    keep = list(keep)
    if not keep:
        raise ValueError("keep must name at least one subsystem")
    if sorted(set(keep)) != keep:
        raise ValueError(f"keep must be sorted and unique, got {keep}")
    n = len(space)
    if keep[0] < 0 or keep[-1] >= n:
        raise IndexError(f"keep {keep} out of range for {n} subsystems")
    dims = space.dims
    t = np.asarray(rho).reshape(dims + dims)
    # trace out from the highest leg so remaining axis numbers stay valid
    for leg in reversed(range(n)):
        if leg in keep:
            continue
        m = t.ndim // 2
        t = np.trace(t, axis1=leg, axis2=leg + m)
    d = int(np.prod([dims[k] for k in keep]))
    return t.reshape(d, d)


def check_density_matrix(
    rho: np.ndarray, herm_tol: float = 1e-10, trace_tol: float = 1e-8, pos_tol: float = 1e-8
) -> None:
    """Raise ``ValueError`` if ``rho`` is not a valid density matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise ValueError(f"density matrix not Hermitian (deviation {herm:.2e})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace {tr!r} differs from 1")
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lam < -pos_tol:
        raise ValueError(f"density matrix has negative eigenvalue {lam:.2e}")
