"""Qubit-register reference states and overlap fidelity.

Registers are dense kets of length 2**N with site 1 as the most significant
bit, matching :class:`wstate.fock.DensityMatrix`.
"""

from __future__ import annotations

import math

import numpy as np

from .fock import DensityMatrix


def excitation_index(site: int, n: int) -> int:
    """Basis index of the state with a single |1> at ``site`` (1-based)."""
    return 1 << (n - site)


def w_state(n: int) -> np.ndarray:
    """(|0..01> + |0..10> + ... + |10..0>) / sqrt(N)."""
    if n < 1:
        raise ValueError("W state needs at least one qubit")
    ket = np.zeros(2**n, dtype=complex)
    for site in range(1, n + 1):
        ket[excitation_index(site, n)] = 1 / math.sqrt(n)
    return ket


def ghz_state(n: int) -> np.ndarray:
    """(|0..0> + |1..1>) / sqrt(2)."""
    if n < 1:
        raise ValueError("GHZ state needs at least one qubit")
    ket = np.zeros(2**n, dtype=complex)
    ket[0] = ket[-1] = 1 / math.sqrt(2)
    return ket


def ghz_marginal(m: int) -> DensityMatrix:
    """(|0><0|^M + |1><1|^M) / 2, what is left of a GHZ state after losses."""
    rho = np.zeros((2**m, 2**m), dtype=complex)
    rho[0, 0] = rho[-1, -1] = 0.5
    return DensityMatrix(rho, tuple(range(1, m + 1)))


def fidelity(rho: DensityMatrix | np.ndarray, target: np.ndarray) -> float:
    """<t|rho|t> / tr(rho) for a pure target."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    target = np.asarray(target, dtype=complex)
    if mat.shape != (target.size, target.size):
        raise ValueError(f"register mismatch: rho is {mat.shape}, target has {target.size} amplitudes")
    tr = np.trace(mat).real
    if tr <= 0:
        raise ValueError("density matrix has zero trace")
    value = float(np.real(target.conj() @ mat @ target) / tr)
    return min(max(value, 0.0), 1.0)
