"""End-to-end heralded W-state generation.

N single photons enter PBSs (``p_h`` = probability of the retained H arm),
one ancilla photon is split over the N sites, the V arms are erased on a
symmetric multiport, and success is declared when every output site holds one
photon and exactly one eraser detector ``u_k`` clicks.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fock import (
    DensityMatrix,
    ModeLabel,
    Pol,
    PureState,
    Stage,
    apply_transform,
    condition_on_pattern,
    make_product_input,
    reduce_to_qubits,
    to_qubit_ket,
)
from .network import ERASER_LABEL, MultiportSpec, full_circuit, input_modes
from .states import excitation_index, fidelity, w_state

SIMULATION_CAP = 8


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    p_h: float
    multiport: MultiportSpec | None = None
    feedforward: bool = False
    per_site_phases: tuple[complex, ...] | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        if not 0.0 < self.p_h < 1.0:
            raise ValueError(f"p_h must lie strictly between 0 and 1, got {self.p_h}")
        if self.multiport is None:
            object.__setattr__(self, "multiport", MultiportSpec(self.n))
        elif self.multiport.size != self.n:
            raise ValueError("multiport size must equal n")
        if self.per_site_phases is not None:
            phases = tuple(complex(p) for p in self.per_site_phases)
            if len(phases) != self.n:
                raise ValueError("need one phase per site")
            if any(abs(abs(p) - 1.0) > 1e-12 for p in phases):
                raise ValueError("per-site phases must have unit modulus")
            object.__setattr__(self, "per_site_phases", phases)

    def site_phases(self) -> tuple[complex, ...]:
        return self.per_site_phases or (1.0 + 0j,) * self.n

    def pbs_coefficients(self) -> tuple[list[complex], list[complex]]:
        alpha = math.sqrt(self.p_h)
        beta = math.sqrt(1.0 - self.p_h)
        return [complex(alpha)] * self.n, [beta * ph for ph in self.site_phases()]


@dataclass(frozen=True)
class FeedforwardSpec:
    """Phase applied to the V component of each qubit after herald ``k``."""

    k: int
    site_phases: tuple[complex, ...]

    def unitary(self) -> np.ndarray:
        """Diagonal N-qubit operator diag(1, c_1) x ... x diag(1, c_N)."""
        op = np.ones(1, dtype=complex)
        for c in self.site_phases:
            op = np.kron(op, np.array([1.0, c]))
        return np.diag(op)

    def apply(self, rho: DensityMatrix) -> DensityMatrix:
        u = self.unitary()
        return DensityMatrix(u @ rho.matrix @ u.conj().T, rho.sites, rho.weight)

    def apply_ket(self, ket: np.ndarray) -> np.ndarray:
        return np.diag(self.unitary()) * ket


@dataclass(frozen=True)
class OutcomeRecord:
    k: int
    probability: float
    conditional_state: DensityMatrix
    phases: tuple[float, ...]
    fidelity_raw: float
    fidelity_corrected: float
    correction: FeedforwardSpec = field(repr=False)
    accepted: bool = True


def feedforward_correction(
    k: int, spec: MultiportSpec, n: int, site_phases: Sequence[complex] | None = None
) -> FeedforwardSpec:
    """Local phases undoing the multiport (and optional input) phase of each branch."""
    if not 1 <= k <= n:
        raise ValueError(f"herald index k must be in 1..{n}, got {k}")
    if spec.size != n:
        raise ValueError("multiport size must equal n")
    gamma = spec.gamma()[:, k - 1]
    extra = site_phases if site_phases is not None else [1.0] * n
    corr = []
    for g, p in zip(gamma, extra):
        z = g * p
        corr.append(z.conjugate() / abs(z))
    return FeedforwardSpec(k, tuple(corr))


def simulate(config: ProtocolConfig) -> PureState:
    """Output state on the f and u modes before any detection."""
    state = make_product_input(input_modes(config.n))
    for stage in full_circuit(config):
        state = apply_transform(state, stage.transform)
    return state


def herald_pattern(n: int, k: int) -> dict:
    """One photon per f_i H/V pair, one photon in u_k, none in the other u modes."""
    pattern = site_pattern(n)
    for j in range(1, n + 1):
        pattern[ModeLabel(j, Stage.U, Pol.V)] = 1 if j == k else 0
    return pattern


def site_pattern(n: int) -> dict:
    """One photon per f_i H/V pair, eraser detectors unconstrained."""
    return {
        (ModeLabel(i, Stage.F, Pol.H), ModeLabel(i, Stage.F, Pol.V)): 1 for i in range(1, n + 1)
    }


def _condition(output: PureState, n: int, k: int) -> tuple[PureState, float]:
    if not 1 <= k <= n:
        raise ValueError(f"herald index k must be in 1..{n}, got {k}")
    return condition_on_pattern(output, herald_pattern(n, k))


def _postselect_sites(config: ProtocolConfig) -> tuple[PureState, float]:
    """Run the circuit, keeping only one-photon-per-site events.

    The f modes are final after the relays and the eraser acts on disjoint
    modes, so filtering just before the eraser gives the same amplitudes as
    filtering the full output.
    """
    state = make_product_input(input_modes(config.n))
    q = 1.0
    for stage in full_circuit(config):
        if stage.label == ERASER_LABEL:
            state, q = condition_on_pattern(state, site_pattern(config.n))
            if q == 0.0:
                return state, 0.0
        state = apply_transform(state, stage.transform)
    return state, q


def _heralded_outcomes(config: ProtocolConfig, ks) -> list[tuple[PureState, float]]:
    ks = list(ks)
    for k in ks:
        if not 1 <= k <= config.n:
            raise ValueError(f"herald index k must be in 1..{config.n}, got {k}")
    sited, q = _postselect_sites(config)
    if q == 0.0:
        return [(sited, 0.0) for _ in ks]
    return [(state, q * p) for state, p in (_condition(sited, config.n, k) for k in ks)]


def herald(config: ProtocolConfig, k: int) -> tuple[np.ndarray, float]:
    """Heralded N-qubit ket for detector ``u_k`` and its joint probability."""
    [(state, prob)] = _heralded_outcomes(config, [k])
    return to_qubit_ket(state, range(1, config.n + 1)), prob


def branch_phases(ket: np.ndarray, n: int) -> tuple[float, ...]:
    """arg of the amplitude carrying the excitation at each site."""
    return tuple(float(cmath.phase(ket[excitation_index(j, n)])) for j in range(1, n + 1))


def run_protocol(config: ProtocolConfig) -> list[OutcomeRecord]:
    """One record per herald outcome u_1..u_N.

    Without feedforward only k = 1 (the outcome whose phases already match
    the canonical W state for a DFT multiport) counts as success.
    """
    n = config.n
    target = w_state(n)
    sites = range(1, n + 1)
    records = []
    outcomes = _heralded_outcomes(config, range(1, n + 1))
    for k, (state, prob) in enumerate(outcomes, start=1):
        rho = reduce_to_qubits(state, sites)
        rho = DensityMatrix(rho.matrix, rho.sites, prob)
        ket = to_qubit_ket(state, sites)
        corr = feedforward_correction(k, config.multiport, n, config.per_site_phases)
        records.append(
            OutcomeRecord(
                k=k,
                probability=prob,
                conditional_state=rho,
                phases=branch_phases(ket, n),
                fidelity_raw=fidelity(rho, target),
                fidelity_corrected=fidelity(corr.apply(rho), target),
                correction=corr,
                accepted=config.feedforward or k == 1,
            )
        )
    return records


def total_probability(records: Sequence[OutcomeRecord]) -> float:
    return float(sum(r.probability for r in records if r.accepted))


def success_probability(config: ProtocolConfig, method: str = "auto") -> float:
    """Probability that the protocol delivers a W state.

    ``method`` is ``"simulate"``, ``"analytic"`` or ``"auto"`` (simulate up to
    :data:`SIMULATION_CAP` qubits).
    """
    if method == "auto":
        method = "simulate" if config.n <= SIMULATION_CAP else "analytic"
    if method == "analytic":
        per_outcome = (1 - config.p_h) * config.p_h ** (config.n - 1) / config.n
        return per_outcome * (config.n if config.feedforward else 1)
    if method != "simulate":
        raise ValueError(f"unknown method {method!r}")
    ks = range(1, config.n + 1) if config.feedforward else [1]
    return float(sum(p for _, p in _heralded_outcomes(config, ks)))
