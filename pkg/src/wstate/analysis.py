"""Closed-form success probabilities, p_h optimisation and protocol comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .fock import DensityMatrix, partial_trace
from .protocol import ProtocolConfig, success_probability
from .states import fidelity, ghz_marginal, w_state

NUMERIC_SIM_CAP = 6

CURVE_NAMES = ("multiport_lim05", "quantum_fusion", "fusion_xphase", "ours_no_ff", "ours_ff")


def analytic_joint(n: int, p_h: float) -> float:
    """Probability of one specific heralded success: (1 - p_h) p_h^(N-1) / N."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0.0 <= p_h <= 1.0:
        raise ValueError("p_h must lie in [0, 1]")
    return (1.0 - p_h) * p_h ** (n - 1) / n


def analytic_optimum(n: int, feedforward: bool = False) -> tuple[float, float]:
    """(p_h*, P*) with p_h* = (N-1)/N."""
    if n < 2:
        raise ValueError("n must be >= 2")
    p_star = (n - 1) ** (n - 1) / n ** (n + 1)
    return (n - 1) / n, p_star * n if feedforward else p_star


@dataclass
class SweepResult:
    n: int
    samples: list[tuple[float, float]]
    argmax_ph: float
    max_probability: float
    grid_argmax: float = math.nan
    source: str = "analytic"


def _objective(n: int, feedforward: bool, method: str) -> Callable[[float], float]:
    if method == "auto":
        method = "simulate" if n <= NUMERIC_SIM_CAP else "analytic"
    if method == "analytic":
        scale = n if feedforward else 1
        return lambda p: scale * analytic_joint(n, p)
    return lambda p: success_probability(ProtocolConfig(n, p, feedforward=feedforward), "simulate")


def sweep(
    n: int, ph_values: Sequence[float], feedforward: bool = False, method: str = "auto"
) -> list[tuple[float, float]]:
    f = _objective(n, feedforward, method)
    return [(float(p), f(float(p))) for p in ph_values]


def _log_slope(f: Callable[[float], float], x: float, h: float) -> float:
    # fourth-order central difference of log f
    g = lambda t: math.log(f(t))  # noqa: E731
    return (g(x - 2 * h) - 8 * g(x - h) + 8 * g(x + h) - g(x + 2 * h)) / (12 * h)


def numeric_optimum(
    n: int, step: float = 1e-3, feedforward: bool = False, method: str = "auto"
) -> SweepResult:
    """Grid search over p_h, golden-section refinement, then a slope-root polish.

    Values near a maximum stop resolving the argmax at ~1e-8, so the last step
    solves d/dp log P = 0 from finite differences taken on a wider stencil.
    """
    f = _objective(n, feedforward, method)
    source = "simulation" if (method == "simulate" or (method == "auto" and n <= NUMERIC_SIM_CAP)) else "analytic"
    grid = np.arange(step, 1.0 - step / 2, step)
    samples = [(float(p), f(float(p))) for p in grid]
    i = max(range(len(samples)), key=lambda j: samples[j][1])
    lo = samples[max(i - 1, 0)][0]
    hi = samples[min(i + 1, len(samples) - 1)][0]

    res = optimize.minimize_scalar(
        lambda p: -f(p), bracket=(lo, samples[i][0], hi), method="golden", tol=1e-10
    )
    x = float(res.x)
    h = min(1e-4, x / 50, (1 - x) / 50)
    a, b = max(x - step, h * 2.5), min(x + step, 1 - h * 2.5)
    sa, sb = _log_slope(f, a, h), _log_slope(f, b, h)
    if sa > 0 > sb:
        x = optimize.brentq(lambda p: _log_slope(f, p, h), a, b, xtol=1e-14, rtol=1e-14)
    return SweepResult(
        n=n,
        samples=samples,
        argmax_ph=x,
        max_probability=f(x),
        grid_argmax=samples[i][0],
        source=source,
    )


def competitor_probability(name: str, n: int) -> float:
    """Success probability of the comparison protocols (and ours) at N qubits."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if name == "multiport_lim05":
        return math.exp(1.35 - 1.27 * n)
    if name == "quantum_fusion":
        return n / 5 ** (n - 1)
    if name == "fusion_xphase":
        return (n + 1) / 2**n
    if name == "ours_no_ff":
        return analytic_optimum(n, feedforward=False)[1]
    if name == "ours_ff":
        return analytic_optimum(n, feedforward=True)[1]
    raise ValueError(f"unknown protocol {name!r}; expected one of {CURVE_NAMES}")


@dataclass
class ProtocolCurve:
    name: str
    points: list[tuple[int, float]] = field(default_factory=list)

    def at(self, n: int) -> float:
        return dict(self.points)[n]


def scaling_curves(n_max: int) -> list[ProtocolCurve]:
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    ns = range(2, n_max + 1)
    return [ProtocolCurve(name, [(n, competitor_probability(name, n)) for n in ns]) for name in CURVE_NAMES]


@dataclass
class LossReport:
    remaining: tuple[int, ...]
    all_zeros_weight: float
    one_excitation_weight: float
    w_block_fidelity: float
    w_overlap: float
    ghz_mixture_distance: float


def loss_analysis(state: np.ndarray, drop: Sequence[int]) -> tuple[DensityMatrix, LossReport]:
    """Trace out the ``drop`` sites (1-based) of an N-qubit ket.

    The report splits the reduced state into its all-zeros weight and its
    single-excitation block, and measures how close that block is to |W_M>.
    ``w_block_fidelity`` is 0 when the block is empty.
    """
    state = np.asarray(state, dtype=complex)
    n = int(round(math.log2(state.size)))
    drop = sorted(set(drop))
    if any(not 1 <= s <= n for s in drop):
        raise ValueError(f"sites to drop must lie in 1..{n}")
    if len(drop) >= n:
        raise ValueError("cannot drop every site")
    rho = DensityMatrix.from_ket(state)
    keep = [s for s in rho.sites if s not in drop]
    reduced = partial_trace(rho, keep) if drop else rho
    m = len(keep)
    diag = np.real(np.diag(reduced.matrix))
    single = [1 << (m - 1 - i) for i in range(m)]
    zeros_w = float(diag[0])
    block_w = float(sum(diag[j] for j in single))
    target = w_state(m)
    block = reduced.matrix[np.ix_(single, single)]
    block_fid = float(np.real(target[single].conj() @ block @ target[single]) / block_w) if block_w > 1e-15 else 0.0
    report = LossReport(
        remaining=tuple(keep),
        all_zeros_weight=zeros_w,
        one_excitation_weight=block_w,
        w_block_fidelity=block_fid,
        w_overlap=fidelity(reduced, target),
        ghz_mixture_distance=float(np.max(np.abs(reduced.matrix - ghz_marginal(m).matrix))),
    )
    return reduced, report
