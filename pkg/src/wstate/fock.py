"""Sparse bosonic Fock-space algebra.

States are stored as maps from occupation vectors to complex amplitudes over an
ordered set of :class:`ModeLabel` objects. Linear optical elements act by
substituting creation operators, so only the populated part of the Fock space
is ever touched.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

NORM_TOL = 1e-10


class Stage(enum.Enum):
    """Position of a mode in the optical network, in wiring order."""

    A = "a"
    B = "b"
    C = "c"
    D = "d"
    E = "e"
    F = "f"
    S = "s"
    T = "t"
    U = "u"


class Pol(enum.Enum):
    H = "H"
    V = "V"
    NONE = ""


_STAGE_ORDER = {s: i for i, s in enumerate(Stage)}
_POL_ORDER = {Pol.H: 0, Pol.V: 1, Pol.NONE: 2}


@total_ordering
@dataclass(frozen=True)
class ModeLabel:
    """A single bosonic mode: site index, network stage and polarization.

    Ordering follows site, then stage (a..u), then H before V.
    """

    site: int
    stage: Stage
    pol: Pol = Pol.NONE

    def __post_init__(self):
        if self.site < 0:
            raise ValueError(f"site must be non-negative, got {self.site}")
        if not isinstance(self.stage, Stage):
            object.__setattr__(self, "stage", Stage(self.stage))
        if not isinstance(self.pol, Pol):
            object.__setattr__(self, "pol", Pol(self.pol))

    def sort_key(self) -> tuple[int, int, int]:
        return (self.site, _STAGE_ORDER[self.stage], _POL_ORDER[self.pol])

    def __lt__(self, other: "ModeLabel") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return f"{self.stage.value}{self.site}{self.pol.value}"


def mode(stage: str, site: int, pol: str = "") -> ModeLabel:
    """Shorthand constructor, e.g. ``mode("f", 2, "V")``."""
    return ModeLabel(site, Stage(stage), Pol(pol))


Occupation = tuple[int, ...]


@dataclass(frozen=True)
class PureState:
    """Sparse (possibly sub-normalized) pure state over an ordered mode set.

    ``amplitudes`` maps occupation tuples, aligned with ``modes``, to complex
    amplitudes. Instances are treated as immutable.
    """

    modes: tuple[ModeLabel, ...]
    amplitudes: Mapping[Occupation, complex] = field(default_factory=dict)

    def __post_init__(self):
        modes = tuple(self.modes)
        if len(set(modes)) != len(modes):
            raise ValueError("duplicate modes in mode set")
        object.__setattr__(self, "modes", modes)
        width = len(modes)
        for occ in self.amplitudes:
            if len(occ) != width or any(n < 0 for n in occ):
                raise ValueError(f"invalid occupation vector {occ!r}")

    @classmethod
    def _trusted(cls, modes: tuple[ModeLabel, ...], amplitudes: dict) -> "PureState":
        # internal constructor: inputs are already consistent
        obj = object.__new__(cls)
        object.__setattr__(obj, "modes", modes)
        object.__setattr__(obj, "amplitudes", amplitudes)
        return obj

    @property
    def is_empty(self) -> bool:
        return not self.amplitudes

    def norm_squared(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def index(self, m: ModeLabel) -> int:
        try:
            return self.modes.index(m)
        except ValueError:
            raise KeyError(f"mode {m} not in state") from None

    def amplitude(self, occupations: Mapping[ModeLabel, int]) -> complex:
        """Amplitude of the basis state with the given (sparse) occupations."""
        occ = [0] * len(self.modes)
        for m, n in occupations.items():
            occ[self.index(m)] = n
        return complex(self.amplitudes.get(tuple(occ), 0.0))

    def photon_numbers(self) -> set[int]:
        return {sum(occ) for occ in self.amplitudes}

    def prune(self, eps: float = 0.0) -> "PureState":
        """Drop amplitudes with modulus <= eps (exact zeros only by default)."""
        kept = {k: v for k, v in self.amplitudes.items() if abs(v) > eps}
        return PureState._trusted(self.modes, kept)

    def scaled(self, factor: complex) -> "PureState":
        return PureState(self.modes, {k: v * factor for k, v in self.amplitudes.items()})

    def __str__(self) -> str:
        terms = []
        for occ, amp in sorted(self.amplitudes.items()):
            label = ",".join(
                f"{m}:{n}" if n > 1 else str(m) for m, n in zip(self.modes, occ) if n
            )
            terms.append(f"({amp:.6g})|{label}>")
        return " + ".join(terms) or "0"


def make_product_input(input_modes: Iterable[ModeLabel]) -> PureState:
    """One photon in each listed mode, amplitude 1."""
    modes = list(input_modes)
    if not modes:
        raise ValueError("at least one photon is required")
    if len(set(modes)) != len(modes):
        raise ValueError("each input mode may hold only one photon")
    modes.sort()
    return PureState(tuple(modes), {(1,) * len(modes): 1.0 + 0j})


def _expand_monomial(
    input_occ: Occupation, columns: Sequence[Sequence[tuple[int, complex]]], n_out: int
) -> dict[Occupation, complex]:
    """Expand prod_i (sum_j M[j, i] b_j^dag)^{n_i} into output monomials.

    Returns exponents of the output creation operators mapped to the
    polynomial coefficient (not yet Fock-normalized).
    """
    poly: dict[Occupation, complex] = {(0,) * n_out: 1.0 + 0j}
    for i, n in enumerate(input_occ):
        for _ in range(n):
            nxt: dict[Occupation, complex] = {}
            for mono, c in poly.items():
                for j, coef in columns[i]:
                    key = mono[:j] + (mono[j] + 1,) + mono[j + 1 :]
                    nxt[key] = nxt.get(key, 0j) + c * coef
            poly = nxt
    return poly


def _sqrt_factorials(occ: Iterable[int]) -> float:
    out = 1.0
    for n in occ:
        if n > 1:
            out *= math.sqrt(math.factorial(n))
    return out


def apply_transform(state: PureState, transform) -> PureState:
    """Substitute every input creation operator of ``transform`` by its image.

    ``transform`` is a :class:`wstate.network.LinearTransform` (or anything
    with ``input_modes``, ``output_modes`` and an outputs x inputs ``matrix``).
    Output modes replace consumed input modes in the resulting mode set.
    """
    transform.check_isometry()
    in_modes = tuple(transform.input_modes)
    out_modes = tuple(transform.output_modes)
    for m in in_modes:
        if m not in state.modes:
            raise KeyError(f"transform input mode {m} not in state")

    in_idx = [state.modes.index(m) for m in in_modes]
    in_set = set(in_modes)
    rest = [i for i, m in enumerate(state.modes) if m not in in_set]
    clash = {state.modes[i] for i in rest} & set(out_modes)
    if clash:
        # merging into a mode the map does not act on is not a unitary operation
        raise ValueError(f"output modes {sorted(map(str, clash))} are already in use")
    new_modes = tuple(sorted(set(state.modes[i] for i in rest) | set(out_modes)))
    pos = {m: i for i, m in enumerate(new_modes)}
    rest_pos = [pos[state.modes[i]] for i in rest]
    out_pos = [pos[m] for m in out_modes]

    mat = np.asarray(transform.matrix, dtype=complex)
    columns = [
        [(j, complex(mat[j, i])) for j in range(mat.shape[0]) if mat[j, i] != 0]
        for i in range(mat.shape[1])
    ]

    cache: dict[Occupation, dict[Occupation, complex]] = {}
    result: dict[Occupation, complex] = {}
    width = len(new_modes)
    for occ, amp in state.amplitudes.items():
        sub = tuple(occ[i] for i in in_idx)
        if sub not in cache:
            cache[sub] = _expand_monomial(sub, columns, len(out_modes))
        # |n> = prod (a^dag)^n / sqrt(n!) |0>
        base_amp = amp / _sqrt_factorials(sub)
        base = [0] * width
        for i, p in zip(rest, rest_pos):
            base[p] = occ[i]
        for mono, coef in cache[sub].items():
            new = list(base)
            norm = 1.0
            for j, n in enumerate(mono):
                if n:
                    new[out_pos[j]] = n
                    if n > 1:
                        norm *= math.sqrt(math.factorial(n))
            key = tuple(new)
            result[key] = result.get(key, 0j) + base_amp * coef * norm
    return PureState._trusted(new_modes, {k: v for k, v in result.items() if v != 0})


def inner_product(x: PureState, y: PureState) -> complex:
    """<x|y>, conjugate-linear in ``x``."""
    if x.modes != y.modes:
        raise ValueError("inner product requires identical mode sets")
    small, large = (x, y) if len(x.amplitudes) <= len(y.amplitudes) else (y, x)
    total = 0j
    for occ, a in small.amplitudes.items():
        b = large.amplitudes.get(occ)
        if b is not None:
            total += (a.conjugate() * b) if small is x else (b.conjugate() * a)
    return total


PatternKey = Union[ModeLabel, tuple[ModeLabel, ...]]


def condition_on_pattern(
    state: PureState, pattern: Mapping[PatternKey, int | None]
) -> tuple[PureState, float]:
    """Project onto basis states matching ``pattern`` and renormalize.

    Keys are single modes or tuples of modes (constraining their total
    occupation); a value of ``None`` leaves the key unconstrained. Returns the
    renormalized projection and the projection probability. An empty
    projection gives an empty state and probability 0.
    """
    constraints = []
    for key, want in pattern.items():
        if want is None:
            continue
        group = (key,) if isinstance(key, ModeLabel) else tuple(key)
        constraints.append(([state.index(m) for m in group], want))

    kept = {}
    for occ, amp in state.amplitudes.items():
        for idx, want in constraints:
            if sum(occ[i] for i in idx) != want:
                break
        else:
            kept[occ] = amp
    prob = float(sum(abs(a) ** 2 for a in kept.values()))
    if prob == 0.0:
        return PureState(state.modes, {}), 0.0
    scale = 1.0 / math.sqrt(prob)
    return PureState._trusted(state.modes, {k: v * scale for k, v in kept.items()}), prob


@dataclass(frozen=True)
class DensityMatrix:
    """Qubit-register density matrix.

    ``sites`` labels the qubits (big-endian: the first site is the most
    significant bit). ``weight`` is the trace the state had before it was
    renormalized, 1 for states built directly.
    """

    matrix: np.ndarray
    sites: tuple[int, ...]
    weight: float = 1.0

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        dim = 2 ** len(self.sites)
        if mat.shape != (dim, dim):
            raise ValueError(f"expected a {dim}x{dim} matrix for {len(self.sites)} qubits")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "sites", tuple(self.sites))

    @classmethod
    def from_ket(cls, ket: np.ndarray, sites: Sequence[int] | None = None) -> "DensityMatrix":
        ket = np.asarray(ket, dtype=complex)
        n = int(round(math.log2(ket.size)))
        if sites is None:
            sites = tuple(range(1, n + 1))
        return cls(np.outer(ket, ket.conj()), tuple(sites))

    @property
    def n_qubits(self) -> int:
        return len(self.sites)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def is_hermitian(self, tol: float = NORM_TOL) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=tol, rtol=0))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def is_pure(self, tol: float = NORM_TOL) -> bool:
        return abs(self.eigenvalues()[-1] - self.trace()) <= tol


def reduce_to_qubits(state: PureState, sites: Sequence[int]) -> DensityMatrix:
    """Read sites as polarization qubits (f_H -> 0, f_V -> 1), trace out the rest.

    The returned matrix is renormalized; the squared norm of ``state`` is kept
    in ``DensityMatrix.weight``.
    """
    sites = tuple(sites)
    pairs = [
        (state.index(ModeLabel(s, Stage.F, Pol.H)), state.index(ModeLabel(s, Stage.F, Pol.V)))
        for s in sites
    ]
    qubit_idx = {i for pair in pairs for i in pair}
    env_idx = [i for i in range(len(state.modes)) if i not in qubit_idx]
    n = len(sites)

    branches: dict[Occupation, np.ndarray] = {}
    for occ, amp in state.amplitudes.items():
        index = 0
        for h, v in pairs:
            if occ[h] + occ[v] != 1:
                raise ValueError(f"site pair {state.modes[h]}/{state.modes[v]} is not singly occupied")
            index = (index << 1) | occ[v]
        env = tuple(occ[i] for i in env_idx)
        vec = branches.setdefault(env, np.zeros(2**n, dtype=complex))
        vec[index] += amp

    rho = np.zeros((2**n, 2**n), dtype=complex)
    for vec in branches.values():
        rho += np.outer(vec, vec.conj())
    weight = float(np.trace(rho).real)
    if weight > 0:
        rho /= weight
    return DensityMatrix(rho, sites, weight)


def to_qubit_ket(state: PureState, sites: Sequence[int]) -> np.ndarray:
    """Qubit ket of a state whose non-qubit modes sit in a single configuration."""
    pairs = [
        (state.index(ModeLabel(s, Stage.F, Pol.H)), state.index(ModeLabel(s, Stage.F, Pol.V)))
        for s in sites
    ]
    qubit_idx = {i for pair in pairs for i in pair}
    env_idx = [i for i in range(len(state.modes)) if i not in qubit_idx]
    ket = np.zeros(2 ** len(sites), dtype=complex)
    env = None
    for occ, amp in state.amplitudes.items():
        this_env = tuple(occ[i] for i in env_idx)
        if env is None:
            env = this_env
        elif this_env != env:
            raise ValueError("qubit register is entangled with the remaining modes")
        index = 0
        for h, v in pairs:
            if occ[h] + occ[v] != 1:
                raise ValueError(f"site pair {state.modes[h]}/{state.modes[v]} is not singly occupied")
            index = (index << 1) | occ[v]
        ket[index] += amp
    return ket


def partial_trace(rho: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    """Trace out every site of ``rho`` not listed in ``keep``."""
    keep = [s for s in rho.sites if s in set(keep)]
    if not keep:
        raise ValueError("keep must name at least one site of the register")
    missing = set(keep) - set(rho.sites)
    if missing:
        raise ValueError(f"unknown sites {sorted(missing)}")
    n = rho.n_qubits
    tensor = rho.matrix.reshape((2,) * (2 * n))
    kept_axes = [rho.sites.index(s) for s in keep]
    traced = [i for i in range(n) if i not in kept_axes]
    # einsum subscripts: row axes 0..n-1, column axes n..2n-1; traced columns reuse row letters
    letters = [chr(ord("a") + i) for i in range(2 * n)]
    cols = list(letters[n:])
    for i in traced:
        cols[i] = letters[i]
    out = [letters[i] for i in kept_axes] + [cols[i] for i in kept_axes]
    expr = "".join(letters[:n]) + "".join(cols) + "->" + "".join(out)
    dim = 2 ** len(keep)
    reduced = np.einsum(expr, tensor).reshape(dim, dim)
    return DensityMatrix(reduced, tuple(keep), rho.weight)
