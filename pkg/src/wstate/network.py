"""Linear optical elements of the W-state network and their composition."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fock import ModeLabel, Pol, Stage

ISOMETRY_TOL = 1e-10
ANCILLA_SITE = 0
ERASER_LABEL = "eraser multiport"


@dataclass(frozen=True)
class LinearTransform:
    """Linear map on creation operators.

    ``matrix[j, i]`` is the amplitude for ``input_modes[i]`` to end up in
    ``output_modes[j]``; columns must be orthonormal.
    """

    input_modes: tuple[ModeLabel, ...]
    output_modes: tuple[ModeLabel, ...]
    matrix: np.ndarray

    def __post_init__(self):
        ins, outs = tuple(self.input_modes), tuple(self.output_modes)
        mat = np.array(self.matrix, dtype=complex)
        mat.setflags(write=False)
        if len(set(ins)) != len(ins) or len(set(outs)) != len(outs):
            raise ValueError("mode lists must be duplicate-free")
        if mat.shape != (len(outs), len(ins)):
            raise ValueError(f"matrix shape {mat.shape} does not match {len(outs)}x{len(ins)} modes")
        object.__setattr__(self, "input_modes", ins)
        object.__setattr__(self, "output_modes", outs)
        object.__setattr__(self, "matrix", mat)

    def isometry_error(self) -> float:
        gram = self.matrix.conj().T @ self.matrix
        return float(np.max(np.abs(gram - np.eye(gram.shape[0])), initial=0.0))

    def is_isometry(self, tol: float = ISOMETRY_TOL) -> bool:
        return self.isometry_error() <= tol

    def check_isometry(self, tol: float = ISOMETRY_TOL) -> None:
        err = self.isometry_error()
        if err > tol:
            raise ValueError(f"transform is not an isometry (max |U^dag U - I| = {err:.3g})")

    def coefficient(self, src: ModeLabel, dst: ModeLabel) -> complex:
        return complex(self.matrix[self.output_modes.index(dst), self.input_modes.index(src)])


@dataclass(frozen=True)
class MultiportSpec:
    """Symmetric N x N multiport.

    ``convention="dft"`` gives gamma_jk = omega^{(j-1)(k-1)} / sqrt(N). A
    ``"custom"`` multiport carries its own matrix (rows: inputs s_j, columns:
    outputs u_k); it must still be unitary.
    """

    size: int
    convention: str = "dft"
    custom: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("multiport size must be >= 1")
        if self.convention not in ("dft", "custom"):
            raise ValueError(f"unknown multiport convention {self.convention!r}")
        if self.convention == "custom":
            if self.custom is None or np.shape(self.custom) != (self.size, self.size):
                raise ValueError("custom multiport needs a size x size matrix")

    def gamma(self) -> np.ndarray:
        """gamma[j, k]: amplitude for input s_{j+1} to reach output u_{k+1}."""
        if self.convention == "custom":
            return np.array(self.custom, dtype=complex)
        n = self.size
        jk = np.outer(np.arange(n), np.arange(n)) % n
        return np.exp(2j * np.pi * jk / n) / math.sqrt(n)


@dataclass(frozen=True)
class CircuitStage:
    label: str
    transform: LinearTransform


def _identity_map(inputs: Sequence[ModeLabel], outputs: Sequence[ModeLabel]) -> LinearTransform:
    return LinearTransform(tuple(inputs), tuple(outputs), np.eye(len(inputs)))


def pbs_input(site: int, alpha: complex, beta: complex) -> LinearTransform:
    """a_i -> alpha b_iH + beta c_iV."""
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1.0) > 1e-12:
        raise ValueError("PBS coefficients must satisfy |alpha|^2 + |beta|^2 = 1")
    return LinearTransform(
        (ModeLabel(site, Stage.A),),
        (ModeLabel(site, Stage.B, Pol.H), ModeLabel(site, Stage.C, Pol.V)),
        np.array([[alpha], [beta]]),
    )


def input_layer(alphas: Sequence[complex], betas: Sequence[complex]) -> LinearTransform:
    """Block-diagonal PBS layer over sites 1..N."""
    n = len(alphas)
    blocks = [pbs_input(i + 1, a, b) for i, (a, b) in enumerate(zip(alphas, betas))]
    mat = np.zeros((2 * n, n), dtype=complex)
    for i, blk in enumerate(blocks):
        mat[2 * i : 2 * i + 2, i] = blk.matrix[:, 0]
    ins = tuple(m for blk in blocks for m in blk.input_modes)
    outs = tuple(m for blk in blocks for m in blk.output_modes)
    return LinearTransform(ins, outs, mat)


def ancilla_splitter(n: int) -> LinearTransform:
    """t -> (t_1 + ... + t_N) / sqrt(N) with zero relative phases."""
    if n < 1:
        raise ValueError("splitter size must be >= 1")
    return LinearTransform(
        (ModeLabel(ANCILLA_SITE, Stage.T, Pol.V),),
        tuple(ModeLabel(i, Stage.T, Pol.V) for i in range(1, n + 1)),
        np.full((n, 1), 1 / math.sqrt(n)),
    )


def eraser_multiport(spec: MultiportSpec) -> LinearTransform:
    """s_j -> sum_k gamma_jk u_k."""
    n = spec.size
    gamma = spec.gamma()
    tr = LinearTransform(
        tuple(ModeLabel(j, Stage.S, Pol.V) for j in range(1, n + 1)),
        tuple(ModeLabel(k, Stage.U, Pol.V) for k in range(1, n + 1)),
        gamma.T,
    )
    err = np.max(np.abs(gamma @ gamma.conj().T - np.eye(n)))
    if err > ISOMETRY_TOL or not tr.is_isometry():
        raise ValueError("eraser multiport is not unitary")
    return tr


def passive_relays(n: int) -> list[LinearTransform]:
    """Phase-free relabelings b->d->f (H), t->e->f (V) and c->s."""
    if n < 1:
        raise ValueError("relay count must be >= 1")
    sites = range(1, n + 1)

    def layer(src: Stage, src_pol: Pol, dst: Stage, dst_pol: Pol) -> LinearTransform:
        return _identity_map(
            [ModeLabel(i, src, src_pol) for i in sites],
            [ModeLabel(i, dst, dst_pol) for i in sites],
        )

    return [
        layer(Stage.B, Pol.H, Stage.D, Pol.H),
        layer(Stage.D, Pol.H, Stage.F, Pol.H),
        layer(Stage.T, Pol.V, Stage.E, Pol.V),
        layer(Stage.E, Pol.V, Stage.F, Pol.V),
        layer(Stage.C, Pol.V, Stage.S, Pol.V),
    ]


_RELAY_LABELS = ("relay b->d", "relay d->f(H)", "relay t->e", "relay e->f(V)", "relay c->s")


def input_modes(n: int) -> list[ModeLabel]:
    """Modes holding the N+1 input photons: a_1..a_N and the ancilla t."""
    return [ModeLabel(i, Stage.A) for i in range(1, n + 1)] + [
        ModeLabel(ANCILLA_SITE, Stage.T, Pol.V)
    ]


def full_circuit(config) -> list[CircuitStage]:
    """Ordered stages of the network for a :class:`wstate.protocol.ProtocolConfig`."""
    n = config.n
    alphas, betas = config.pbs_coefficients()
    stages = [
        CircuitStage("input PBS layer", input_layer(alphas, betas)),
        CircuitStage("ancilla splitter", ancilla_splitter(n)),
    ]
    stages += [CircuitStage(lbl, t) for lbl, t in zip(_RELAY_LABELS, passive_relays(n))]
    stages.append(CircuitStage(ERASER_LABEL, eraser_multiport(config.multiport)))
    return stages


def compose(
    transforms: Sequence[LinearTransform], inputs: Sequence[ModeLabel] | None = None
) -> LinearTransform:
    """Collapse a sequence of transforms into one map from ``inputs``.

    Modes untouched by a stage are carried through unchanged. ``inputs``
    defaults to the first transform's inputs.
    """
    if not transforms:
        raise ValueError("nothing to compose")
    if inputs is None:
        inputs = transforms[0].input_modes
    inputs = tuple(inputs)
    live = list(inputs)
    mat = np.eye(len(live), dtype=complex)
    for tr in transforms:
        row = {m: i for i, m in enumerate(live)}
        missing = [m for m in tr.input_modes if m not in row]
        if missing:
            raise ValueError(f"stage inputs {[str(m) for m in missing]} are not live")
        consumed = set(tr.input_modes)
        carried = [m for m in live if m not in consumed]
        clash = set(carried) & set(tr.output_modes)
        if clash:
            raise ValueError(f"stage outputs {[str(m) for m in clash]} are already live")
        new_live = sorted(carried + list(tr.output_modes))
        new_mat = np.zeros((len(new_live), mat.shape[1]), dtype=complex)
        pos = {m: i for i, m in enumerate(new_live)}
        for m in carried:
            new_mat[pos[m]] = mat[row[m]]
        sub = mat[[row[m] for m in tr.input_modes]]
        images = tr.matrix @ sub
        for j, m in enumerate(tr.output_modes):
            new_mat[pos[m]] = images[j]
        live, mat = new_live, new_mat
    return LinearTransform(inputs, tuple(live), mat)


def circuit_transform(stages: Sequence[CircuitStage], n: int) -> LinearTransform:
    """Single map from the N+1 input modes to the detected output modes."""
    return compose([s.transform for s in stages], input_modes(n))

