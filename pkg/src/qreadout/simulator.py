"""Dense mixed-radix statevector simulation of the read-out circuits.

Registers are addressed by name and need not have power-of-two dimension, so
an ``m``-row index register is simulated as a single axis of size ``m``.
Every operation returns a new :class:`StateVector`; the input is left intact.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateBasisError, ParameterError, PostSelectionError
from .matrix import PD_TOL, GramBasis, QramTree, qram_norm_state, sigma_min

POSTSELECT_FLOOR = 1e-14
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])


class StateVector:
    def __init__(self, tensor, registers):
        tensor = np.asarray(tensor, dtype=complex)
        registers = tuple(registers)
        if tensor.ndim != len(registers):
            raise ParameterError(f"{tensor.ndim}-axis tensor for {len(registers)} registers")
        self.tensor = tensor
        self.registers = registers
        self._norm_sq = None

    @classmethod
    def zero(cls, **dims) -> "StateVector":
        t = np.zeros(tuple(dims.values()), dtype=complex)
        t[(0,) * len(dims)] = 1.0
        return cls(t, dims.keys())

    @classmethod
    def from_vector(cls, vec, name: str) -> "StateVector":
        return cls(np.asarray(vec, dtype=complex), (name,))

    @property
    def register_dims(self) -> list:
        return list(self.tensor.shape)

    @property
    def amplitudes(self) -> np.ndarray:
        return self.tensor.reshape(-1)

    @property
    def norm_sq(self) -> float:
        if self._norm_sq is None:
            self._norm_sq = float(np.vdot(self.tensor, self.tensor).real)
        return self._norm_sq

    def axis(self, name: str) -> int:
        try:
            return self.registers.index(name)
        except ValueError:
            raise ParameterError(f"no register named {name!r} in {self.registers}") from None

    def dim(self, name: str) -> int:
        return self.tensor.shape[self.axis(name)]

    def tensor_product(self, other: "StateVector") -> "StateVector":
        clash = set(self.registers) & set(other.registers)
        if clash:
            raise ParameterError(f"duplicate registers {sorted(clash)}")
        return StateVector(np.multiply.outer(self.tensor, other.tensor), self.registers + other.registers)

    def reorder(self, registers) -> "StateVector":
        perm = [self.axis(r) for r in registers]
        return StateVector(np.transpose(self.tensor, perm), registers)

    def vector(self, name: str | None = None) -> np.ndarray:
        """Flat amplitudes; with a single register, just that register's vector."""
        if name is not None and self.registers != (name,):
            raise ParameterError(f"state has registers {self.registers}, not only {name!r}")
        return self.amplitudes

    def to_json(self) -> str:
        amps = self.amplitudes
        pairs = np.column_stack([amps.real, amps.imag]).reshape(-1)
        return json.dumps(
            {"registers": list(self.registers), "register_dims": self.register_dims,
             "amplitudes": [float(x) for x in pairs]}
        )


@dataclass
class ShotLedger:
    ua_queries: int = 0
    va_queries: int = 0
    reflection_applications: int = 0
    copies_of_v: int = 0
    expected_repetitions: float = 0.0

    def charge(self, ua=0, va=0, reflections=0, copies=0, repetitions=0.0) -> None:
        if min(ua, va, reflections, copies, repetitions) < 0:
            raise ParameterError("ledger charges must be non-negative")
        self.ua_queries += int(ua)
        self.va_queries += int(va)
        self.reflection_applications += int(reflections)
        self.copies_of_v += int(copies)
        self.expected_repetitions += float(repetitions)

    def merge(self, other: "ShotLedger") -> None:
        self.charge(other.ua_queries, other.va_queries, other.reflection_applications,
                    other.copies_of_v, other.expected_repetitions)

    def as_dict(self) -> dict:
        return {
            "ua_queries": self.ua_queries,
            "va_queries": self.va_queries,
            "reflection_applications": self.reflection_applications,
            "copies_of_v": self.copies_of_v,
            "expected_repetitions": self.expected_repetitions,
        }


class Prepared(NamedTuple):
    state: StateVector
    probability: float


def apply_unitary(state: StateVector, u: np.ndarray, register: str) -> StateVector:
    ax = state.axis(register)
    out = np.tensordot(u, state.tensor, axes=([1], [ax]))
    return StateVector(np.moveaxis(out, 0, ax), state.registers)


def apply_controlled(state: StateVector, u: np.ndarray, target: str, control: str,
                     value: int) -> StateVector:
    """Apply ``u`` to ``target`` on the branch where ``control == value``."""
    cax, tax = state.axis(control), state.axis(target)
    tensor = state.tensor.copy()
    idx = [slice(None)] * tensor.ndim
    idx[cax] = value
    block = tensor[tuple(idx)]
    bt = tax if tax < cax else tax - 1
    block = np.moveaxis(np.tensordot(u, block, axes=([1], [bt])), 0, bt)
    tensor[tuple(idx)] = block
    return StateVector(tensor, state.registers)


def apply_indexed(state: StateVector, unitaries: np.ndarray, target: str,
                  control: str) -> StateVector:
    """Apply ``unitaries[j]`` to ``target`` on every branch ``control == j``."""
    cax, tax = state.axis(control), state.axis(target)
    t = np.moveaxis(state.tensor, (cax, tax), (0, 1))
    out = np.einsum("jab,jb...->ja...", unitaries, t)
    return StateVector(np.moveaxis(out, (0, 1), (cax, tax)), state.registers)


def householder(target: np.ndarray) -> np.ndarray:
    """Real symmetric unitary swapping |0> and the unit vector ``target``."""
    target = np.asarray(target, dtype=float)
    u = -target.copy()
    u[0] += 1.0
    uu = float(u @ u)
    if uu < 1e-30:
        return np.eye(target.size)
    return np.eye(target.size) - 2.0 * np.outer(u, u) / uu


def apply_row_loader(state: StateVector, unit_rows: np.ndarray, row: str, col: str) -> StateVector:
    """U_A: on the branch row == j, rotate the column register's |0> onto A_j/|A_j|.

    Each branch uses the Householder reflection through e_0 - A_j/|A_j|, applied
    without materializing the m dense n x n matrices.
    """
    rax, cax = state.axis(row), state.axis(col)
    t = np.moveaxis(state.tensor, (rax, cax), (0, 1))
    u = -unit_rows.astype(float)
    u[:, 0] += 1.0
    uu = np.einsum("jn,jn->j", u, u)
    scale = np.where(uu < 1e-30, 0.0, 2.0 / np.where(uu < 1e-30, 1.0, uu))
    proj = np.einsum("jn,jn...->j...", u, t)
    shape = (u.shape[0], u.shape[1]) + (1,) * (t.ndim - 2)
    out = t - (u * scale[:, None]).reshape(shape) * proj[:, None]
    return StateVector(np.moveaxis(out, (0, 1), (rax, cax)), state.registers)


def marginal(state: StateVector, register: str) -> np.ndarray:
    ax = state.axis(register)
    probs = np.abs(state.tensor) ** 2
    other = tuple(i for i in range(probs.ndim) if i != ax)
    p = probs.sum(axis=other) if other else probs
    return p / state.norm_sq


def post_select(state: StateVector, register: str, outcome: int,
                discard: bool = False) -> tuple[StateVector, float]:
    ax = state.axis(register)
    dim = state.tensor.shape[ax]
    if not 0 <= outcome < dim:
        raise ParameterError(f"outcome {outcome} outside register {register!r} of size {dim}")
    prob = float(marginal(state, register)[outcome])
    if prob < POSTSELECT_FLOOR:
        raise PostSelectionError(f"P({register}={outcome}) = {prob:.3g} is below {POSTSELECT_FLOOR}")
    idx = [slice(None)] * state.tensor.ndim
    idx[ax] = outcome
    branch = state.tensor[tuple(idx)] / math.sqrt(prob * state.norm_sq)
    if discard:
        regs = state.registers[:ax] + state.registers[ax + 1:]
        return StateVector(branch, regs), prob
    tensor = np.zeros_like(state.tensor)
    tensor[tuple(idx)] = branch
    return StateVector(tensor, state.registers), prob


def sample_register(state: StateVector, register: str, rng) -> tuple[int, StateVector]:
    p = marginal(state, register)
    outcome = int(rng.choice(p.size, p=p / p.sum()))
    collapsed, _ = post_select(state, register, outcome)
    return outcome, collapsed


def sample_counts(state: StateVector, register: str, rng, shots: int) -> np.ndarray:
    """Outcome histogram of ``shots`` independent measurements of ``register``."""
    p = marginal(state, register)
    return rng.multinomial(shots, p / p.sum())


def reflection_operator(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t)
    return np.eye(t.size, dtype=complex) - 2.0 * np.outer(t, t.conj())


def apply_controlled_reflection(state: StateVector, t, control_value: int = 0,
                                target: str = "col", control: str = "anc") -> StateVector:
    """C(R) with R = I - 2|t><t| acting on ``target`` when ``control == control_value``."""
    t = np.asarray(t, dtype=complex)
    if abs(np.linalg.norm(t) - 1.0) > 1e-10:
        raise ParameterError(f"reflection axis has norm {np.linalg.norm(t):.12g}, expected 1")
    cax, tax = state.axis(control), state.axis(target)
    tensor = state.tensor.copy()
    idx = [slice(None)] * tensor.ndim
    idx[cax] = control_value
    block = tensor[tuple(idx)]
    bt = tax if tax < cax else tax - 1
    overlap = np.tensordot(t.conj(), block, axes=([0], [bt]))
    shape = [1] * block.ndim
    shape[bt] = t.size
    tensor[tuple(idx)] = block - 2.0 * t.reshape(shape) * np.expand_dims(overlap, bt)
    return StateVector(tensor, state.registers)


def _exp_hermitian(g: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(g)
    return (v * np.exp(-1j * w)) @ v.conj().T


def noisy_reflection(t, eps: float, seed: int) -> np.ndarray:
    """exp(-i(pi|t><t| + E)) with a seeded Hermitian E tuned so that
    ||R_noisy - R|| lands in [0.9 eps, eps] (spectral norm)."""
    t = np.asarray(t, dtype=complex)
    exact = reflection_operator(t)
    if eps == 0:
        return exact
    if not 0 < eps <= 1.0:
        raise ParameterError(f"reflection error must lie in [0, 1], got {eps}")
    rng = np.random.default_rng(seed)
    n = t.size
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    e = (x + x.conj().T) / 2.0
    e /= np.linalg.norm(e, 2)
    gen = math.pi * np.outer(t, t.conj())

    def op(c):
        return _exp_hermitian(gen + c * e)

    def dist(c):
        return float(np.linalg.norm(op(c) - exact, 2))

    lo_target, target, hi_target = 0.9 * eps, 0.95 * eps, eps
    c = eps
    d = dist(c)
    for _ in range(8):
        if lo_target <= d <= hi_target:
            return op(c)
        c *= target / d
        d = dist(c)
    # secant stalled; fall back to bisection on a bracket
    lo, hi = 0.0, c
    while dist(hi) < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        d = dist(mid)
        if lo_target <= d <= hi_target:
            return op(mid)
        lo, hi = (mid, hi) if d < target else (lo, mid)
    raise ParameterError(f"could not realise reflection error {eps}")


def _check_basis(basis: GramBasis, ell: int) -> None:
    if not 1 <= ell <= len(basis):
        raise ParameterError(f"basis has {len(basis)} vectors; requested index {ell}")
    if sigma_min(basis.gram[:ell, :ell]) <= PD_TOL:
        raise DegenerateBasisError(f"C_{ell} is not positive definite")


def _index_permutation(indices, m: int) -> np.ndarray:
    """Permutation matrix of U_index, sending |i> to |g(i)> for i < len(indices)."""
    ell = len(indices)
    targets = list(indices)
    rest_targets = [j for j in range(m) if j not in set(targets)]
    mapping = targets + rest_targets  # mapping[i] = image of |i>
    p = np.zeros((m, m))
    p[mapping, np.arange(m)] = 1.0
    assert ell <= m
    return p


def _uniform_prefix(m: int, ell: int) -> np.ndarray:
    w = np.zeros(m)
    w[:ell] = 1.0 / math.sqrt(ell)
    return householder(w)


def _ry(c: float) -> np.ndarray:
    c = float(np.clip(c, -1.0, 1.0))
    s = math.sqrt(max(0.0, 1.0 - c * c))
    return np.array([[c, -s], [s, c]])


def _load_selected_rows(state: StateVector, tree: QramTree, indices, row="row", col="col"):
    """Uniform superposition over the first len(indices) index values, then
    U_index^dag U_A U_index so that branch |i> carries |s_i>."""
    m = state.dim(row)
    perm = _index_permutation(indices, m)
    state = apply_unitary(state, _uniform_prefix(m, len(indices)), row)
    state = apply_unitary(state, perm, row)
    state = apply_row_loader(state, tree.unit_rows(), row, col)
    return apply_unitary(state, perm.T, row)


def lcu_prepare_t(tree: QramTree, basis: GramBasis, ell: int,
                  ledger: ShotLedger | None = None) -> Prepared:
    """Prepare |t_ell> by linear combination of the selected rows.

    Returns the column-register state and the raw post-selection probability,
    1 / (ell * max|z|)^2.
    """
    _check_basis(basis, ell)
    m, n = tree.shape
    z = basis.z_column(ell)
    z_max = float(np.max(np.abs(z)))
    state = StateVector.zero(row=m, col=n, anc=2)
    state = _load_selected_rows(state, tree, basis.indices[:ell])
    rot = np.tile(np.eye(2), (m, 1, 1))
    for i in range(ell):
        rot[i] = _ry(z[i] / z_max)
    state = apply_indexed(state, rot, "anc", "row")
    state = apply_unitary(state, _uniform_prefix(m, ell), "row")
    state, p_row = post_select(state, "row", 0, discard=True)
    state, p_anc = post_select(state, "anc", 0, discard=True)
    p_raw = p_row * p_anc
    if ledger is not None:
        ledger.charge(repetitions=math.ceil(1.0 / math.sqrt(p_raw) - 1e-9))
    return Prepared(state, p_raw)


def prepare_pair_superposition(tree: QramTree, basis: GramBasis, k: int, ell: int,
                               ledger: ShotLedger | None = None) -> Prepared:
    """Prepare (|0>|t_k> + |1>|t_ell>)/sqrt(2) on registers (flag, col)."""
    swapped = k > ell
    lo, hi = (ell, k) if swapped else (k, ell)
    _check_basis(basis, hi)
    m, n = tree.shape
    z_lo, z_hi = basis.z_column(lo), basis.z_column(hi)
    z = float(max(np.max(np.abs(z_lo)), np.max(np.abs(z_hi))))
    state = StateVector.zero(flag=2, row=m, col=n, anc=2)
    state = apply_unitary(state, HADAMARD, "flag")
    state = _load_selected_rows(state, tree, basis.indices[:hi])
    for flag, zc in ((0, z_lo), (1, z_hi)):
        rot = np.tile(np.eye(2), (m, 1, 1))
        for j in range(hi):
            rot[j] = _ry(zc[j] / z) if j < zc.size else PAULI_X
        branch = apply_indexed(
            StateVector(state.tensor[flag], state.registers[1:]), rot, "anc", "row"
        )
        tensor = state.tensor.copy()
        tensor[flag] = branch.tensor
        state = StateVector(tensor, state.registers)
    state = apply_unitary(state, _uniform_prefix(m, hi), "row")
    state, p_row = post_select(state, "row", 0, discard=True)
    state, p_anc = post_select(state, "anc", 0, discard=True)
    if swapped:
        state = apply_unitary(state, PAULI_X, "flag")
    p_raw = p_row * p_anc
    if ledger is not None:
        reps = math.ceil(1.0 / math.sqrt(p_raw) - 1e-9)
        ledger.charge(ua=reps, repetitions=reps)
    return Prepared(state, p_raw)


def qgsp_circuit_state(tree: QramTree, reflections) -> StateVector:
    """State before the ancilla measurement in one adaptive-sampling round.

    ``reflections`` are n x n unitaries applied, in order, to the column
    register under an open control on the ancilla.
    """
    m, n = tree.shape
    state = StateVector.zero(row=m, col=n, anc=2)
    state = apply_unitary(state, householder(qram_norm_state(tree)), "row")
    state = apply_row_loader(state, tree.unit_rows(), "row", "col")
    state = apply_unitary(state, HADAMARD, "anc")
    for r in reflections:
        state = apply_controlled(state, r, "col", "anc", 0)
    return apply_unitary(state, HADAMARD, "anc")


def signed_overlap_state(v, pair: StateVector) -> StateVector:
    """Signed-overlap circuit: returns the state just before measuring (a, flag).

    Registers are ordered (a, v, t, flag); the pair state supplies (flag, t).
    """
    v = np.asarray(v, dtype=complex)
    pair = StateVector(pair.tensor, ("flag", "t"))
    state = StateVector.zero(a=2).tensor_product(StateVector.from_vector(v, "v"))
    state = state.tensor_product(pair.reorder(("t", "flag")))
    state = apply_unitary(state, HADAMARD, "a")
    tensor = state.tensor.copy()
    tensor[1] = np.swapaxes(tensor[1], 0, 1)  # controlled SWAP of v and t on a == 1
    state = StateVector(tensor, state.registers)
    state = apply_unitary(state, HADAMARD, "a")
    return apply_unitary(state, HADAMARD, "flag")


def outcome_probabilities(state: StateVector, regs=("a", "flag")) -> np.ndarray:
    """Joint distribution of two registers as a matrix p[x, y]."""
    axes = [state.axis(r) for r in regs]
    probs = np.abs(state.tensor) ** 2
    other = tuple(i for i in range(probs.ndim) if i not in axes)
    joint = probs.sum(axis=other)
    if axes[0] > axes[1]:
        joint = joint.T
    return joint / state.norm_sq
