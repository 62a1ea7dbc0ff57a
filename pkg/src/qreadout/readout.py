"""Coordinate read-out of a state lying in the row space of the input matrix.

Basis positions ``k``, ``i`` and ``ell`` are 1-based, matching the order in
which rows were sampled.  ``shots == 0`` selects exact-amplitude mode, the
infinite-shot limit of every estimator.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds
from .errors import InconsistentEstimatesError, ParameterError, PreconditionError
from .matrix import GramBasis, LowRankMatrix, QramTree, basis_transform
from .simulator import (ShotLedger, StateVector, HADAMARD, apply_unitary, signed_overlap_state,
                        lcu_prepare_t, outcome_probabilities,
                        prepare_pair_superposition)

ROWSPACE_TOL = 1e-10


def _check_unit(vec, name) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if abs(np.linalg.norm(vec) - 1.0) > 1e-10:
        raise ParameterError(f"{name} must be a unit vector (norm {np.linalg.norm(vec):.12g})")
    return vec


def swap_accept_probability(v, t) -> float:
    """P(ancilla = 0) of the SWAP test, from the simulated circuit."""
    state = StateVector.zero(a=2)
    state = state.tensor_product(StateVector.from_vector(v, "v"))
    state = state.tensor_product(StateVector.from_vector(t, "t"))
    state = apply_unitary(state, HADAMARD, "a")
    tensor = state.tensor.copy()
    tensor[1] = tensor[1].T
    state = apply_unitary(StateVector(tensor, state.registers), HADAMARD, "a")
    return float(np.sum(np.abs(state.tensor[0]) ** 2) / state.norm_sq)


def swap_test(v, t, shots: int, rng=None) -> float:
    """Estimate |<v|t>|^2; exact when ``shots == 0``."""
    v, t = _check_unit(v, "v"), _check_unit(t, "t")
    if shots < 0:
        raise ParameterError("shots must be >= 0")
    p = min(1.0, max(0.5, swap_accept_probability(v, t)))
    if shots == 0:
        return 2.0 * p - 1.0
    accepted = rng.binomial(shots, p)
    return 2.0 * accepted / shots - 1.0


def overlap_outcome_probabilities(v, basis: GramBasis, tree: QramTree, k: int, i: int,
                       ledger: ShotLedger | None = None) -> np.ndarray:
    """Joint distribution p[a, flag] of the two measured qubits."""
    pair = prepare_pair_superposition(tree, basis, k, i, ledger).state
    return outcome_probabilities(signed_overlap_state(v, pair))


def signed_overlap(v, k: int, i: int, basis: GramBasis, tree: QramTree, shots: int,
                   rng=None, ledger: ShotLedger | None = None) -> float:
    """Estimate <t_k|v><v|t_i> as 2 P(same outcome) - 1."""
    v = _check_unit(v, "v")
    if shots < 0:
        raise ParameterError("shots must be >= 0")
    local = ShotLedger()
    probs = overlap_outcome_probabilities(v, basis, tree, k, i, local)
    if ledger is not None:
        per_prep = local.ua_queries
        n_preps = max(shots, 1)
        ledger.charge(ua=per_prep * n_preps, copies=shots,
                      repetitions=local.expected_repetitions * n_preps)
    if shots == 0:
        return 2.0 * float(probs[0, 0] + probs[1, 1]) - 1.0
    p = probs.ravel()
    counts = rng.multinomial(shots, p / p.sum())
    return 2.0 * (counts[0] + counts[3]) / shots - 1.0


def reconstruct(a, indices, x) -> np.ndarray:
    entries = a.entries if isinstance(a, LowRankMatrix) else np.asarray(a, dtype=float)
    indices = list(indices)
    x = np.asarray(x, dtype=float)
    if x.shape != (len(indices),):
        raise ParameterError(f"{x.size} coordinates for {len(indices)} rows")
    rows = entries[indices]
    return (rows / np.linalg.norm(rows, axis=1)[:, None]).T @ x


def sign_resolved_error(estimate, target) -> float:
    estimate, target = np.asarray(estimate), np.asarray(target)
    return float(min(np.linalg.norm(estimate - target), np.linalg.norm(estimate + target)))


@dataclass(frozen=True)
class ReadoutConfig:
    shots: int | None = 0  # 0: exact amplitudes, None: budget from eps
    seed: int = 0
    budget_constant: float = 4.0

    def shots_for(self, eps: float, r: int) -> int:
        if self.shots is None:
            return bounds.shot_budget(eps, r, self.budget_constant)
        if self.shots < 0:
            raise ParameterError("shots must be >= 0")
        return self.shots


@dataclass
class ReadoutResult:
    k_star: int
    a_tilde: np.ndarray
    a: np.ndarray
    x: np.ndarray
    v_reconstructed: np.ndarray
    l2_error: float
    ledger: ShotLedger = field(default_factory=ShotLedger)
    shots: int = 0
    analytic_cost: float = 0.0  # closed-form state-preparation charge, not a measured count

    def to_dict(self) -> dict:
        return {
            "k_star": self.k_star,
            "a_tilde": [float(x) for x in self.a_tilde],
            "a": [float(x) for x in self.a],
            "x": [float(x) for x in self.x],
            "v_reconstructed": [float(x) for x in self.v_reconstructed],
            "l2_error": float(self.l2_error),
            "shots": self.shots,
            "ledger": self.ledger.as_dict(),
            "analytic_cost": float(self.analytic_cost),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def rowspace_residual(a, v) -> float:
    low = a if isinstance(a, LowRankMatrix) else LowRankMatrix.from_entries(a)
    v = np.asarray(v, dtype=float)
    q = low.right_vectors
    return float(np.linalg.norm(v - q @ (q.T @ v)))


def readout_coordinates(a, tree: QramTree, basis: GramBasis, v, eps: float,
                        cfg: ReadoutConfig = ReadoutConfig(),
                        ledger: ShotLedger | None = None) -> ReadoutResult:
    """Recover the classical vector ``v`` from (simulated) copies of |v>."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    if rowspace_residual(a, v) > ROWSPACE_TOL:
        raise PreconditionError("v does not lie in the row space of A")
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")
    ledger = ledger if ledger is not None else ShotLedger()
    r = len(basis)
    shots = cfg.shots_for(eps, r)

    mags = np.empty(r)
    for i in range(1, r + 1):
        t = lcu_prepare_t(tree, basis, i, ledger).state.vector().real
        rng = np.random.default_rng([cfg.seed, 0, i])
        mags[i - 1] = swap_test(v, t / np.linalg.norm(t), shots, rng)
        ledger.charge(copies=shots)
    k = int(np.argmax(mags)) + 1  # argmax keeps the lowest index on ties

    a_tilde = np.empty(r)
    for i in range(1, r + 1):
        rng = np.random.default_rng([cfg.seed, 1, i])
        a_tilde[i - 1] = signed_overlap(v, k, i, basis, tree, shots, rng, ledger)
    norm = float(np.linalg.norm(a_tilde))
    if norm < 1.0 / (2.0 * math.sqrt(r)):
        raise InconsistentEstimatesError(
            f"|a_tilde| = {norm:.4g} is below 1/(2 sqrt r) = {1 / (2 * math.sqrt(r)):.4g}"
        )
    coords = a_tilde / norm
    x = basis_transform(basis.coeffs, coords)
    v_rec = reconstruct(a, basis.indices, x)
    return ReadoutResult(k, a_tilde, coords, x, v_rec, sign_resolved_error(v_rec, v), ledger, shots)


def readout_median(a, tree: QramTree, basis: GramBasis, v, eps: float,
                   cfg: ReadoutConfig, repeats: int,
                   ledger: ShotLedger | None = None) -> ReadoutResult:
    """Boost the per-run success probability by a componentwise median over runs."""
    if repeats < 1:
        raise ParameterError("repeats must be >= 1")
    ledger = ledger if ledger is not None else ShotLedger()
    runs = [
        readout_coordinates(a, tree, basis, v, eps,
                            ReadoutConfig(cfg.shots, cfg.seed * 1_000_003 + j, cfg.budget_constant),
                            ledger)
        for j in range(repeats)
    ]
    ref = runs[0].a
    aligned = np.array([run.a if run.a @ ref >= 0 else -run.a for run in runs])
    coords = np.median(aligned, axis=0)
    coords /= np.linalg.norm(coords)
    x = basis_transform(basis.coeffs, coords)
    v_rec = reconstruct(a, basis.indices, x)
    v = np.asarray(v, dtype=float) / np.linalg.norm(v)
    return ReadoutResult(runs[0].k_star, np.median([r.a_tilde for r in runs], axis=0), coords, x,
                         v_rec, sign_resolved_error(v_rec, v), ledger, runs[0].shots)
