"""Adaptive row sampling by simulated quantum Gram-Schmidt rounds."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import bounds
from .errors import (DegenerateBasisError, ParameterError, PostSelectionError,
                     RankExhaustedError)
from .matrix import GramBasis, LowRankMatrix, QramTree
from .simulator import (ShotLedger, lcu_prepare_t, marginal, noisy_reflection,
                        post_select, qgsp_circuit_state, reflection_operator,
                        sample_register)

MODES = ("exact", "sampled")
# sampled mode gives up on the ancilla after this many failed post-selections
MAX_POSTSELECT_ATTEMPTS = 10**6


@dataclass(frozen=True)
class QgspConfig:
    mode: str = "exact"
    reflection_eps: float = 0.0
    delta: float = 0.01
    max_restarts: int | None = None  # None: derive from delta, r and kappa
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.delta < 1:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if self.reflection_eps < 0:
            raise ParameterError("reflection_eps must be non-negative")
        if self.max_restarts is not None and self.max_restarts < 1:
            raise ParameterError("max_restarts must be >= 1")

    def restarts_for(self, r: int, kappa: float) -> int:
        if self.max_restarts is not None:
            return self.max_restarts
        return bounds.restart_budget(r, kappa, self.delta)


@dataclass
class IterationRecord:
    ell: int
    index: int
    p_ell: float
    distribution: list
    sigma_min: float
    reflection_cost: int = 0
    t_fidelity: float | None = None


@dataclass
class QgspTrace:
    records: list = field(default_factory=list)
    final_sigma_min: float = float("nan")
    restarts: int = 0

    @property
    def p_sequence(self) -> list:
        return [rec.p_ell for rec in self.records]

    def to_jsonl(self) -> str:
        lines = []
        for rec in self.records:
            d = dict(rec.__dict__)
            d["distribution"] = [float(x) for x in d["distribution"]]
            lines.append(json.dumps(d))
        return "\n".join(lines) + "\n"


class StepResult(NamedTuple):
    index: int
    p_ell: float
    distribution: np.ndarray


class GoodBasis(NamedTuple):
    basis: GramBasis
    trace: QgspTrace
    met: bool
    runs: int


def as_low_rank(a) -> LowRankMatrix:
    return a if isinstance(a, LowRankMatrix) else LowRankMatrix.from_entries(a)


def reflection_cost(ell: int, z_max: float, eps: float) -> int:
    """U_A queries to realise C(R_ell) to accuracy eps, constant taken as 1."""
    return math.ceil(ell * z_max / eps)


def _stream(*key) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in key])


def qgsp_iteration(a, tree: QramTree, basis: GramBasis, cfg: QgspConfig,
                   ledger: ShotLedger, rng=None, reflections=None,
                   reflection_costs=None) -> StepResult:
    """One adaptive-sampling round; appends the sampled row to ``basis``.

    ``reflections`` defaults to the exact reflections about the current
    orthonormal vectors.  ``reflection_costs`` are the per-reflection query
    charges (default: none).
    """
    ell = len(basis)
    if reflections is None:
        reflections = [reflection_operator(t) for t in basis.ortho_basis]
    if len(reflections) != ell:
        raise ParameterError(f"{len(reflections)} reflections for a basis of size {ell}")
    rng = rng if rng is not None else _stream(cfg.seed)
    state = qgsp_circuit_state(tree, reflections)
    try:
        selected, p_ell = post_select(state, "anc", 0)
    except PostSelectionError as exc:
        raise RankExhaustedError(f"no residual mass left at ell={ell}: {exc}") from None
    dist = marginal(selected, "row")
    if cfg.mode == "exact":
        index = int(rng.choice(dist.size, p=dist / dist.sum()))
    else:
        for _ in range(MAX_POSTSELECT_ATTEMPTS):
            flag, collapsed = sample_register(state, "anc", rng)
            if flag == 0:
                break
        else:
            raise RankExhaustedError(f"post-selection never succeeded at ell={ell}")
        index, _ = sample_register(collapsed, "row", rng)
    preps = math.ceil(1.0 / p_ell - 1e-12)
    costs = sum(reflection_costs or ())
    ledger.charge(ua=preps * (1 + costs), va=preps, reflections=preps * ell)
    basis.extend(index)
    return StepResult(index, p_ell, dist)


def run_qgsp(a, tree: QramTree, cfg: QgspConfig, ledger: ShotLedger,
             trial: int = 0) -> tuple[GramBasis, QgspTrace]:
    """Sample rank(A) rows; restarts from scratch on numerical degeneracy."""
    a = as_low_rank(a)
    r, kappa = a.rank, a.kappa
    cost_eps = cfg.reflection_eps if cfg.reflection_eps > 0 else bounds.epsilon_budget(r, kappa)
    max_restarts = cfg.restarts_for(r, kappa)
    last_error = None
    for restart in range(max_restarts):
        rng = _stream(cfg.seed, trial, restart)
        basis = GramBasis.empty(tree)
        trace = QgspTrace(restarts=restart)
        reflections, costs = [], []
        try:
            for ell in range(r):
                step = qgsp_iteration(a, tree, basis, cfg, ledger, rng, reflections, costs)
                rec = IterationRecord(ell, step.index, step.p_ell, step.distribution.tolist(),
                                      basis.sigma_min())
                if ell + 1 < r:
                    prepared = lcu_prepare_t(tree, basis, ell + 1, ledger)
                    t = prepared.state.vector()
                    rec.t_fidelity = float(abs(np.vdot(basis.ortho_basis[-1], t)) ** 2)
                    noise_seed = np.random.SeedSequence([cfg.seed, trial, restart, ell]).generate_state(1)[0]
                    reflections.append(noisy_reflection(t, cfg.reflection_eps, int(noise_seed)))
                    z_max = float(np.max(np.abs(basis.z_column(ell + 1))))
                    rec.reflection_cost = reflection_cost(ell + 1, z_max, cost_eps)
                    costs.append(rec.reflection_cost)
                trace.records.append(rec)
        except (RankExhaustedError, DegenerateBasisError) as exc:
            last_error = exc
            continue
        trace.final_sigma_min = basis.sigma_min()
        return basis, trace
    raise RankExhaustedError(f"no full-rank basis after {max_restarts} restarts: {last_error}")


def query_bound(trace: QgspTrace) -> float:
    """Closed-form oracle-query count for a run, constant 1, ceilings absorbed.

    Sum over rounds of (1/P_l + 1) * (2 + sum of reflection costs so far).
    """
    total, cost = 0.0, 0
    for rec in trace.records:
        total += (1.0 / rec.p_ell + 1.0) * (2 + cost)
        cost += rec.reflection_cost
    return total


def repeat_until_good(a, tree: QramTree, cfg: QgspConfig, ledger: ShotLedger) -> GoodBasis:
    """Rerun sampling until sigma_min(C_r) clears 1/(2 r^2 kappa^(2r-2)).

    Keeps the best basis seen; ``met`` reports whether the threshold was hit
    within the restart budget.
    """
    a = as_low_rank(a)
    threshold = bounds.good_basis_threshold(a.rank, a.kappa)
    budget = cfg.restarts_for(a.rank, a.kappa)
    best = None
    for run in range(budget):
        basis, trace = run_qgsp(a, tree, cfg, ledger, trial=run)
        if best is None or trace.final_sigma_min > best[1].final_sigma_min:
            best = (basis, trace)
        if trace.final_sigma_min >= threshold:
            return GoodBasis(basis, trace, True, run + 1)
    return GoodBasis(best[0], best[1], False, budget)
