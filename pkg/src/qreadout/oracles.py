"""Brute-force classical oracles and Monte Carlo bound checkers.

Nothing here goes through the statevector simulator except the paired
noisy/exact comparison, which by design exercises the full sampling loop.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import bounds
from .bounds import epsilon_budget  # noqa: F401  (public re-export)
from .errors import DegenerateBasisError, RankExhaustedError
from .matrix import LowRankMatrix, build_qram, generate_low_rank, gram_matrix, sigma_min
from .qgsp import QgspConfig, QgspTrace, repeat_until_good, run_qgsp
from .simulator import ShotLedger

SE_SLACK = 3.0


@dataclass
class BoundReport:
    bound_name: str
    lhs: float
    rhs: float
    satisfied: bool
    trials: int
    seed: int
    direction: str = "<="
    details: list = field(default_factory=list)

    @classmethod
    def compare(cls, name, lhs, rhs, trials, seed, direction="<=", details=None):
        ok = lhs <= rhs if direction == "<=" else lhs >= rhs
        return cls(name, float(lhs), float(rhs), bool(ok), trials, seed, direction, details or [])

    def to_dict(self, with_details: bool = False) -> dict:
        d = {k: getattr(self, k) for k in
             ("bound_name", "lhs", "rhs", "satisfied", "trials", "seed", "direction")}
        if with_details:
            d["details"] = self.details
        return d

    def to_json(self, with_details: bool = False) -> str:
        return json.dumps(self.to_dict(with_details))


@dataclass(frozen=True)
class EnsembleConfig:
    """Random low-rank matrices; each trial draws a fresh member."""

    m: int = 8
    n: int = 8
    r: int = 2
    kappa: float = 2.0
    ell: int | None = None  # step whose sigma_min expectation is checked; default r - 1
    fixed: LowRankMatrix | None = field(default=None, compare=False)

    @property
    def step(self) -> int:
        return self.r - 1 if self.ell is None else self.ell

    @classmethod
    def from_matrix(cls, a: LowRankMatrix, ell: int | None = None) -> "EnsembleConfig":
        m, n = a.shape
        return cls(m, n, a.rank, a.kappa, ell, a)

    def member(self, seed: int, trial: int) -> LowRankMatrix:
        if self.fixed is not None:
            return self.fixed
        key = np.random.SeedSequence([seed, trial]).generate_state(1)[0]
        return generate_low_rank(self.m, self.n, self.r, self.kappa, int(key))


def _entries(a):
    return a.entries if isinstance(a, LowRankMatrix) else np.asarray(a, dtype=float)


def exact_adaptive_distribution(a, indices) -> np.ndarray:
    """Row-sampling law proportional to the squared residual after projecting
    out the span of the already selected rows."""
    entries = _entries(a)
    indices = list(indices)
    if indices:
        q, _, _ = scipy.linalg.qr(entries[indices].T, mode="economic", pivoting=True)
        resid = entries - (entries @ q) @ q.T
        weights = np.einsum("ij,ij->i", resid, resid)
        weights[indices] = 0.0
    else:
        weights = np.einsum("ij,ij->i", entries, entries)
    total = weights.sum()
    if total <= 1e-14 * np.sum(entries**2):
        raise RankExhaustedError(f"all residuals vanish after selecting {len(indices)} rows")
    return weights / total


def classical_gram_schmidt(a, indices, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt on the unit rows; returns T (rows t_j) and Z with T = Z^T S_hat."""
    entries = _entries(a)
    rows = entries[list(indices)]
    unit = rows / np.linalg.norm(rows, axis=1)[:, None]
    ell = unit.shape[0]
    t = unit.copy()
    r = np.zeros((ell, ell))
    for j in range(ell):
        for i in range(j):
            r[i, j] = t[i] @ t[j]
            t[j] -= r[i, j] * t[i]
        r[j, j] = np.linalg.norm(t[j])
        if r[j, j] < tol:
            raise DegenerateBasisError(f"row {list(indices)[j]} depends on earlier rows",
                                       index=list(indices)[j])
        t[j] /= r[j, j]
    z = scipy.linalg.solve_triangular(r, np.eye(ell))
    return t, z


def check_pl_bounds(a, trace: QgspTrace, tol: float = 1e-10, upper: str = "proof") -> BoundReport:
    """Audit every recorded post-selection probability against its interval.

    ``upper="proof"`` caps P_l with the r - l largest squared singular values;
    ``upper="top_ell"`` uses the l largest (only valid when l >= r - l).
    """
    low = a if isinstance(a, LowRankMatrix) else LowRankMatrix.from_entries(a)
    interval = bounds.pl_bounds if upper == "proof" else bounds.pl_bounds_top_ell
    details, violations = [], 0
    for rec in trace.records:
        lo, hi = interval(low.singular_values, rec.ell)
        ok = lo - tol <= rec.p_ell <= hi + tol
        violations += not ok
        details.append({"ell": rec.ell, "p_ell": rec.p_ell, "lower": lo, "upper": hi, "ok": ok})
    return BoundReport.compare(f"p_ell_interval[{upper}]", violations, 0, len(details), 0,
                               details=details)


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def adaptive_chain(a, steps: int, rng) -> list:
    """Draw ``steps`` row indices from the exact adaptive-sampling chain."""
    indices = []
    for _ in range(steps):
        p = exact_adaptive_distribution(a, indices)
        indices.append(int(rng.choice(p.size, p=p)))
    return indices


def monte_carlo_sigma_bounds(ensemble: EnsembleConfig, trials: int, seed: int):
    """Empirical E[1/sigma_min] and E[sigma_min] of C_{l+1} against their bounds."""
    ell = ensemble.step
    sig = np.empty(trials)
    for trial in range(trials):
        a = ensemble.member(seed, trial)
        rng = np.random.default_rng([seed, trial, 1])
        sig[trial] = sigma_min(gram_matrix(a, adaptive_chain(a, ell + 1, rng)))
    inv_mean, inv_se = _mean_se(1.0 / sig)
    mean, se = _mean_se(sig)
    r, kappa = ensemble.r, ensemble.kappa
    upper = bounds.sigma_inverse_bound(r, ell, kappa)
    lower = bounds.sigma_bound(r, ell, kappa)
    details = [{"sigma_min": float(s)} for s in sig]
    return (
        BoundReport.compare("inverse_sigma_min_mean", inv_mean, upper + SE_SLACK * inv_se,
                            trials, seed, "<=", details),
        BoundReport.compare("sigma_min_mean", mean, lower - SE_SLACK * se, trials, seed, ">=",
                            details),
    )


def noisy_expectation_check(ensemble: EnsembleConfig, trials: int, seed: int,
                            eps: float | None = None) -> BoundReport:
    """Paired noisy/exact sampling runs; compares E[sigma_min] ratio with 2/3.

    ``eps`` overrides the per-reflection error (default: the budget for each
    member's rank and condition number).
    """
    noisy, exact = np.empty(trials), np.empty(trials)
    details = []
    for trial in range(trials):
        a = ensemble.member(seed, trial)
        tree = build_qram(a)
        gate_eps = epsilon_budget(a.rank, a.kappa) if eps is None else eps
        base = QgspConfig(seed=seed, max_restarts=50)
        noisy_cfg = QgspConfig(seed=seed, max_restarts=50, reflection_eps=gate_eps)
        _, t_exact = run_qgsp(a, tree, base, ShotLedger(), trial=trial)
        _, t_noisy = run_qgsp(a, tree, noisy_cfg, ShotLedger(), trial=trial)
        exact[trial], noisy[trial] = t_exact.final_sigma_min, t_noisy.final_sigma_min
        details.append({"exact": exact[trial], "noisy": noisy[trial], "eps": gate_eps})
    ratio = float(noisy.mean() / exact.mean())
    _, se = _mean_se(noisy - (2.0 / 3.0) * exact)
    rhs = 2.0 / 3.0 - SE_SLACK * se / float(exact.mean())
    return BoundReport.compare("noisy_sigma_min_ratio", ratio, rhs, trials, seed, ">=", details)


def good_basis_check(ensemble: EnsembleConfig, runs: int, seed: int, delta: float = 0.01,
                     eps: float | None = None) -> BoundReport:
    """Fraction of repeat-until-good calls that clear the sigma_min threshold."""
    hits, details = 0, []
    for run in range(runs):
        a = ensemble.member(seed, run)
        tree = build_qram(a)
        gate_eps = epsilon_budget(a.rank, a.kappa) if eps is None else eps
        cfg = QgspConfig(seed=int(np.random.SeedSequence([seed, run]).generate_state(1)[0]),
                         delta=delta, reflection_eps=gate_eps)
        res = repeat_until_good(a, tree, cfg, ShotLedger())
        hits += res.met
        details.append({"met": bool(res.met), "runs": res.runs,
                        "sigma_min": res.trace.final_sigma_min})
    return BoundReport.compare("good_basis_rate", hits / runs, 1.0 - delta, runs, seed, ">=",
                               details)
