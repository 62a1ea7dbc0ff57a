"""End-to-end drivers and the experiment runner behind the CLI.

Quantum state-preparation stages (singular-vector states, linear-system
solution states) are computed classically; their cost enters the ledger as an
``analytic`` charge from the closed-form complexity, never as a measured count.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import oracles
from .config import ExperimentConfig, trial_seed
from .errors import NoSolutionComponentError, ParameterError, ReadoutError
from .matrix import LowRankMatrix, build_qram
from .qgsp import repeat_until_good, run_qgsp
from .readout import ReadoutConfig, ReadoutResult, readout_median
from .simulator import ShotLedger

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
COLUMNS = [
    "trial", "seed", "task", "index", "p_sequence", "sigma_min", "l2_error",
    "ua_queries", "va_queries", "reflection_applications", "copies_of_v",
    "expected_repetitions", "analytic_state_prep", "bound_name", "lhs", "rhs",
    "satisfied", "note",
]
EXACT_TOL = 1e-10
SUCCESS_FRACTION = 2.0 / 3.0
DEGENERACY_TOL = 1e-8


class SingularValueAmbiguityWarning(UserWarning):
    """Two singular values coincide, so the singular vector is not unique."""


def _qgsp_cfg(cfg: ExperimentConfig, trial: int):
    changes = {"seed": trial_seed(cfg.qgsp.seed + cfg.seed, trial)}
    if cfg.noise_eps is not None:
        changes["reflection_eps"] = cfg.noise_eps
    return dataclasses.replace(cfg.qgsp, **changes)


def _readout_cfg(cfg: ExperimentConfig, trial: int) -> ReadoutConfig:
    return ReadoutConfig(shots=cfg.shots, seed=trial_seed(cfg.seed + 1, trial))


def _good_basis(a: LowRankMatrix, cfg: ExperimentConfig, trial: int, ledger: ShotLedger):
    tree = build_qram(a)
    return tree, repeat_until_good(a, tree, _qgsp_cfg(cfg, trial), ledger)


def svd_state_prep_cost(a: LowRankMatrix, index: int) -> float:
    """Per-copy cost of preparing |v_i>: log2(mn) |A|_F^3 / (gap * sigma_i^2)."""
    sig = np.append(a.singular_values, 0.0)
    gap = float(np.min(np.abs(np.diff(sig))))
    m, n = a.shape
    if gap <= 0:
        return math.inf
    return math.log2(m * n) * math.sqrt(a.frobenius_sq) ** 3 / (gap * sig[index - 1] ** 2)


def linsys_state_prep_cost(a: LowRankMatrix, eps: float) -> float:
    """Per-copy cost of preparing |A^+ b>: kappa^2 log2(n) |A|_F / eps."""
    return a.kappa ** 2 * math.log2(max(a.shape[1], 2)) * math.sqrt(a.frobenius_sq) / eps


def e2e_svd_readout(cfg: ExperimentConfig, indices=None, trial: int = 0,
                    a: LowRankMatrix | None = None) -> list[ReadoutResult]:
    """Read out right singular vectors (1-based ``indices``, default all)."""
    a = a if a is not None else cfg.load_matrix()
    indices = list(indices or cfg.indices or range(1, a.rank + 1))
    for i in indices:
        if not 1 <= i <= a.rank:
            raise ParameterError(f"singular index {i} outside 1..{a.rank}")
    sig = a.singular_values
    ledger = ShotLedger()
    tree, good = _good_basis(a, cfg, trial, ledger)
    results = []
    for i in indices:
        close = [j + 1 for j in range(a.rank) if j + 1 != i and abs(sig[j] - sig[i - 1]) <= DEGENERACY_TOL]
        if close:
            warnings.warn(f"singular value {i} coincides with {close}; the singular vector is not unique",
                          SingularValueAmbiguityWarning, stacklevel=2)
        v = a.right_vectors[:, i - 1]
        local = ShotLedger()
        local.merge(ledger)
        res = readout_median(a, tree, good.basis, v, cfg.eps, _readout_cfg(cfg, trial),
                             cfg.repeats, local)
        res.analytic_cost = svd_state_prep_cost(a, i) * max(res.ledger.copies_of_v, 1)
        results.append(res)
    return results


def solution_state(a: LowRankMatrix, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape != (a.shape[0],):
        raise ParameterError(f"b has length {b.size}, expected {a.shape[0]}")
    x = np.linalg.pinv(a.entries) @ b
    norm = np.linalg.norm(x)
    if norm <= 1e-12 * max(np.linalg.norm(b), 1e-300):
        raise NoSolutionComponentError("b has no component in the column space of A")
    return x / norm


def e2e_linsys_readout(cfg: ExperimentConfig, b=None, trial: int = 0,
                       a: LowRankMatrix | None = None) -> ReadoutResult:
    """Read out the normalized least-squares solution A^+ b."""
    a = a if a is not None else cfg.load_matrix()
    if b is None:
        b = cfg.b if cfg.b is not None else _random_b(a, trial_seed(cfg.seed + 2, trial))
    v = solution_state(a, b)
    ledger = ShotLedger()
    tree, good = _good_basis(a, cfg, trial, ledger)
    res = readout_median(a, tree, good.basis, v, cfg.eps, _readout_cfg(cfg, trial), cfg.repeats, ledger)
    res.analytic_cost = linsys_state_prep_cost(a, cfg.eps) * max(res.ledger.copies_of_v, 1)
    return res


def _random_b(a: LowRankMatrix, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(a.shape[0])


def random_rowspace_vector(a: LowRankMatrix, seed: int) -> np.ndarray:
    w = np.random.default_rng(seed).standard_normal(a.rank)
    v = a.right_vectors @ w
    return v / np.linalg.norm(v)


def _row(trial, seed, task, **kw) -> dict:
    row = dict.fromkeys(COLUMNS, "")
    row.update(trial=trial, seed=seed, task=task)
    for key, value in kw.items():
        if key not in row:
            raise KeyError(key)
        row[key] = value
    return row


def _ledger_cols(ledger: ShotLedger) -> dict:
    return {k: v for k, v in ledger.as_dict().items() if k in COLUMNS}


def _readout_row(trial, seed, task, index, good, res: ReadoutResult) -> dict:
    return _row(trial, seed, task, index=index, p_sequence=good.trace.p_sequence,
                sigma_min=good.trace.final_sigma_min, l2_error=res.l2_error,
                analytic_state_prep=res.analytic_cost if task.startswith("e2e") else "",
                **_ledger_cols(res.ledger))


def _error_row(trial, seed, task, exc: Exception, index="") -> dict:
    return _row(trial, seed, task, index=index, l2_error=math.nan,
                note=f"{type(exc).__name__}: {exc}")


def run_trial(cfg: ExperimentConfig, trial: int) -> list[dict]:
    """All result rows of one trial; independent of every other trial."""
    seed = trial_seed(cfg.seed, trial)
    task = cfg.task
    if task == "verify-bounds":
        return []
    a = cfg.load_matrix()
    try:
        if task == "qgsp":
            ledger = ShotLedger()
            tree = build_qram(a)
            basis, trace = run_qgsp(a, tree, _qgsp_cfg(cfg, trial), ledger, trial=trial)
            audit = oracles.check_pl_bounds(a, trace)
            return [_row(trial, seed, task, index=list(basis.indices), p_sequence=trace.p_sequence,
                         sigma_min=trace.final_sigma_min, bound_name=audit.bound_name,
                         lhs=audit.lhs, rhs=audit.rhs, satisfied=audit.satisfied,
                         **_ledger_cols(ledger))]
        if task == "readout-only":
            ledger = ShotLedger()
            tree, good = _good_basis(a, cfg, trial, ledger)
            v = random_rowspace_vector(a, seed)
            res = readout_median(a, tree, good.basis, v, cfg.eps, _readout_cfg(cfg, trial),
                                 cfg.repeats, ledger)
            return [_readout_row(trial, seed, task, "", good, res)]
        if task == "e2e-svd":
            indices = list(cfg.indices or range(1, a.rank + 1))
            rows = []
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SingularValueAmbiguityWarning)
                ledger = ShotLedger()
                _, good = _good_basis(a, cfg, trial, ledger)
                results = e2e_svd_readout(cfg, indices, trial, a)
            for i, res in zip(indices, results):
                rows.append(_readout_row(trial, seed, task, i, good, res))
            return rows
        if task == "e2e-linsys":
            ledger = ShotLedger()
            _, good = _good_basis(a, cfg, trial, ledger)
            res = e2e_linsys_readout(cfg, None, trial, a)
            return [_readout_row(trial, seed, task, "", good, res)]
    except ReadoutError as exc:
        if isinstance(exc, (ParameterError, NoSolutionComponentError)):
            raise
        return [_error_row(trial, seed, task, exc)]
    raise ParameterError(f"unknown task {task!r}")


def verify_bounds(cfg: ExperimentConfig) -> list:
    """BoundReports for the P_l interval, the sigma_min expectations, the noisy
    expectation and the good-basis rate."""
    a = cfg.load_matrix() if cfg.matrix_path is not None else None
    if a is not None:
        ensemble = oracles.EnsembleConfig.from_matrix(a)
    else:
        ensemble = oracles.EnsembleConfig(cfg.m, cfg.n, cfg.rank, cfg.kappa)
    trials, seed = cfg.trials, cfg.seed
    violations, runs, details = 0, 0, []
    for trial in range(trials):
        member = ensemble.member(seed, trial)
        tree = build_qram(member)
        _, trace = run_qgsp(member, tree, _qgsp_cfg(cfg, trial), ShotLedger(), trial=trial)
        report = oracles.check_pl_bounds(member, trace)
        violations += int(report.lhs)
        runs += len(report.details)
        details.extend(report.details)
    reports = [oracles.BoundReport.compare("p_ell_interval", violations, 0, trials, seed,
                                           details=details)]
    if ensemble.r >= 2:
        reports.extend(oracles.monte_carlo_sigma_bounds(ensemble, trials, seed))
    reports.append(oracles.noisy_expectation_check(ensemble, trials, seed, cfg.noise_eps))
    reports.append(oracles.good_basis_check(ensemble, trials, seed, cfg.qgsp.delta, cfg.noise_eps))
    return reports


def _report_row(report, trial="") -> dict:
    return _row(trial, report.seed, "verify-bounds", bound_name=report.bound_name,
                lhs=report.lhs, rhs=report.rhs, satisfied=report.satisfied)


def run_trials(cfg: ExperimentConfig) -> list[dict]:
    """Rows of every trial, ordered by trial index whatever the completion order."""
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(run_trial, [cfg] * cfg.trials, range(cfg.trials)))
    else:
        chunks = [run_trial(cfg, t) for t in range(cfg.trials)]
    return [row for chunk in chunks for row in chunk]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ";".join(_fmt(v) for v in value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in COLUMNS])
    return buf.getvalue()


def _jsonable(value):
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def rows_to_json(rows: list[dict]) -> str:
    payload = {"schema": SCHEMA_VERSION,
               "rows": [{k: _jsonable(v) for k, v in row.items()} for row in rows]}
    return json.dumps(payload, indent=1) + "\n"


def evaluate(cfg: ExperimentConfig, rows: list[dict]) -> list[tuple[str, bool, str]]:
    """Acceptance checks configured by the task: (name, passed, detail)."""
    checks = []
    if cfg.task == "verify-bounds":
        for row in rows:
            checks.append((row["bound_name"], bool(row["satisfied"]),
                           f"lhs={row['lhs']:.6g} rhs={row['rhs']:.6g}"))
        return checks
    if cfg.task == "qgsp":
        bad = sum(not row["satisfied"] for row in rows)
        checks.append(("p_ell_interval", bad == 0, f"{bad} runs with violations"))
        return checks
    errors = np.array([row["l2_error"] for row in rows], dtype=float)
    finite = np.where(np.isfinite(errors), errors, np.inf)
    if cfg.exact:
        worst = float(finite.max())
        checks.append(("exact_l2_error", worst <= EXACT_TOL, f"max l2_error={worst:.3g}"))
    else:
        frac = float(np.mean(finite <= cfg.eps))
        checks.append(("sampled_success_fraction", frac >= SUCCESS_FRACTION,
                       f"{frac:.3f} of runs within eps={cfg.eps}"))
    return checks


def summarize(cfg: ExperimentConfig, rows: list[dict], checks) -> dict:
    summary = {
        "task": cfg.task,
        "trials": cfg.trials,
        "seed": cfg.seed,
        "rows": len(rows),
        "checks": [{"name": n, "passed": ok, "detail": d} for n, ok, d in checks],
        "passed": all(ok for _, ok, _ in checks),
    }
    errors = [row["l2_error"] for row in rows if row["l2_error"] != ""]
    if errors:
        errs = np.asarray(errors, dtype=float)
        summary["l2_error_max"] = _jsonable(float(np.nanmax(errs))) if np.isfinite(errs).any() else "nan"
        summary["l2_error_median"] = _jsonable(float(np.nanmedian(errs))) if np.isfinite(errs).any() else "nan"
    return summary


def execute(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    """Run the configured task; returns result rows and the summary."""
    if cfg.task == "verify-bounds":
        rows = [_report_row(r) for r in verify_bounds(cfg)]
    else:
        rows = run_trials(cfg)
    checks = evaluate(cfg, rows)
    return rows, summarize(cfg, rows, checks)


def write_results(cfg: ExperimentConfig, rows: list[dict], summary: dict, out: str | Path) -> Path:
    """Write the result file and ``<out>.summary.json``; returns the summary path."""
    out = Path(out)
    text = rows_to_csv(rows) if cfg.out_format == "csv" else rows_to_json(rows)
    try:
        out.write_text(text)
        stamped = dict(summary, timestamp=datetime.now(timezone.utc).isoformat())
        summary_path = out.with_name(out.name + ".summary.json")
        summary_path.write_text(json.dumps(stamped, indent=1) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc.strerror}") from None
    return summary_path


def run_experiment(cfg) -> int:
    """Execute a config (path or ExperimentConfig); 0 iff all checks pass."""
    from .config import load_config
    if not isinstance(cfg, ExperimentConfig):
        cfg = load_config(cfg)
    rows, summary = execute(cfg)
    if cfg.out_path is not None:
        write_results(cfg, rows, summary, Path(cfg.base_dir) / cfg.out_path)
    failed = [c["name"] for c in summary["checks"] if not c["passed"]]
    if failed:
        log.error("failed checks: %s", ", ".join(failed))
        return 1
    return 0
