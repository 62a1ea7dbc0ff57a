"""Command-line entry point: ``qreadout <task> [flags]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments
from .config import ExperimentConfig, build_config, parse_config
from .errors import ReadoutError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# subcommand name -> task name
COMMANDS = {
    "qgsp": "qgsp",
    "readout": "readout-only",
    "verify-bounds": "verify-bounds",
    "e2e-svd": "e2e-svd",
    "e2e-linsys": "e2e-linsys",
}


def _shots_arg(text: str):
    if text.strip().lower() == "auto":
        return "auto"
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("shots must be >= 0 or 'auto'")
    return value


def _list_arg(conv):
    def parse(text):
        return [conv(x) for x in text.replace(";", ",").split(",") if x.strip()]
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qreadout", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat 'section.key = value' config file")
        p.add_argument("--matrix", help="CSV matrix file (instead of a generated one)")
        p.add_argument("--m", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--rank", type=int)
        p.add_argument("--kappa", type=float)
        p.add_argument("--matrix-seed", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--shots", type=_shots_arg, help="0 = exact amplitudes, 'auto' = eps budget")
        p.add_argument("--eps", type=float)
        p.add_argument("--noise-eps", type=float, help="per-reflection error, overrides the budget")
        p.add_argument("--trials", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--repeats", type=int, help="median-of-runs boosting for readout")
        p.add_argument("--mode", choices=("exact", "sampled"), help="QGSP row-sampling mode")
        p.add_argument("--out", help="result file; a summary goes to <out>.summary.json")
        p.add_argument("--format", choices=("csv", "json"))
        if name == "e2e-svd":
            p.add_argument("--indices", type=_list_arg(int), help="1-based singular indices")
        if name == "e2e-linsys":
            p.add_argument("--b", type=_list_arg(float), help="right-hand side, comma separated")
    return parser


_FLAG_KEYS = {
    "m": "matrix.m", "n": "matrix.n", "rank": "matrix.rank", "kappa": "matrix.kappa",
    "matrix_seed": "matrix.seed", "matrix": "matrix.path", "seed": "seed",
    "shots": "readout.shots", "eps": "readout.eps", "repeats": "readout.repeats",
    "noise_eps": "noise.eps", "trials": "trials", "workers": "workers",
    "mode": "qgsp.mode", "out": "output.path", "format": "output.format",
    "indices": "task.indices", "b": "task.b",
}
_MATRIX_KEYS = ("matrix.m", "matrix.n", "matrix.rank", "matrix.kappa")


def config_from_args(args) -> ExperimentConfig:
    values, base_dir = {}, "."
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc.strerror}") from None
        values = parse_config(text, str(path))
        base_dir = str(path.parent)
    overrides = {key: getattr(args, attr) for attr, key in _FLAG_KEYS.items()
                 if getattr(args, attr, None) is not None}
    if overrides.get("readout.shots") == "auto":
        overrides["readout.shots"] = None
    # a command-line matrix source replaces the configured one
    if "matrix.path" in overrides:
        for key in _MATRIX_KEYS:
            values.pop(key, None)
    elif any(k in overrides for k in _MATRIX_KEYS):
        values.pop("matrix.path", None)
    # paths given on the command line are relative to the working directory
    for key in ("matrix.path", "output.path"):
        if key in overrides and base_dir != ".":
            overrides[key] = str(Path(overrides[key]).resolve())
    values.update(overrides)
    values["task.name"] = COMMANDS[args.command]
    if not any(k in values for k in _MATRIX_KEYS + ("matrix.path",)):
        values.update({"matrix.m": 16, "matrix.n": 16, "matrix.rank": 3, "matrix.kappa": 4.0})
    return build_config(values, base_dir=base_dir)


def _print_summary(cfg, summary, out=sys.stdout) -> None:
    for check in summary["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{status} {check['name']}: {check['detail']}", file=out)
    verdict = "PASS" if summary["passed"] else "FAIL"
    print(f"{verdict} {cfg.task}: {len(summary['checks'])} checks, {summary['rows']} rows", file=out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        rows, summary = experiments.execute(cfg)
        if cfg.out_path is not None:
            experiments.write_results(cfg, rows, summary, Path(cfg.base_dir) / cfg.out_path)
        elif cfg.out_format == "json":
            sys.stdout.write(experiments.rows_to_json(rows))
        else:
            sys.stdout.write(experiments.rows_to_csv(rows))
    except (OSError, ValueError, ReadoutError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _print_summary(cfg, summary, sys.stderr if cfg.out_path is None else sys.stdout)
    if not summary["passed"]:
        failed = ", ".join(c["name"] for c in summary["checks"] if not c["passed"])
        print(f"failed checks: {failed}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
