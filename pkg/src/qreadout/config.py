"""Flat ``section.key = value`` experiment configuration."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .matrix import LowRankMatrix, generate_low_rank, load_matrix_csv
from .qgsp import QgspConfig

TASKS = ("qgsp", "readout-only", "e2e-svd", "e2e-linsys", "verify-bounds")
FORMATS = ("csv", "json")


def _floats(text: str) -> list:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _ints(text: str) -> list:
    return [int(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _optional_int(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


def _shots(text):
    if text is None:
        return 0
    if isinstance(text, int):
        return text
    return None if str(text).strip().lower() == "auto" else int(text)


@dataclass
class ExperimentConfig:
    # matrix source: either generated (m, n, rank, kappa, seed) or a CSV path
    m: int | None = None
    n: int | None = None
    rank: int | None = None
    kappa: float | None = None
    matrix_seed: int = 0
    matrix_path: str | None = None
    qgsp: QgspConfig = field(default_factory=QgspConfig)
    eps: float = 0.1
    shots: int | None = 0  # None means the eps-derived budget
    repeats: int = 1
    task: str = "readout-only"
    indices: list | None = None
    b: list | None = None
    out_path: str | None = None
    out_format: str = "csv"
    trials: int = 1
    seed: int = 0
    workers: int = 1
    noise_eps: float | None = None
    base_dir: str = "."

    def validate(self) -> "ExperimentConfig":
        generated = [self.m, self.n, self.rank, self.kappa]
        if self.matrix_path is not None and any(x is not None for x in generated):
            raise ParameterError("give either matrix.path or generated matrix parameters, not both")
        if self.matrix_path is None and any(x is None for x in generated):
            raise ParameterError("generated matrix needs matrix.m, matrix.n, matrix.rank and matrix.kappa")
        if not 0 < self.eps < 1:
            raise ParameterError(f"readout.eps must lie in (0, 1), got {self.eps}")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if self.task not in TASKS:
            raise ParameterError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.out_format not in FORMATS:
            raise ParameterError(f"output.format must be one of {FORMATS}")
        if self.shots is not None and self.shots < 0:
            raise ParameterError("shots must be >= 0")
        return self

    @property
    def exact(self) -> bool:
        return self.shots == 0

    def load_matrix(self) -> LowRankMatrix:
        if self.matrix_path is not None:
            path = Path(self.base_dir) / self.matrix_path
            try:
                return LowRankMatrix.from_entries(load_matrix_csv(path))
            except OSError as exc:
                raise OSError(f"cannot read matrix file {path}: {exc.strerror}") from None
        return generate_low_rank(self.m, self.n, self.rank, self.kappa, self.matrix_seed)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_KEYS = {
    "matrix.m": ("m", int),
    "matrix.n": ("n", int),
    "matrix.rank": ("rank", int),
    "matrix.kappa": ("kappa", float),
    "matrix.seed": ("matrix_seed", int),
    "matrix.path": ("matrix_path", str),
    "readout.eps": ("eps", float),
    "readout.shots": ("shots", _shots),
    "readout.repeats": ("repeats", int),
    "task.name": ("task", str),
    "task.indices": ("indices", _ints),
    "task.b": ("b", _floats),
    "output.path": ("out_path", str),
    "output.format": ("out_format", str),
    "trials": ("trials", int),
    "seed": ("seed", int),
    "workers": ("workers", int),
    "noise.eps": ("noise_eps", float),
}
_QGSP_KEYS = {
    "qgsp.mode": ("mode", str),
    "qgsp.reflection_eps": ("reflection_eps", float),
    "qgsp.delta": ("delta", float),
    "qgsp.max_restarts": ("max_restarts", _optional_int),
    "qgsp.seed": ("seed", int),
}


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse key-value lines into a flat dict of typed values keyed by dotted name."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS and key not in _QGSP_KEYS:
            raise ParameterError(f"{source}:{lineno}: unknown key {key!r}")
        conv = (_KEYS.get(key) or _QGSP_KEYS[key])[1]
        try:
            values[key] = conv(value)
        except ValueError:
            raise ParameterError(f"{source}:{lineno}: bad value {value!r} for {key}") from None
    return values


def build_config(values: dict, base_dir: str = ".") -> ExperimentConfig:
    kwargs, qgsp = {}, {}
    for key, value in values.items():
        if key in _QGSP_KEYS:
            qgsp[_QGSP_KEYS[key][0]] = value
        else:
            kwargs[_KEYS[key][0]] = value
    kwargs["qgsp"] = QgspConfig(**qgsp)
    return ExperimentConfig(base_dir=base_dir, **kwargs).validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from None
    return build_config(parse_config(text, str(path)), base_dir=str(path.parent))


def dump_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config` for the keys that are set."""
    lines = []
    for key, (attr, _) in _KEYS.items():
        value = getattr(cfg, attr)
        if value is None and attr != "shots":
            continue
        if attr == "shots":
            value = "auto" if value is None else value
        if isinstance(value, list):
            value = ",".join(repr(x) for x in value)
        lines.append(f"{key} = {value}")
    for key, (attr, _) in _QGSP_KEYS.items():
        value = getattr(cfg.qgsp, attr)
        lines.append(f"{key} = {'auto' if value is None else value}")
    return "\n".join(lines) + "\n"


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])
