"""Input-matrix model, QRAM emulation and Gram-matrix machinery.

The QRAM is emulated by binary trees of partial sums: one tree per row over
the squared entries and one tree over the squared row norms.  Amplitudes are
read off the leaves; the internal nodes exist so that the tree invariants
(every node is the sum of its children) can be audited.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import DegenerateBasisError, DegenerateInputError, ParameterError

# sigma_min(C) at or below this is treated as a dependent row set
PD_TOL = 1e-12


@dataclass(frozen=True)
class LowRankMatrix:
    entries: np.ndarray
    rank: int
    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    @property
    def kappa(self) -> float:
        return float(self.singular_values[0] / self.singular_values[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def frobenius_sq(self) -> float:
        return float(np.sum(self.entries**2))

    @classmethod
    def from_entries(cls, entries, rank: int | None = None, tol: float = 1e-10) -> "LowRankMatrix":
        """Wrap a dense matrix, recovering its SVD and numerical rank."""
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.size == 0:
            raise ParameterError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        if s[0] == 0.0:
            raise ParameterError("matrix is identically zero")
        numerical_rank = int(np.sum(s > tol * s[0]))
        if rank is not None and rank != numerical_rank:
            raise ParameterError(f"requested rank {rank} but numerical rank is {numerical_rank}")
        r = numerical_rank
        return cls(a, r, s[:r].copy(), u[:, :r].copy(), vt[:r].T.copy())


def generate_low_rank(m: int, n: int, r: int, kappa: float, seed: int) -> LowRankMatrix:
    """Seeded A = U diag(sigma) V^T with sigma log-spaced from 1 down to 1/kappa."""
    if not (1 <= r <= min(m, n)):
        raise ParameterError(f"need 1 <= r <= min(m, n); got m={m}, n={n}, r={r}")
    if kappa < 1:
        raise ParameterError(f"kappa must be >= 1, got {kappa}")
    rng = np.random.default_rng(seed)
    u, _ = np.linalg.qr(rng.standard_normal((m, r)))
    v, _ = np.linalg.qr(rng.standard_normal((n, r)))
    if r == 1:
        sigma = np.ones(1)
    else:
        sigma = np.logspace(0.0, -np.log10(kappa), r)
        sigma[0], sigma[-1] = 1.0, 1.0 / kappa
    entries = (u * sigma) @ v.T
    return LowRankMatrix(entries, r, sigma, u, v)


def load_matrix_csv(path) -> np.ndarray:
    """Read a row-major CSV matrix; an optional leading ``# m n`` header is checked."""
    path = Path(path)
    rows, header = [], None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                parts = text[1:].split()
                if header is None and not rows and len(parts) == 2:
                    try:
                        header = (int(parts[0]), int(parts[1]))
                    except ValueError:
                        raise ParameterError(f"{path}:{lineno}: malformed header {text!r}") from None
                continue
            try:
                rows.append([float(x) for x in text.split(",")])
            except ValueError:
                raise ParameterError(f"{path}:{lineno}: non-numeric entry in {text!r}") from None
            if len(rows[-1]) != len(rows[0]):
                raise ParameterError(
                    f"{path}:{lineno}: expected {len(rows[0])} columns, found {len(rows[-1])}"
                )
    if not rows:
        raise ParameterError(f"{path}: no matrix rows found")
    a = np.array(rows)
    if header is not None and header != a.shape:
        raise ParameterError(f"{path}: header says {header} but data is {a.shape}")
    return a


def save_matrix_csv(path, a) -> None:
    a = np.asarray(a, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"# {a.shape[0]} {a.shape[1]}\n")
        for row in a:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def _tree_levels(leaves: np.ndarray) -> list[np.ndarray]:
    """Bottom-up partial-sum levels; odd levels are zero-padded."""
    levels = [leaves]
    while levels[-1].shape[-1] > 1:
        cur = levels[-1]
        if cur.shape[-1] % 2:
            pad = np.zeros(cur.shape[:-1] + (1,))
            cur = np.concatenate([cur, pad], axis=-1)
        levels.append(cur[..., 0::2] + cur[..., 1::2])
    return levels


@dataclass(frozen=True)
class QramTree:
    row_levels: list  # row_levels[0][i, l] = A_il^2, last level holds the roots
    row_signs: np.ndarray
    norm_levels: list

    @property
    def shape(self) -> tuple[int, int]:
        return self.row_levels[0].shape

    @property
    def row_norms_sq(self) -> np.ndarray:
        return self.row_levels[-1][:, 0]

    @property
    def frobenius_sq(self) -> float:
        return float(self.norm_levels[-1][0])

    def unit_rows(self) -> np.ndarray:
        """All rows normalized; what U_A writes into the column register."""
        return self.row_signs * np.sqrt(self.row_levels[0] / self.row_norms_sq[:, None])

    def check_invariants(self, rtol: float = 1e-12) -> bool:
        for levels in (self.row_levels, self.norm_levels):
            for lo, hi in zip(levels, levels[1:]):
                if lo.shape[-1] % 2:
                    lo = np.concatenate([lo, np.zeros(lo.shape[:-1] + (1,))], axis=-1)
                sums = lo[..., 0::2] + lo[..., 1::2]
                if not np.allclose(sums, hi, rtol=rtol, atol=0.0):
                    return False
        return bool(np.allclose(self.norm_levels[0], self.row_norms_sq, rtol=rtol, atol=0.0))


def build_qram(a) -> QramTree:
    entries = a.entries if isinstance(a, LowRankMatrix) else np.asarray(a, dtype=float)
    if entries.ndim != 2:
        raise ParameterError("QRAM input must be a 2-D matrix")
    sq = entries**2
    zero = np.flatnonzero(~np.any(entries != 0.0, axis=1))
    if zero.size:
        raise DegenerateInputError(int(zero[0]))
    row_levels = _tree_levels(sq)
    norm_levels = _tree_levels(row_levels[-1][:, 0].copy())
    signs = np.where(entries < 0, -1.0, 1.0)
    return QramTree(row_levels, signs, norm_levels)


def qram_row_state(tree: QramTree, i: int) -> np.ndarray:
    m, _ = tree.shape
    if not 0 <= i < m:
        raise IndexError(f"row index {i} out of range for m={m}")
    leaves = tree.row_levels[0][i]
    return tree.row_signs[i] * np.sqrt(leaves / tree.row_norms_sq[i])


def qram_norm_state(tree: QramTree) -> np.ndarray:
    return np.sqrt(tree.norm_levels[0] / tree.frobenius_sq)


def gram_matrix(a, indices) -> np.ndarray:
    """Gram matrix of the unit-normalized rows ``a[indices]``."""
    entries = a.entries if isinstance(a, LowRankMatrix) else np.asarray(a, dtype=float)
    rows = entries[list(indices)]
    norms = np.linalg.norm(rows, axis=1)
    for pos, nrm in enumerate(norms):
        if nrm == 0.0:
            raise DegenerateInputError(int(list(indices)[pos]))
    unit = rows / norms[:, None]
    c = unit @ unit.T
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 1.0)
    return c


def sigma_min(c: np.ndarray) -> float:
    if c.size == 0:
        return 1.0
    return float(np.linalg.eigvalsh(c)[0])


def cholesky_det(c: np.ndarray) -> float:
    """Determinant of a positive-definite matrix as the product of squared pivots."""
    if c.size == 0:
        return 1.0
    try:
        lower = np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        raise DegenerateBasisError("Gram matrix is not positive definite") from None
    return float(np.prod(np.diag(lower)) ** 2)


def gs_coefficients(c_ell: np.ndarray, c_prev_det: float) -> tuple[np.ndarray, float]:
    """Coefficients of the newest orthonormal vector in the unit-row basis.

    Returns ``(z, Z)`` where ``Z = sqrt(det C_l / det C_{l-1})`` is the residual
    norm of the newest row and ``z = Z * C_l^{-1} e_l``.
    """
    c_ell = np.atleast_2d(np.asarray(c_ell, dtype=float))
    ell = c_ell.shape[0]
    if sigma_min(c_ell) <= PD_TOL:
        raise DegenerateBasisError(f"C_{ell} is singular (sampled rows are dependent)", index=ell - 1)
    factor = scipy.linalg.cho_factor(c_ell, lower=True)
    det = float(np.prod(np.diag(factor[0])) ** 2)
    z_norm = float(np.sqrt(det / c_prev_det))
    e = np.zeros(ell)
    e[-1] = 1.0
    return z_norm * scipy.linalg.cho_solve(factor, e), z_norm


def basis_transform(z: np.ndarray, a: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    a = np.asarray(a, dtype=float)
    if z.ndim != 2 or z.shape[1] != a.shape[0]:
        raise ParameterError(f"cannot multiply {z.shape} by vector of length {a.shape[0]}")
    return z @ a


@dataclass
class GramBasis:
    """Sampled row indices with their Gram matrix, coefficients and orthonormal basis.

    Grows one index at a time through :meth:`extend`.
    """

    unit_rows: np.ndarray  # all unit rows of A, shape (m, n)
    indices: list = field(default_factory=list)
    gram: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    coeffs: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    residual_norms: list = field(default_factory=list)
    dets: list = field(default_factory=list)

    @classmethod
    def empty(cls, a) -> "GramBasis":
        if isinstance(a, QramTree):
            unit = a.unit_rows()
        else:
            entries = a.entries if isinstance(a, LowRankMatrix) else np.asarray(a, dtype=float)
            norms = np.linalg.norm(entries, axis=1)
            zero = np.flatnonzero(norms == 0.0)
            if zero.size:
                raise DegenerateInputError(int(zero[0]))
            unit = entries / norms[:, None]
        return cls(unit_rows=unit)

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def selected_rows(self) -> np.ndarray:
        return self.unit_rows[self.indices]

    @property
    def ortho_basis(self) -> np.ndarray:
        """Rows t_j, i.e. ``Z^T S_hat``."""
        return self.coeffs.T @ self.selected_rows

    def z_column(self, j: int) -> np.ndarray:
        """Nonzero part of coefficient column j (1-based)."""
        return self.coeffs[:j, j - 1]

    def sigma_min(self) -> float:
        return sigma_min(self.gram)

    def extend(self, index: int) -> None:
        index = int(index)
        new_row = self.unit_rows[index]
        ell = len(self.indices) + 1
        cross = self.selected_rows @ new_row
        gram = np.empty((ell, ell))
        gram[:-1, :-1] = self.gram
        gram[-1, :-1] = gram[:-1, -1] = cross
        gram[-1, -1] = 1.0
        prev_det = self.dets[-1] if self.dets else 1.0
        try:
            z, z_norm = gs_coefficients(gram, prev_det)
        except DegenerateBasisError as exc:
            raise DegenerateBasisError(str(exc), index=index) from None
        coeffs = np.zeros((ell, ell))
        coeffs[:-1, :-1] = self.coeffs
        coeffs[:, -1] = z
        self.indices.append(index)
        self.gram, self.coeffs = gram, coeffs
        self.residual_norms.append(z_norm)
        self.dets.append(prev_det * z_norm**2)

    def to_dict(self) -> dict:
        return {
            "indices": [int(i) for i in self.indices],
            "gram": self.gram.tolist(),
            "coeffs": self.coeffs.tolist(),
            "residual_norms": [float(x) for x in self.residual_norms],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def basis_from_indices(a, indices) -> GramBasis:
    basis = GramBasis.empty(a)
    for i in indices:
        basis.extend(i)
    return basis
