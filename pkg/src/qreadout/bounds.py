"""Closed-form quantities: probability bounds, spectral bounds and budgets."""
from __future__ import annotations

import math

import numpy as np

from .errors import ParameterError


def epsilon_budget(r: int, kappa: float) -> float:
    """Per-reflection error tolerance kappa^(-2r) / (3 r^5)."""
    if r < 1 or kappa < 1:
        raise ParameterError(f"need r >= 1 and kappa >= 1, got r={r}, kappa={kappa}")
    return kappa ** (-2 * r) / (3.0 * r**5)


def pl_bounds(singular_values, ell: int) -> tuple[float, float]:
    """Interval containing the post-selection probability of round ``ell``.

    Lower end: mass of the r - ell smallest squared singular values.
    Upper end: mass of the r - ell largest ones.  Both are fractions of |A|_F^2.
    """
    s2 = np.sort(np.asarray(singular_values, dtype=float) ** 2)[::-1]
    r = s2.size
    if not 0 <= ell <= r:
        raise ParameterError(f"ell={ell} outside [0, {r}]")
    total = s2.sum()
    return float(s2[ell:].sum() / total), float(s2[: r - ell].sum() / total)


def pl_bounds_top_ell(singular_values, ell: int) -> tuple[float, float]:
    """Same interval but with the upper end summing the ell largest values."""
    s2 = np.sort(np.asarray(singular_values, dtype=float) ** 2)[::-1]
    total = s2.sum()
    return float(s2[ell:].sum() / total), float(s2[:ell].sum() / total)


def sigma_inverse_bound(r: int, ell: int, kappa: float) -> float:
    """Upper bound on E[1 / sigma_min(C_{ell+1})] under adaptive sampling."""
    if not 0 <= ell < r:
        raise ParameterError(f"need 0 <= ell < r, got ell={ell}, r={r}")
    return (ell + 1) * r / (r - ell) * kappa ** (2 * ell)


def sigma_bound(r: int, ell: int, kappa: float) -> float:
    """Lower bound on E[sigma_min(C_{ell+1})] under adaptive sampling."""
    return 1.0 / sigma_inverse_bound(r, ell, kappa)


def good_basis_threshold(r: int, kappa: float) -> float:
    return 1.0 / (2.0 * r**2 * kappa ** (2 * r - 2))


def good_basis_probability(r: int, kappa: float) -> float:
    """Lower bound on the chance that one noisy run clears the threshold."""
    return kappa ** (-2 * r + 2) / (6.0 * r**2)


def restart_budget(r: int, kappa: float, delta: float) -> int:
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    return max(1, math.ceil(math.log(1.0 / delta) / good_basis_probability(r, kappa)))


def overlap_tolerance(eps: float, r: int) -> float:
    """Per-estimate accuracy eps / (3r) that yields l2 error eps overall."""
    return eps / (3.0 * r)


def shot_budget(eps: float, r: int, c: float = 4.0) -> int:
    return math.ceil(c / overlap_tolerance(eps, r) ** 2)
