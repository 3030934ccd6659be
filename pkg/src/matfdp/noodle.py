"""FDP estimation from the full Kronecker spectrum ("noodle" estimator).

The statistic vector is modelled as ``vec(X) = F w + noise`` where the columns
of ``F`` are the top eigenvectors of the Kronecker product of both correlation
estimates, scaled by the square roots of their eigenvalues.  Because those
eigenvectors are orthonormal, the least-squares realised factors have the
closed form ``w_k = rho_k' vec(X) / sqrt(theta_k)`` and the fitted common
component is the orthogonal projection of ``vec(X)`` onto the factor span.

The FDP estimate at threshold ``t`` sums, over all cells, the conditional
probability that a null cell rejects given the common component:

    (1 / R) * sum_l [ Phi(a_l * (z + zeta_l)) + Phi(a_l * (z - zeta_l)) ]

with ``z = Phi^{-1}(t / 2)``, ``a_l = (1 - ||f_l||^2)^{-1/2}``, and ``zeta_l``
the fitted common component at cell ``l``.  With no factors the sum collapses
to ``p * q * t`` and the estimate is exactly ``p * q * t / R``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .covfactor import NoodleLoadings, noodle_loadings_from_corr
from .linalg import unvec, vec
from .teststats import TestMatrix
from .trimreg import TrimmedFit, TrimSpec, trimmed_l1_fit

_ESTIMATORS = ("least_squares", "trimmed_l1")


@dataclass(frozen=True)
class NoodleFit:
    """Realised factors and fitted common component for one statistic matrix.

    ``common_part`` holds the fitted factor contribution per cell, shape
    ``(p, q)``; ``factors`` the realised factor estimates, shape ``(h,)``.
    """

    loadings: NoodleLoadings
    factors: np.ndarray
    common_part: np.ndarray
    trim_fallback: bool = False


def _loading_row_accessor(
    loadings: NoodleLoadings, v1: np.ndarray, g1: np.ndarray
) -> callable:
    sqrt_theta = np.sqrt(np.clip(loadings.values, 0.0, None))
    p = loadings.p

    def rows(indices: np.ndarray) -> np.ndarray:
        r = indices % p
        c = indices // p
        return sqrt_theta * v1[r, :] * g1[c, :]

    return rows


def fit_noodle(
    x: TestMatrix,
    loadings: NoodleLoadings,
    estimator: str = "least_squares",
    trim: TrimSpec | None = None,
) -> NoodleFit:
    """Estimate realised factors and the common component.

    Parameters
    ----------
    x : TestMatrix
        Statistic matrix, shape matching the loadings.
    loadings : NoodleLoadings
        Top Kronecker eigenpairs.
    estimator : str
        ``"least_squares"`` for the closed-form projection, ``"trimmed_l1"``
        to refit the factors robustly on the low-magnitude cells.
    trim : TrimSpec, optional
        Trimming configuration for the robust path; defaults to
        ``TrimSpec()``.
    """
    if estimator not in _ESTIMATORS:
        raise ValueError(f"estimator must be one of {_ESTIMATORS}, got {estimator!r}")
    if (x.p, x.q) != (loadings.p, loadings.q):
        raise ValueError(
            f"statistic shape {(x.p, x.q)} does not match loadings "
            f"{(loadings.p, loadings.q)}"
        )
    h = loadings.h
    if h == 0:
        return NoodleFit(
            loadings=loadings,
            factors=np.empty(0),
            common_part=np.zeros((x.p, x.q)),
        )
    v1, g1 = loadings.vector_factors()
    sqrt_theta = np.sqrt(np.clip(loadings.values, 0.0, None))
    if estimator == "least_squares":
        proj = np.einsum("ik,ij,jk->k", v1, x.x, g1)
        with np.errstate(divide="ignore", invalid="ignore"):
            factors = np.where(sqrt_theta > 0.0, proj / sqrt_theta, 0.0)
        common = (v1 * proj) @ g1.T
        return NoodleFit(loadings=loadings, factors=factors, common_part=common)

    fit = trimmed_l1_fit(
        vec(x.x),
        _loading_row_accessor(loadings, v1, g1),
        h,
        trim if trim is not None else TrimSpec(),
    )
    common = (v1 * (sqrt_theta * fit.w)) @ g1.T
    return NoodleFit(
        loadings=loadings,
        factors=fit.w,
        common_part=common,
        trim_fallback=fit.used_fallback,
    )


def _plugin_sum(
    row_norms_sq: np.ndarray, common: np.ndarray, threshold: float
) -> np.ndarray:
    """Per-cell conditional rejection probabilities, same shape as ``common``."""
    z = ndtri(threshold / 2.0)
    a = 1.0 / np.sqrt(1.0 - row_norms_sq)
    return ndtr(a * (z + common)) + ndtr(a * (z - common))


def _finish(total: float, rejections: int, cells: int) -> float:
    if rejections <= 0:
        return 0.0
    return float(min(max(total / rejections, 0.0), cells / rejections))


def fdp_noodle(fit: NoodleFit, rejections: int, threshold: float) -> float:
    """Plug-in FDP estimate at ``threshold`` given ``rejections`` discoveries.

    Returns 0 when nothing is rejected.  With zero factors the estimate is
    exactly ``p * q * threshold / rejections``.  The result is clamped to
    ``[0, p * q / rejections]``.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    cells = fit.loadings.row_norms_sq.size
    if rejections <= 0:
        return 0.0
    if fit.loadings.h == 0:
        return _finish(cells * threshold, rejections, cells)
    terms = _plugin_sum(fit.loadings.row_norms_sq, vec(fit.common_part), threshold)
    return _finish(float(terms.sum()), rejections, cells)


def fdp_oracle_noodle(
    sigma1,
    sigma2,
    n_factors: int,
    factors,
    null_mask,
    rejections: int,
    threshold: float,
) -> float:
    """Oracle variant: known correlations, known realised factors, known nulls.

    The sum runs over true null cells only (``null_mask`` is ``True`` there),
    which is the quantity the plug-in estimate approximates from above by
    summing over every cell.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    loadings = noodle_loadings_from_corr(sigma1, sigma2, n_factors)
    mask = np.asarray(null_mask, dtype=bool)
    p, q = loadings.p, loadings.q
    if mask.shape != (p, q):
        raise ValueError(f"mask shape {mask.shape} does not match ({p}, {q})")
    if rejections <= 0:
        return 0.0
    cells = p * q
    if n_factors == 0:
        return _finish(float(np.count_nonzero(mask)) * threshold, rejections, cells)
    w = np.asarray(factors, dtype=np.float64).ravel()
    if w.size != n_factors:
        raise ValueError(f"expected {n_factors} realised factors, got {w.size}")
    v1, g1 = loadings.vector_factors()
    sqrt_theta = np.sqrt(np.clip(loadings.values, 0.0, None))
    common = (v1 * (sqrt_theta * w)) @ g1.T
    terms = _plugin_sum(
        unvec(loadings.row_norms_sq, p, q), common, threshold
    )
    return _finish(float(terms[mask].sum()), rejections, cells)
