"""Row/column correlation estimation and factor-loading construction.

The dependence model treats the ``p x q`` data matrices as doubly correlated:
one correlation matrix across rows and one across columns, with the full
dependence of ``vec(X)`` given by their Kronecker product.  Both correlation
matrices are estimated from standardised residuals; their eigensystems supply
two kinds of factor loadings used by the FDP estimators:

* full Kronecker-spectrum loadings (top eigenpairs of the product matrix), and
* truncated two-sided loadings (top eigenpairs of each side separately).

Both estimators have exactly unit diagonals by construction: the standardised
residual sum of squares at each cell telescopes to ``n + m - 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVariance, InvalidFactorCount, NonPositiveEigenvalue
from .linalg import EigenSystem, KronEigenIndex, kron_eigenpairs, sym_eigen, vec
from .teststats import TwoSampleDataset

#: Squared loading row norms are clamped below 1 by this margin so the
#: variance-inflation factor 1 / sqrt(1 - norm^2) stays finite.
NORM_SQ_CEIL = 1.0 - 1e-8

#: Eigenvalues below this fraction of the largest are unusable for ratio
#: selection (their ratios are numerical noise).
RATIO_FLOOR_REL = 1e-12


def default_max_factors(n_total: int) -> int:
    """Cap on data-driven factor counts: ``floor(0.2 * n_total)``."""
    return int(0.2 * n_total)


@dataclass(frozen=True)
class CorrEstimates:
    """Estimated row and column correlation matrices with their eigensystems.

    Attributes
    ----------
    sigma1 : numpy.ndarray
        Row correlation estimate, shape ``(p, p)``, unit diagonal.
    sigma2 : numpy.ndarray
        Column correlation estimate, shape ``(q, q)``, unit diagonal.
    eig1, eig2 : EigenSystem
        Eigendecompositions of ``sigma1`` and ``sigma2``.
    n_total : int
        Combined sample size ``n + m`` behind the estimates; used to cap
        data-driven factor counts downstream.
    """

    sigma1: np.ndarray
    sigma2: np.ndarray
    eig1: EigenSystem
    eig2: EigenSystem
    n_total: int

    @property
    def p(self) -> int:
        return int(self.sigma1.shape[0])

    @property
    def q(self) -> int:
        return int(self.sigma2.shape[0])


def estimate_correlations(ds: TwoSampleDataset, sigma_hat: np.ndarray) -> CorrEstimates:
    """Estimate both correlation matrices from standardised residuals.

    Each observation is centred at its group mean and divided cell-wise by
    ``sigma_hat``; the row estimate averages outer products of the residual
    columns (normalised by ``(n + m - 2) * q``) and the column estimate does
    the same across rows (normalised by ``(n + m - 2) * p``).

    Parameters
    ----------
    ds : TwoSampleDataset
        The two group stacks.
    sigma_hat : numpy.ndarray
        Cell-wise pooled standard deviations, shape ``(p, q)``, all positive.
    """
    sig = np.asarray(sigma_hat, dtype=np.float64)
    if sig.shape != (ds.p, ds.q):
        raise ValueError(f"sigma_hat shape {sig.shape} does not match data ({ds.p}, {ds.q})")
    bad = np.argwhere(sig <= 0.0)
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise DegenerateVariance(i, j)

    resid = np.concatenate(
        [
            ds.treatment - ds.treatment.mean(axis=0),
            ds.control - ds.control.mean(axis=0),
        ]
    )
    resid /= sig
    df = ds.n + ds.m - 2
    s1 = np.tensordot(resid, resid, axes=[(0, 2), (0, 2)]) / (df * ds.q)
    s2 = np.tensordot(resid, resid, axes=[(0, 1), (0, 1)]) / (df * ds.p)
    s1 = 0.5 * (s1 + s1.T)
    s2 = 0.5 * (s2 + s2.T)
    return CorrEstimates(
        sigma1=s1,
        sigma2=s2,
        eig1=sym_eigen(s1),
        eig2=sym_eigen(s2),
        n_total=ds.n + ds.m,
    )


def eigenvalue_ratio(values, max_factors: int) -> int:
    """Pick a factor count by the largest ratio of adjacent eigenvalues.

    Returns the 1-based position ``l`` in ``1..max_factors`` maximising
    ``values[l-1] / values[l]``; ties go to the smallest position.  Positions
    whose eigenvalue falls below ``RATIO_FLOOR_REL`` times the largest are
    excluded (ratios against a numerically null tail are meaningless), which
    can lower the effective cap.

    Raises
    ------
    NonPositiveEigenvalue
        If the leading eigenvalue is not positive, or no usable adjacent pair
        remains after discarding the numerically null tail.
    """
    vals = np.asarray(values, dtype=np.float64).ravel()
    if max_factors < 1:
        raise ValueError(f"max_factors must be >= 1, got {max_factors}")
    if vals.size < 2:
        raise NonPositiveEigenvalue("need at least two eigenvalues for ratio selection")
    if vals[0] <= 0.0:
        raise NonPositiveEigenvalue(f"leading eigenvalue is {vals[0]:.6g}")
    cutoff = RATIO_FLOOR_REL * vals[0]
    usable = int(np.count_nonzero(vals >= cutoff))
    limit = min(max_factors, usable - 1, vals.size - 1)
    if limit < 1:
        raise NonPositiveEigenvalue(
            "no usable adjacent eigenvalue pair above the relative floor"
        )
    prefix = vals[: limit + 1]
    if np.any(prefix <= 0.0):
        raise NonPositiveEigenvalue("non-positive eigenvalue inside the examined prefix")
    return int(np.argmax(prefix[:-1] / prefix[1:])) + 1


@dataclass(frozen=True)
class NoodleLoadings:
    """Top eigenpairs of the Kronecker product of both correlation estimates.

    Factor ``k`` has weight ``values[k]`` (the eigenvalue product) and a
    separable eigenvector: the Kronecker product of column ``idx2[k]`` of the
    second eigensystem with column ``idx1[k]`` of the first.  Loading rows are
    never materialised as a dense ``(p*q, h)`` matrix; everything downstream
    uses the separable form.

    ``row_norms_sq[l]`` is the squared loading row norm
    ``sum_k values[k] * rho_{l,k}^2`` at vec-index ``l``, clamped to
    ``[0, NORM_SQ_CEIL]``.
    """

    eig1: EigenSystem
    eig2: EigenSystem
    values: np.ndarray
    idx1: np.ndarray
    idx2: np.ndarray
    row_norms_sq: np.ndarray

    @property
    def h(self) -> int:
        return int(self.values.shape[0])

    @property
    def p(self) -> int:
        return self.eig1.dim

    @property
    def q(self) -> int:
        return self.eig2.dim

    def vector_factors(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-factor eigenvector columns ``(p, h)`` and ``(q, h)``."""
        return self.eig1.vectors[:, self.idx1], self.eig2.vectors[:, self.idx2]


def _noodle_from_eigen(
    e1: EigenSystem, e2: EigenSystem, kron: KronEigenIndex, h: int
) -> NoodleLoadings:
    p, q = e1.dim, e2.dim
    if h < 0 or h > p * q:
        raise InvalidFactorCount(f"factor count must be in [0, {p * q}], got {h}")
    values = kron.values[:h].copy()
    idx1 = kron.idx1[:h].copy()
    idx2 = kron.idx2[:h].copy()
    if h == 0:
        norms = np.zeros(p * q)
    else:
        v_sq = e1.vectors[:, idx1] ** 2
        g_sq = e2.vectors[:, idx2] ** 2
        norms = vec((v_sq * values) @ g_sq.T)
    return NoodleLoadings(
        eig1=e1,
        eig2=e2,
        values=values,
        idx1=idx1,
        idx2=idx2,
        row_norms_sq=np.clip(norms, 0.0, NORM_SQ_CEIL),
    )


def build_noodle_loadings(
    ce: CorrEstimates, h: int | None = None, max_factors: int | None = None
) -> NoodleLoadings:
    """Top-``h`` Kronecker-spectrum loadings from fitted correlations.

    With ``h=None`` the count is selected by :func:`eigenvalue_ratio` over the
    sorted eigenvalue products, capped at ``max_factors`` (default
    ``floor(0.2 * n_total)``).
    """
    kron = kron_eigenpairs(ce.eig1, ce.eig2)
    if h is None:
        cap = default_max_factors(ce.n_total) if max_factors is None else max_factors
        h = eigenvalue_ratio(kron.values, cap)
    return _noodle_from_eigen(ce.eig1, ce.eig2, kron, h)


def noodle_loadings_from_corr(sigma1, sigma2, h: int) -> NoodleLoadings:
    """Loadings built directly from known correlation matrices.

    Used by the oracle estimators and by tests; factor count is explicit
    because there is no sample size to drive a data-based cap.
    """
    e1 = sym_eigen(sigma1)
    e2 = sym_eigen(sigma2)
    return _noodle_from_eigen(e1, e2, kron_eigenpairs(e1, e2), h)


@dataclass(frozen=True)
class SandwichLoadings:
    """Truncated two-sided loadings: top eigenpairs of each side separately.

    ``left`` holds columns ``sqrt(lam_b) * nu_b`` for ``b < k1`` (shape
    ``(p, k1)``) and ``right`` holds columns ``sqrt(xi_a) * gamma_a`` for
    ``a < k2`` (shape ``(q, k2)``).  The squared loading row norm at cell
    ``(r, c)`` factorises as ``left_norm_part[r] * right_norm_part[c]``.
    """

    eig1: EigenSystem
    eig2: EigenSystem
    k1: int
    k2: int
    left: np.ndarray
    right: np.ndarray
    left_norm_part: np.ndarray
    right_norm_part: np.ndarray

    @property
    def p(self) -> int:
        return self.eig1.dim

    @property
    def q(self) -> int:
        return self.eig2.dim

    def row_norms_sq(self) -> np.ndarray:
        """Clamped squared row norms as a ``(p, q)`` cell matrix."""
        return np.clip(
            np.outer(self.left_norm_part, self.right_norm_part), 0.0, NORM_SQ_CEIL
        )


def _sandwich_from_eigen(e1: EigenSystem, e2: EigenSystem, k1: int, k2: int) -> SandwichLoadings:
    p, q = e1.dim, e2.dim
    if k1 < 0 or k1 > p:
        raise InvalidFactorCount(f"row factor count must be in [0, {p}], got {k1}")
    if k2 < 0 or k2 > q:
        raise InvalidFactorCount(f"column factor count must be in [0, {q}], got {k2}")
    lam = np.clip(e1.values[:k1], 0.0, None)
    xi = np.clip(e2.values[:k2], 0.0, None)
    left = e1.vectors[:, :k1] * np.sqrt(lam)
    right = e2.vectors[:, :k2] * np.sqrt(xi)
    return SandwichLoadings(
        eig1=e1,
        eig2=e2,
        k1=k1,
        k2=k2,
        left=left,
        right=right,
        left_norm_part=(left**2).sum(axis=1),
        right_norm_part=(right**2).sum(axis=1),
    )


def build_sandwich_loadings(
    ce: CorrEstimates,
    k1: int | None = None,
    k2: int | None = None,
    max_factors: int | None = None,
) -> SandwichLoadings:
    """Two-sided loadings from fitted correlations.

    Factor counts default to :func:`eigenvalue_ratio` applied to each side's
    eigenvalues with the same cap as :func:`build_noodle_loadings`.
    """
    cap = default_max_factors(ce.n_total) if max_factors is None else max_factors
    if k1 is None:
        k1 = eigenvalue_ratio(ce.eig1.values, cap)
    if k2 is None:
        k2 = eigenvalue_ratio(ce.eig2.values, cap)
    return _sandwich_from_eigen(ce.eig1, ce.eig2, k1, k2)


def sandwich_loadings_from_corr(sigma1, sigma2, k1: int, k2: int) -> SandwichLoadings:
    """Two-sided loadings built directly from known correlation matrices."""
    return _sandwich_from_eigen(sym_eigen(sigma1), sym_eigen(sigma2), k1, k2)
