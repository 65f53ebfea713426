"""Restricted-likelihood quantities evaluated from rotated data.

Everything here runs in O(n p^2 + p^3) per evaluation point and never
forms an n x n matrix.  With eigenvalues lam_i and weights
w_i = 1 / (h2 * lam_i + 1 - h2), the covariance in the rotated basis is
sigma2 * diag(1 / w_i), so generalized least squares, the restricted
log-likelihood, the score, and the information matrix all reduce to
weighted sums plus p x p solves.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lu_factor, lu_solve, solve_triangular

from .errors import NumericalOverflow, SingularGram, SingularInformation
from .preprocess import RotatedData

SINGULAR_INFO_RTOL = 1e-12


@dataclass(frozen=True)
class EvalPoint:
    """Evaluation point; sigma2=None means "profile it out"."""

    h2: float
    sigma2: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.h2 < 1.0:
            raise ValueError(f"h2 must lie in [0, 1), got {self.h2}")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")


class _GramFactor:
    """Factorization of the weighted Gram matrix X^T V2^{-1} X.

    Cholesky when possible, pivoted LU as fallback; numerically singular
    matrices raise SingularGram.
    """

    def __init__(self, gram: np.ndarray):
        self.p = gram.shape[0]
        self._cho = None
        self._lu = None
        try:
            self._cho = cho_factor(gram, lower=True)
        except LinAlgError:
            lu, piv = lu_factor(gram)
            diag = np.abs(np.diag(lu))
            if diag.size and diag.min() <= self.p * np.finfo(float).eps * diag.max():
                raise SingularGram(
                    "weighted Gram matrix X^T V2^{-1} X is numerically singular"
                ) from None
            self._lu = (lu, piv)
            sign, logdet = np.linalg.slogdet(gram)
            if sign <= 0:
                raise SingularGram("weighted Gram matrix is not positive definite")
            self._logdet = logdet

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._cho is not None:
            return cho_solve(self._cho, rhs)
        return lu_solve(self._lu, rhs)

    def quadform_diag(self, x: np.ndarray) -> np.ndarray:
        """Diagonal entries x_i^T G^{-1} x_i for the rows x_i of x."""
        if self._cho is not None:
            half = solve_triangular(self._cho[0], x.T, lower=True)
            return np.einsum("ji,ji->i", half, half)
        solved = self.solve(x.T)
        return np.einsum("ij,ji->i", x, solved)

    @property
    def logdet(self) -> float:
        if self._cho is not None:
            return 2.0 * float(np.sum(np.log(np.diag(self._cho[0]))))
        return float(self._logdet)


@dataclass(frozen=True, eq=False)
class ProfileState:
    """GLS quantities at a fixed h2 with sigma2 profiled out.

    q_diag holds the diagonal of the weighted projector complement; its
    entries lie in [0, 1] and sum to n - p.
    """

    h2: float
    weights: np.ndarray
    beta_tilde: np.ndarray
    residuals: np.ndarray
    q_diag: np.ndarray
    sigma2_tilde: float
    logdet_gram: float
    _factor: Optional[_GramFactor] = field(repr=False, default=None)


def profile(rd: RotatedData, h2: float) -> ProfileState:
    """Weighted least squares at fixed h2 and the profile variance.

    Solves (X^T V2^{-1} X) beta = X^T V2^{-1} Y with V2 diagonal, then
    forms residuals, the projector-complement diagonal, and the profile
    variance (residual weighted sum of squares over n - p).

    Raises:
        NumericalOverflow: a weight denominator is not strictly positive.
        SingularGram: the weighted Gram matrix is numerically singular.
    """
    if not 0.0 <= h2 < 1.0:
        raise ValueError(f"h2 must lie in [0, 1), got {h2}")
    lam = rd.lambdas
    n, p = rd.n, rd.p
    # 1 + h2*(lam - 1) is algebraically h2*lam + 1 - h2 with less cancellation
    # for h2 near 1 and lam near 0.
    denom = 1.0 + h2 * (lam - 1.0)
    if np.any(denom <= 0.0):
        raise NumericalOverflow(f"nonpositive variance weight denominator at h2={h2}")
    weights = 1.0 / denom

    if p > 0:
        x = rd.x_rotated
        xw = x * weights[:, None]
        factor = _GramFactor(x.T @ xw)
        beta = factor.solve(xw.T @ rd.y_rotated)
        residuals = rd.y_rotated - x @ beta
        q_diag = 1.0 - weights * factor.quadform_diag(x)
        logdet_gram = factor.logdet
    else:
        factor = None
        beta = np.empty(0)
        residuals = rd.y_rotated
        q_diag = np.ones(n)
        logdet_gram = 0.0

    sigma2_tilde = float(weights @ (residuals * residuals)) / (n - p)
    return ProfileState(
        h2=h2,
        weights=weights,
        beta_tilde=beta,
        residuals=residuals,
        q_diag=q_diag,
        sigma2_tilde=sigma2_tilde,
        logdet_gram=logdet_gram,
        _factor=factor,
    )


def restricted_loglik(rd: RotatedData, pt: EvalPoint) -> float:
    """Restricted log-likelihood at (h2, sigma2), additive constants dropped.

    With sigma2 absent the profile variance is substituted, giving the
    profile restricted log-likelihood of h2.
    """
    ps = profile(rd, pt.h2)
    n, p = rd.n, rd.p
    sigma2 = ps.sigma2_tilde if pt.sigma2 is None else pt.sigma2
    quad = (n - p) * ps.sigma2_tilde / sigma2
    logdet_v2 = -float(np.sum(np.log(ps.weights)))
    return -0.5 * ((n - p) * math.log(sigma2) + logdet_v2 + ps.logdet_gram + quad)


@dataclass(frozen=True)
class ScoreInfo:
    """Score vector and restricted information entries at one point."""

    h2: float
    sigma2: float
    u1: float
    u2: float
    i11: float
    i12: float
    i22: float
    det: float

    @property
    def leading_inverse(self) -> float:
        """Leading element of the inverse information, i22 / det."""
        return self.i22 / self.det


def _score_info_from_profile(ps: ProfileState, rd: RotatedData, sigma2: float) -> ScoreInfo:
    n, p = rd.n, rd.p
    lam = rd.lambdas
    w = ps.weights
    d = (lam - 1.0) * w
    r2w = ps.residuals * ps.residuals * w

    u1 = 0.5 * float(d @ (r2w / sigma2 - ps.q_diag))
    u2 = 0.5 * (-(n - p) / sigma2 + float(np.sum(r2w)) / sigma2**2)

    i22 = (n - p) / (2.0 * sigma2**2)
    i12 = float(ps.q_diag @ d) / (2.0 * sigma2)
    tr_d2 = float(d @ d)
    if p > 0:
        tr_pd2 = float((1.0 - ps.q_diag) @ (d * d))
        b = rd.x_rotated.T @ (rd.x_rotated * (w * d)[:, None])
        m = ps._factor.solve(b)
        tr_pdpd = float(np.sum(m * m.T))
    else:
        tr_pd2 = 0.0
        tr_pdpd = 0.0
    i11 = 0.5 * (tr_d2 - 2.0 * tr_pd2 + tr_pdpd)
    det = i11 * i22 - i12 * i12
    return ScoreInfo(h2=ps.h2, sigma2=sigma2, u1=u1, u2=u2, i11=i11, i12=i12, i22=i22, det=det)


def score_info(rd: RotatedData, pt: EvalPoint, check_singular: bool = True) -> ScoreInfo:
    """Score vector and 2x2 restricted information at one point.

    The information entries use only diagonal weighted sums plus the p x p
    trace identity tr(P D P D) = tr(A B A B) with A the inverse weighted
    Gram and B = X^T V2^{-1/2} D V2^{-1/2} X, so no n x n matrix is formed.

    Raises:
        SingularInformation: determinant at or below the degeneracy
            threshold (check_singular=True), which happens exactly when
            the projected kernel is proportional to the identity.
    """
    ps = profile(rd, pt.h2)
    sigma2 = ps.sigma2_tilde if pt.sigma2 is None else pt.sigma2
    info = _score_info_from_profile(ps, rd, sigma2)
    if check_singular and _is_singular(info):
        raise SingularInformation(
            f"information matrix is numerically singular at h2={pt.h2} "
            "(projected kernel proportional to the identity)"
        )
    return info


def _is_singular(info: ScoreInfo) -> bool:
    return info.det <= SINGULAR_INFO_RTOL * info.i11 * info.i22


def t_stat_joint(rd: RotatedData, h2: float, sigma2: float) -> float:
    """Quadratic score statistic U^T I^{-1} U for (h2, sigma2) jointly.

    h2 = 1 returns +inf so confidence regions over [0, 1] are well defined.
    """
    if h2 == 1.0:
        return math.inf
    info = score_info(rd, EvalPoint(h2=h2, sigma2=sigma2))
    # closed-form 2x2 inverse through the adjugate
    quad = info.u1**2 * info.i22 - 2.0 * info.u1 * info.u2 * info.i12 + info.u2**2 * info.i11
    return quad / info.det


def t_stat_h2(rd: RotatedData, h2: float) -> float:
    """Profile score statistic U1^2 * I^{11} for h2 alone; +inf at h2 = 1."""
    if h2 == 1.0:
        return math.inf
    info = score_info(rd, EvalPoint(h2=h2))
    return info.u1**2 * info.i22 / info.det


def s_stat_h2(rd: RotatedData, h2: float) -> float:
    """Signed square root of the profile statistic; sign follows the score."""
    info = score_info(rd, EvalPoint(h2=h2))
    return info.u1 * math.sqrt(info.i22 / info.det)
