"""
Assumption constants and generalization bounds
Evaluates the excess-risk bound of the two-step estimator and its ingredients
"""

import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import linalg

from core.errors import ArgumentError, UnboundedLossError
from core.imc import LossConstants, LossSpec
from core.subspace import spectral_diagnostics
from utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

LossLike = Union[LossSpec, LossConstants]


class AssumptionConstants(BaseModel):
    """
    Constants of the sampling distribution and the true side information

    Attributes:
        kappa1: max(max_i p_i m, max_j q_j n), marginal uniformity
        kappa2: smallest constant satisfying the side-information spectral condition
        kappa_star: ||P|| / eigengap
        gamma: max_ij P_ij m n
        p_star: largest row or column marginal
        x_star, y_star: largest row norms of X*, Y*
        script_p_star: max(sqrt(n/m) x*, sqrt(m/n) y*)
        r: nuclear_budget^2 / d^2
    """

    model_config = ConfigDict(frozen=True)

    kappa1: float
    kappa2: float
    kappa_star: float
    gamma: float
    p_star: float
    x_star: float
    y_star: float
    script_p_star: float
    r: float
    d: int
    spectral_norm: Optional[float] = None
    eigengap: Optional[float] = None


class BoundReport(BaseModel):
    """The four summands of the excess-risk bound and the M-condition"""

    model_config = ConfigDict(frozen=True)

    term_hoeffding: float
    term_labeled: float
    term_unlabeled: float
    term_cross: float
    total: float
    m_condition_threshold: float
    m_condition_met: bool
    delta: float
    appendix_form: bool = False


class ErrorRates(BaseModel):
    """Orders of magnitude of the unlabeled and labeled error terms"""

    model_config = ConfigDict(frozen=True)

    unlabeled_rate: float
    labeled_rate: float


def _max_row_norm(matrix: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(matrix, axis=1)))


def kappa2_constant(x_star_mat: np.ndarray, y_star_mat: np.ndarray) -> float:
    """
    Tight constant of ||X*||^2 <= x*^2 kappa2 m/d and ||Y*||^2 <= y*^2 kappa2 n/d

    Args:
        x_star_mat: m x d side information
        y_star_mat: n x d side information

    Returns:
        max of the two ratios
    """
    x_star_mat = np.asarray(x_star_mat, dtype=float)
    y_star_mat = np.asarray(y_star_mat, dtype=float)
    (m, d), n = x_star_mat.shape, y_star_mat.shape[0]
    x_star, y_star = _max_row_norm(x_star_mat), _max_row_norm(y_star_mat)
    if x_star == 0 or y_star == 0:
        raise ArgumentError("side information has an all-zero row norm bound")

    x_ratio = np.linalg.norm(x_star_mat, ord=2) ** 2 * d / (m * x_star**2)
    y_ratio = np.linalg.norm(y_star_mat, ord=2) ** 2 * d / (n * y_star**2)
    return float(max(x_ratio, y_ratio))


def assumption_constants(
    pmf: np.ndarray,
    x_star_mat: np.ndarray,
    y_star_mat: np.ndarray,
    nuclear_budget: float,
    d: int,
) -> AssumptionConstants:
    """
    Measure every constant the bound depends on

    Args:
        pmf: m x n sampling distribution
        x_star_mat: m x d true row side information
        y_star_mat: n x d true column side information
        nuclear_budget: Nuclear-norm budget of the core matrix
        d: Subspace dimension

    Returns:
        AssumptionConstants

    Raises:
        ArgumentError: On an invalid PMF or shape mismatch
        DegenerateEigengapError: If P has no eigengap at rank d
    """
    pmf = ArrayValidator.require_pmf(pmf)
    x_star_mat = np.asarray(x_star_mat, dtype=float)
    y_star_mat = np.asarray(y_star_mat, dtype=float)
    m, n = pmf.shape
    if x_star_mat.shape != (m, d) or y_star_mat.shape != (n, d):
        raise ArgumentError(
            f"side information must be {m}x{d} and {n}x{d}, got {x_star_mat.shape} and {y_star_mat.shape}"
        )
    if nuclear_budget < 0:
        raise ArgumentError(f"nuclear budget must be non-negative, got {nuclear_budget}")

    row_marginals = pmf.sum(axis=1)
    col_marginals = pmf.sum(axis=0)
    diagnostics = spectral_diagnostics(pmf, d)

    x_star = _max_row_norm(x_star_mat)
    y_star = _max_row_norm(y_star_mat)

    return AssumptionConstants(
        kappa1=float(max(row_marginals.max() * m, col_marginals.max() * n)),
        kappa2=kappa2_constant(x_star_mat, y_star_mat),
        kappa_star=diagnostics.condition,
        gamma=float(pmf.max() * m * n),
        p_star=float(max(row_marginals.max(), col_marginals.max())),
        x_star=x_star,
        y_star=y_star,
        script_p_star=max(math.sqrt(n / m) * x_star, math.sqrt(m / n) * y_star),
        r=nuclear_budget**2 / d**2,
        d=d,
        spectral_norm=diagnostics.spectral_norm,
        eigengap=diagnostics.eigengap,
    )


def _loss_constants(loss: LossLike) -> Tuple[float, float]:
    if not loss.bounded:
        raise UnboundedLossError(
            "the bound needs a bounded, Lipschitz loss (bounded-loss assumption); "
            "use kind 'clipped-squared' with a clip_range"
        )
    return loss.lipschitz, loss.loss_bound


def m_condition_threshold(kappa_star: float, script_p_star: float, m: int, n: int, delta: float) -> float:
    """Smallest unlabeled sample size M for which the bound holds"""
    return 470.0 * math.log(4.0 * (m + n) / delta) * kappa_star**2 * script_p_star**2 * (m + n)


def theorem_bound(
    constants: AssumptionConstants,
    m: int,
    n: int,
    M: int,
    N: int,
    delta: float,
    loss: LossLike,
    appendix_form: bool = False,
) -> BoundReport:
    """
    Evaluate the excess-risk bound term by term

    With appendix_form the Hoeffding coefficient is 2.5 and the labeled term
    uses the 8 (1 + 1/sqrt(N)) form; the unlabeled and cross terms coincide.

    Args:
        constants: Assumption constants (measured or assumed)
        m, n: Dimensions
        M: Unlabeled sample count
        N: Labeled sample count
        delta: Failure probability in (0, 1)
        loss: LossSpec or explicit LossConstants

    Returns:
        BoundReport

    Raises:
        UnboundedLossError: If the loss has infinite lipschitz or bound
    """
    if M < 1 or N < 1:
        raise ArgumentError(f"M and N must be at least 1, got M={M}, N={N}")
    ArrayValidator.require_unit_interval(delta, "delta", open_ends=True)
    lipschitz, loss_bound = _loss_constants(loss)

    c = constants
    d, r = c.d, c.r
    log_union = math.log(12.0 * (m + n) / delta)
    spectral = math.sqrt(c.kappa1 * c.kappa2) * math.log(2.0 * d * math.e) * math.sqrt(d * r / N)

    if appendix_form:
        term_hoeffding = 2.5 * loss_bound * math.log(6.0 / delta) / math.sqrt(N)
        term_labeled = 8.0 * lipschitz * c.script_p_star**2 * spectral * (1.0 + 1.0 / math.sqrt(N))
    else:
        term_hoeffding = 2.0 * loss_bound * math.log(6.0 / delta) / math.sqrt(N)
        term_labeled = 16.0 * lipschitz * c.script_p_star**2 * spectral

    term_unlabeled = (
        75.0 * c.script_p_star * lipschitz * c.kappa_star * c.kappa1 * log_union
        * math.sqrt((m + n) * r / M)
    )
    term_cross = (
        25.0 * c.script_p_star * lipschitz * c.kappa_star * log_union
        * math.sqrt((m + n) * c.gamma * r / (M * N))
    )

    threshold = m_condition_threshold(c.kappa_star, c.script_p_star, m, n, delta)
    if M < threshold:
        logger.debug(f"M={M} is below the sample-size condition {threshold:.3e}")

    return BoundReport(
        term_hoeffding=term_hoeffding,
        term_labeled=term_labeled,
        term_unlabeled=term_unlabeled,
        term_cross=term_cross,
        total=term_hoeffding + term_labeled + term_unlabeled + term_cross,
        m_condition_threshold=threshold,
        m_condition_met=M >= threshold,
        delta=delta,
        appendix_form=appendix_form,
    )


def imc_complexity_terms(pmf: np.ndarray, x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    """
    Distribution-weighted spectral terms of the IMC Rademacher bound

    kappa_l_i = sum_j P_ij ||Y_j||^2, kappa_r_j = sum_i P_ij ||X_i||^2,
    sigma1 = ||X^T diag(kappa_l) X||^(1/2), sigma2 = ||Y^T diag(kappa_r) Y||^(1/2)

    Returns:
        Tuple of (sigma1, sigma2)
    """
    pmf = np.asarray(pmf, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if pmf.shape != (x.shape[0], y.shape[0]) or x.shape[1] != y.shape[1]:
        raise ArgumentError(f"shapes do not line up: pmf {pmf.shape}, x {x.shape}, y {y.shape}")

    kappa_left = pmf @ np.sum(y * y, axis=1)
    kappa_right = pmf.T @ np.sum(x * x, axis=1)
    left = (x * kappa_left[:, None]).T @ x
    right = (y * kappa_right[:, None]).T @ y
    sigma1 = math.sqrt(max(float(linalg.eigvalsh(left)[-1]), 0.0))
    sigma2 = math.sqrt(max(float(linalg.eigvalsh(right)[-1]), 0.0))
    return sigma1, sigma2


def imc_excess_risk_bound(
    sigma1: float,
    sigma2: float,
    nuclear_budget: float,
    x_star: float,
    y_star: float,
    d: int,
    N: int,
    delta: float,
    loss: LossLike,
) -> float:
    """
    Excess-risk bound of IMC with fixed side information

    (8 l / sqrt(N)) B max(sigma1, sigma2) (1 + sqrt(log 2d))
    + (12 l / N) B x* y* (1 + log 2d) + b sqrt(log(2/delta) / (2N))
    """
    if N < 1:
        raise ArgumentError(f"N must be at least 1, got {N}")
    ArrayValidator.require_unit_interval(delta, "delta", open_ends=True)
    lipschitz, loss_bound = _loss_constants(loss)

    log_2d = math.log(2.0 * d)
    return (
        8.0 * lipschitz / math.sqrt(N) * nuclear_budget * max(sigma1, sigma2) * (1.0 + math.sqrt(log_2d))
        + 12.0 * lipschitz / N * nuclear_budget * x_star * y_star * (1.0 + log_2d)
        + loss_bound * math.sqrt(math.log(2.0 / delta) / (2.0 * N))
    )


def error_rates(
    constants: AssumptionConstants,
    m: int,
    n: int,
    M: int,
    N: int,
    loss: LossLike,
    gamma: Optional[float] = None,
) -> ErrorRates:
    """
    Rates of the two error sources without their absolute constants

    unlabeled: (l + b) kappa* P* kappa1 sqrt((m+n) r / M) (1 + sqrt(Gamma / N))
    labeled:   l P*^2 sqrt(kappa1 kappa2) sqrt(d r / N)
    """
    if M < 1 or N < 1:
        raise ArgumentError(f"M and N must be at least 1, got M={M}, N={N}")
    lipschitz, loss_bound = _loss_constants(loss)
    c = constants
    gamma = c.gamma if gamma is None else gamma

    unlabeled = (
        (lipschitz + loss_bound) * c.kappa_star * c.script_p_star * c.kappa1
        * math.sqrt((m + n) * c.r / M) * (1.0 + math.sqrt(gamma / N))
    )
    labeled = lipschitz * c.script_p_star**2 * math.sqrt(c.kappa1 * c.kappa2) * math.sqrt(c.d * c.r / N)
    return ErrorRates(unlabeled_rate=unlabeled, labeled_rate=labeled)
