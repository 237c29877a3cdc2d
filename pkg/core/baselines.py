"""
Baseline completion methods
SoftImpute (iterated singular value thresholding) and user-based kNN
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg, sparse

from core.errors import ArgumentError, NumericalError
from core.imc import LabeledLike, labeled_arrays
from utils.rng import generator
from utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

# Lambda multipliers of ||P_Omega(X)|| / sqrt(N) tried by select_softimpute_lambda
LAMBDA_MULTIPLIERS = (0.5, 1.0, 2.0, 5.0, 10.0, 20.0)


class SoftImputeConfig(BaseModel):
    """
    SoftImpute settings

    Attributes:
        lam: Soft-threshold level (JSON key "lambda")
        max_rank: Keep at most this many singular values per step (None = no cap)
        max_iters: Iteration cap
        tolerance: Relative squared change ||Z_new - Z||^2 / ||Z||^2 that stops
    """

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    lam: float = Field(1.0, ge=0, alias="lambda")
    max_rank: Optional[int] = Field(None, ge=1)
    max_iters: int = Field(100, ge=1)
    tolerance: float = Field(1e-5, gt=0)


class KnnConfig(BaseModel):
    """User-based kNN settings"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    k: int = Field(40, ge=1)
    min_overlap: int = Field(3, ge=1)
    fallback: Literal["user-mean", "global-mean"] = "user-mean"


@dataclass(frozen=True)
class SoftImputeResult:
    """Completed matrix plus convergence information"""

    completion: np.ndarray
    converged: bool
    iterations: int
    objective_trace: np.ndarray


@dataclass(frozen=True)
class LambdaSelection:
    """Chosen SoftImpute lambda and the validation RMSE of every candidate"""

    lam: float
    scores: Dict[float, float]
    scale: float


def svt(matrix: np.ndarray, lam: float, max_rank: Optional[int] = None) -> np.ndarray:
    """
    Singular value soft-thresholding: sigma_i <- max(sigma_i - lam, 0)

    Args:
        matrix: Input matrix
        lam: Threshold (>= 0)
        max_rank: Optional cap on the number of kept singular values

    Returns:
        Thresholded matrix of the same shape
    """
    if lam < 0:
        raise ArgumentError(f"lambda must be non-negative, got {lam}")
    matrix = np.asarray(matrix, dtype=float)
    try:
        u, s, vt = linalg.svd(matrix, full_matrices=False, lapack_driver="gesdd")
    except linalg.LinAlgError:
        try:
            u, s, vt = linalg.svd(matrix, full_matrices=False, lapack_driver="gesvd")
        except linalg.LinAlgError as e:
            raise NumericalError(f"SVD failed inside svt (shape={matrix.shape}): {e}") from e

    shrunk = np.maximum(s - lam, 0.0)
    keep = int(np.count_nonzero(shrunk))
    if max_rank is not None:
        keep = min(keep, max_rank)
    return (u[:, :keep] * shrunk[:keep]) @ vt[:keep]


def _observed_means(
    entries: np.ndarray, values: np.ndarray, n: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Duplicate cells are averaged
    flat = entries[:, 0] * n + entries[:, 1]
    cells, inverse = np.unique(flat, return_inverse=True)
    sums = np.bincount(inverse, weights=values)
    counts = np.bincount(inverse)
    rows, cols = np.divmod(cells, n)
    return rows, cols, sums / counts


def softimpute_fit(
    labeled: LabeledLike, m: int, n: int, cfg: Optional[SoftImputeConfig] = None
) -> SoftImputeResult:
    """
    Complete an m x n matrix by SoftImpute

    Iterates Z <- svt(P_Omega(X) + P_Omega_perp(Z), lambda) from Z = 0.

    Args:
        labeled: Observed entries and values
        m: Row count
        n: Column count
        cfg: SoftImpute settings

    Returns:
        SoftImputeResult; converged is False when max_iters was hit
    """
    cfg = cfg or SoftImputeConfig()
    entries, values = labeled_arrays(labeled)
    entries = ArrayValidator.require_entries(entries, m, n)
    if values.shape[0] == 0:
        raise ArgumentError("SoftImpute needs at least one observed entry")

    rows, cols, observed = _observed_means(entries, values, n)
    completion = np.zeros((m, n))
    trace = []
    converged = False
    iteration = 0

    for iteration in range(1, cfg.max_iters + 1):
        filled = completion.copy()
        filled[rows, cols] = observed
        updated = svt(filled, cfg.lam, cfg.max_rank)

        residual = updated[rows, cols] - observed
        nuclear = float(np.sum(linalg.svdvals(updated))) if cfg.lam > 0 else 0.0
        trace.append(0.5 * float(residual @ residual) + cfg.lam * nuclear)

        change = float(np.sum((updated - completion) ** 2))
        scale = max(float(np.sum(completion**2)), np.finfo(float).tiny)
        completion = updated
        if change / scale < cfg.tolerance:
            converged = True
            break

    if not converged:
        logger.warning(f"SoftImpute did not converge in {cfg.max_iters} iterations (lambda={cfg.lam:g})")
    else:
        logger.debug(f"SoftImpute converged after {iteration} iterations")

    return SoftImputeResult(
        completion=completion,
        converged=converged,
        iterations=iteration,
        objective_trace=np.asarray(trace),
    )


def select_softimpute_lambda(
    labeled: LabeledLike,
    m: int,
    n: int,
    cfg: Optional[SoftImputeConfig] = None,
    multipliers: Sequence[float] = LAMBDA_MULTIPLIERS,
    validation_fraction: float = 0.1,
    seed: int = 0,
) -> LambdaSelection:
    """
    Pick lambda from multipliers * ||P_Omega(X)|| / sqrt(N) by validation RMSE

    Args:
        labeled: Observed entries and values
        m, n: Matrix shape
        cfg: Remaining SoftImpute settings (lambda is overwritten)
        multipliers: Candidate multipliers
        validation_fraction: Share of the labeled entries held out
        seed: Seed of the validation split

    Returns:
        LambdaSelection
    """
    cfg = cfg or SoftImputeConfig()
    entries, values = labeled_arrays(labeled)
    entries = ArrayValidator.require_entries(entries, m, n)
    ArrayValidator.require_unit_interval(validation_fraction, "validation_fraction", open_ends=True)
    count = values.shape[0]
    held = int(round(validation_fraction * count))
    if held < 1 or held >= count:
        raise ArgumentError(f"cannot hold out {validation_fraction:g} of {count} labeled entries")

    rows, cols, observed = _observed_means(entries, values, n)
    observed_matrix = sparse.csr_matrix((observed, (rows, cols)), shape=(m, n))
    scale = float(linalg.svdvals(observed_matrix.toarray())[0]) / math.sqrt(count)

    order = generator(seed, "validation").permutation(count)
    valid_idx, train_idx = order[:held], order[held:]
    train = (entries[train_idx], values[train_idx])
    valid_entries, valid_values = entries[valid_idx], values[valid_idx]

    scores: Dict[float, float] = {}
    for multiplier in multipliers:
        lam = multiplier * scale
        result = softimpute_fit(train, m, n, cfg.model_copy(update={"lam": lam}))
        predictions = result.completion[valid_entries[:, 0], valid_entries[:, 1]]
        scores[lam] = float(np.sqrt(np.mean((predictions - valid_values) ** 2)))
        logger.info(f"SoftImpute lambda={lam:.4g} validation RMSE={scores[lam]:.4f}")

    best = min(scores, key=scores.get)
    return LambdaSelection(lam=best, scores=scores, scale=scale)


def _rating_matrix(
    entries: np.ndarray, values: np.ndarray, users: int, items: int
) -> sparse.csr_matrix:
    rows, cols, means = _observed_means(entries, values, items)
    return sparse.csr_matrix((means, (rows, cols)), shape=(users, items))


def knn_predict(
    labeled: LabeledLike,
    queries: Sequence[Sequence[int]],
    cfg: Optional[KnnConfig] = None,
    shape: Optional[Tuple[int, int]] = None,
) -> np.ndarray:
    """
    User-based kNN rating prediction

    Similarity is the cosine of mean-centered rating vectors restricted to
    co-rated items. A neighbor qualifies for (u, i) when it rated i, shares at
    least min_overlap items with u and has positive similarity. The prediction
    is the plain mean of the k most similar qualifying neighbors' ratings of i.

    Args:
        labeled: Training (user, item) entries and ratings
        queries: (q, 2) user-item pairs to predict
        cfg: kNN settings
        shape: (users, items); inferred from the indices when omitted

    Returns:
        (q,) predictions
    """
    cfg = cfg or KnnConfig()
    entries, values = labeled_arrays(labeled)
    if values.shape[0] == 0:
        raise ArgumentError("kNN needs at least one rating")
    queries = np.asarray(queries, dtype=np.int64).reshape(-1, 2)
    if shape is None:
        stacked = np.vstack([entries, queries])
        shape = (int(stacked[:, 0].max()) + 1, int(stacked[:, 1].max()) + 1)
    users, items = shape
    entries = ArrayValidator.require_entries(entries, users, items)
    queries = ArrayValidator.require_entries(queries, users, items)

    ratings = _rating_matrix(entries, values, users, items)
    rated = ratings.copy()
    rated.data = np.ones_like(rated.data)

    per_user = np.asarray(rated.sum(axis=1)).ravel()
    user_means = np.divide(
        np.asarray(ratings.sum(axis=1)).ravel(),
        per_user,
        out=np.zeros(users),
        where=per_user > 0,
    )
    global_mean = float(ratings.data.mean())

    centered = ratings.copy()
    centered.data = centered.data - np.repeat(user_means, np.diff(centered.indptr))
    squared = centered.multiply(centered).tocsr()

    # Co-rated dot products and norms restricted to co-rated items
    numerator = (centered @ centered.T).toarray()
    norms = (squared @ rated.T).toarray()
    overlap = (rated @ rated.T).toarray()
    denominator = np.sqrt(norms * norms.T)
    similarity = np.divide(numerator, denominator, out=np.zeros_like(numerator), where=denominator > 0)
    np.fill_diagonal(similarity, 0.0)

    by_item = ratings.tocsc()
    predictions = np.empty(queries.shape[0])
    for q, (user, item) in enumerate(queries):
        start, end = by_item.indptr[item], by_item.indptr[item + 1]
        raters = by_item.indices[start:end]
        scores = by_item.data[start:end]
        sims = similarity[user, raters]
        ok = (raters != user) & (overlap[user, raters] >= cfg.min_overlap) & (sims > 0)

        if np.any(ok):
            candidates = np.nonzero(ok)[0]
            # Stable sort keeps lower user indices first among ties
            ranked = candidates[np.argsort(-sims[candidates], kind="stable")][: cfg.k]
            predictions[q] = float(np.mean(scores[ranked]))
        elif cfg.fallback == "user-mean" and per_user[user] > 0:
            predictions[q] = user_means[user]
        else:
            predictions[q] = global_mean

    return predictions
