"""
Subspace estimation from unlabeled samples
Empirical PMF, truncated SVD, side information and subspace diagnostics
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, sparse

from core.errors import ArgumentError, DegenerateEigengapError, NumericalError
from utils.rng import generator
from utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

# Largest min(m, n) handled by the dense LAPACK path
DENSE_SVD_LIMIT = 2000

# Randomized range finder settings above the dense limit
POWER_ITERATIONS = 10
OVERSAMPLING = 8

# Eigengaps below this are treated as zero
EIGENGAP_FLOOR = 1e-14

MatrixLike = Union[np.ndarray, sparse.spmatrix]


@dataclass(frozen=True)
class EmpiricalPMF:
    """
    Count matrix of unlabeled samples and its normalized view O_M

    Attributes:
        counts: Sparse m x n nonnegative integer matrix
        total: Number of samples M
        m, n: Ambient dimensions
    """

    counts: sparse.csr_matrix
    total: int
    m: int
    n: int

    @classmethod
    def from_dense_counts(cls, counts: np.ndarray) -> "EmpiricalPMF":
        counts = np.asarray(counts, dtype=np.int64)
        total = int(counts.sum())
        if total == 0:
            raise ArgumentError("empirical PMF needs at least one sample")
        m, n = counts.shape
        return cls(counts=sparse.csr_matrix(counts), total=total, m=m, n=n)

    def matrix(self) -> sparse.csr_matrix:
        """O_M = counts / M as a sparse float matrix"""
        return (self.counts.astype(float) / self.total).tocsr()

    def dense(self) -> np.ndarray:
        """O_M as a dense array"""
        return self.counts.toarray().astype(float) / self.total


@dataclass(frozen=True)
class SubspaceFactors:
    """
    Top-d singular triplets

    Attributes:
        u: m x d orthonormal columns
        sigma: d nonincreasing singular values
        v: n x d orthonormal columns
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    def reconstruct(self) -> np.ndarray:
        """U diag(sigma) V^T"""
        return (self.u * self.sigma) @ self.v.T


@dataclass(frozen=True)
class SideInfo:
    """
    Side information matrices fed to inductive matrix completion

    Attributes:
        x: m x d row features
        y: n x d column features
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.ndim != 2 or self.x.shape[1] != self.y.shape[1]:
            raise ArgumentError(
                f"side information must be m x d and n x d, got {self.x.shape} and {self.y.shape}"
            )

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def rotated(self, q_x: np.ndarray, q_y: np.ndarray) -> "SideInfo":
        """Side information (X Q_x, Y Q_y)"""
        return SideInfo(x=self.x @ q_x, y=self.y @ q_y)


@dataclass(frozen=True)
class SpectralDiagnostics:
    """Spectral norm, eigengap and condition number of a PMF at rank d"""

    spectral_norm: float
    eigengap: float
    condition: float
    singular_values: np.ndarray


@dataclass(frozen=True)
class RecoveryBound:
    """Subspace-distance bound and its sample-size condition"""

    rhs: float
    threshold: float
    condition_met: bool


def empirical_pmf(samples: Iterable[Sequence[int]], m: int, n: int) -> EmpiricalPMF:
    """
    Count unlabeled samples into an empirical PMF

    Args:
        samples: (M, 2) entry indices
        m: Row count
        n: Column count

    Returns:
        EmpiricalPMF whose normalized view sums to one

    Raises:
        ArgumentError: On an empty sample set or out-of-range entries
    """
    entries = ArrayValidator.require_entries(samples, m, n)
    if entries.shape[0] == 0:
        raise ArgumentError("empirical PMF needs at least one sample")

    ones = np.ones(entries.shape[0], dtype=np.int64)
    counts = sparse.coo_matrix((ones, (entries[:, 0], entries[:, 1])), shape=(m, n)).tocsr()
    counts.sum_duplicates()
    return EmpiricalPMF(counts=counts, total=int(entries.shape[0]), m=m, n=n)


def _fix_signs(u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # Largest-magnitude entry of each left vector made positive; v follows
    pivots = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivots, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, v * signs


def _dense_svd(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        return linalg.svd(a, full_matrices=False, lapack_driver="gesdd")
    except linalg.LinAlgError:
        logger.warning("gesdd did not converge, retrying with gesvd")
    try:
        return linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalError(
            f"SVD did not converge (shape={a.shape}, finite={bool(np.all(np.isfinite(a)))}, "
            f"frobenius={np.linalg.norm(a):.3e}): {e}"
        ) from e


def _randomized_svd(
    a: MatrixLike, rank: int, seed: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = generator(seed, "svd")
    sketch = rng.standard_normal((a.shape[1], rank + OVERSAMPLING))
    q, _ = np.linalg.qr(a @ sketch)

    for _ in range(POWER_ITERATIONS):
        q, _ = np.linalg.qr(a.T @ q)
        q, _ = np.linalg.qr(a @ q)

    small = np.asarray((a.T @ q).T)
    if not np.all(np.isfinite(small)):
        raise NumericalError(f"randomized SVD produced non-finite values (shape={a.shape})")
    u_small, s, vt = _dense_svd(small)
    return q @ u_small, s, vt


def truncated_svd(matrix: MatrixLike, d: int, seed: int = 0) -> SubspaceFactors:
    """
    Top-d singular triplets of a dense or sparse matrix

    Uses LAPACK (Golub-Kahan bidiagonalization) when min(m, n) <= 2000 and a
    randomized range finder with power iterations above that.

    Args:
        matrix: m x n matrix
        d: Number of triplets, 1 <= d <= min(m, n)
        seed: Seed of the randomized path

    Returns:
        SubspaceFactors with the deterministic sign convention

    Raises:
        ArgumentError: If d is out of range
        NumericalError: If the decomposition fails
    """
    m, n = matrix.shape
    if not 1 <= d <= min(m, n):
        raise ArgumentError(f"d must lie in [1, {min(m, n)}], got {d}")

    if min(m, n) <= DENSE_SVD_LIMIT:
        dense = matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix, dtype=float)
        u, s, vt = _dense_svd(dense)
    else:
        logger.debug(f"Randomized SVD for {m}x{n} at rank {d}")
        a = matrix.tocsr().astype(float) if sparse.issparse(matrix) else np.asarray(matrix, dtype=float)
        u, s, vt = _randomized_svd(a, d, seed)

    u, v = _fix_signs(u[:, :d], vt[:d].T)
    return SubspaceFactors(u=u, sigma=s[:d].copy(), v=v)


def side_info(factors: SubspaceFactors, m: int, n: int) -> SideInfo:
    """
    Scale singular vectors into side information X = sqrt(m/d) U, Y = sqrt(n/d) V

    Args:
        factors: Truncated SVD of the empirical PMF
        m: Row count
        n: Column count

    Returns:
        SideInfo
    """
    d = factors.d
    return SideInfo(x=math.sqrt(m / d) * factors.u, y=math.sqrt(n / d) * factors.v)


def procrustes_distance(u: np.ndarray, u_star: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Spectral-norm Procrustes distance between two orthonormal bases

    min over orthogonal R of ||u R - u_star||, attained at the polar factor
    of u^T u_star.

    Args:
        u: m x d orthonormal columns
        u_star: m x d orthonormal columns

    Returns:
        Tuple of (distance, minimizing rotation R)

    Raises:
        ArgumentError: On shape mismatch or non-orthonormal input
    """
    u = np.asarray(u, dtype=float)
    u_star = np.asarray(u_star, dtype=float)
    if u.shape != u_star.shape or u.ndim != 2:
        raise ArgumentError(f"shape mismatch: {u.shape} vs {u_star.shape}")
    ArrayValidator.require_orthonormal(u, "u")
    ArrayValidator.require_orthonormal(u_star, "u_star")

    w, _, zt = _dense_svd(u.T @ u_star)
    rotation = w @ zt
    distance = float(np.linalg.norm(u @ rotation - u_star, ord=2))
    return distance, rotation


def spectral_diagnostics(pmf: MatrixLike, d: int) -> SpectralDiagnostics:
    """
    Spectral norm, d-th eigengap and condition number of a PMF

    The eigengap is sigma_d - sigma_{d+1}, with sigma_{d+1} = 0 when the rank
    does not exceed d.

    Args:
        pmf: m x n PMF
        d: Truncation rank

    Returns:
        SpectralDiagnostics

    Raises:
        ArgumentError: If pmf is not a PMF or d is out of range
        DegenerateEigengapError: If the eigengap is numerically zero
    """
    dense = pmf.toarray() if sparse.issparse(pmf) else np.asarray(pmf, dtype=float)
    ArrayValidator.require_pmf(dense)
    m, n = dense.shape
    if not 1 <= d <= min(m, n):
        raise ArgumentError(f"d must lie in [1, {min(m, n)}], got {d}")

    wanted = min(d + 1, min(m, n))
    if min(m, n) <= DENSE_SVD_LIMIT:
        singular_values = linalg.svdvals(dense)[:wanted]
    else:
        singular_values = truncated_svd(sparse.csr_matrix(dense), wanted).sigma

    sigma_next = singular_values[d] if singular_values.shape[0] > d else 0.0
    eigengap = float(singular_values[d - 1] - sigma_next)
    if eigengap < EIGENGAP_FLOOR:
        raise DegenerateEigengapError(
            f"eigengap sigma_{d} - sigma_{d + 1} = {eigengap:.3e} is degenerate"
        )

    spectral_norm = float(singular_values[0])
    return SpectralDiagnostics(
        spectral_norm=spectral_norm,
        eigengap=eigengap,
        condition=spectral_norm / eigengap,
        singular_values=singular_values,
    )


def subspace_recovery_bound(
    p_star: float, eigengap: float, m: int, n: int, M: int, delta: float
) -> RecoveryBound:
    """
    High-probability bound on the Procrustes distance of the SVD of O_M

    Args:
        p_star: Largest row or column marginal of P
        eigengap: sigma_d - sigma_{d+1} of P
        m, n: Dimensions
        M: Number of unlabeled samples
        delta: Failure probability

    Returns:
        RecoveryBound with the distance bound, the sample-size threshold and
        whether M meets it
    """
    if eigengap <= 0:
        raise ArgumentError("eigengap must be positive")
    if M < 1:
        raise ArgumentError("M must be at least 1")
    ArrayValidator.require_unit_interval(delta, "delta", open_ends=True)

    log_term = math.log((m + n) / delta)
    rhs = (2.0 / eigengap) * (
        math.sqrt(16.0 * p_star / (3.0 * M)) * math.sqrt(log_term) + 16.0 / M * log_term
    )
    scaled_gap = eigengap * (2.0 - math.sqrt(2.0))
    threshold = log_term * ((4.0 / scaled_gap) ** 2 * 16.0 * p_star / 3.0 + 32.0 / scaled_gap)
    return RecoveryBound(rhs=rhs, threshold=threshold, condition_met=M >= threshold)
