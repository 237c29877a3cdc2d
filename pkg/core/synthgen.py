"""
Synthetic worlds for semi-supervised matrix completion
Generates block-structured ground truth, sampling distributions and samples
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.errors import ArgumentError, ConfigurationError
from utils.rng import generator
from utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

# Below this normalizing mass the block PMF is considered all-zero and redrawn
DEGENERATE_MASS = 1e-12


class SynthConfig(BaseModel):
    """
    Configuration of a realizable synthetic world

    Attributes:
        m: Row count
        n: Column count
        d: Number of row (and column) groups, i.e. the shared subspace dimension
        group_sizes: Row group sizes (default m/d each)
        col_group_sizes: Column group sizes (default group_sizes, or n/d each)
        core_frobenius_norm: Target Frobenius norm of the core matrix
        noise_sd: Label noise standard deviation
        seed: Base seed of every random stream of the world
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    m: int = Field(200, ge=1)
    n: int = Field(200, ge=1)
    d: int = Field(4, ge=1)
    group_sizes: Optional[List[int]] = None
    col_group_sizes: Optional[List[int]] = None
    core_frobenius_norm: float = Field(4.0, gt=0)
    noise_sd: float = Field(0.05, ge=0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_partitions(self) -> "SynthConfig":
        # Raises ValueError so pydantic reports it; make_world re-checks
        self.row_sizes()
        self.col_sizes()
        return self

    def row_sizes(self) -> List[int]:
        """Row group sizes, validated against m and d"""
        if self.group_sizes is None:
            return _even_sizes(self.m, self.d, "rows")
        return _checked_sizes(self.group_sizes, self.m, self.d, "rows")

    def col_sizes(self) -> List[int]:
        """
        Column group sizes, validated against n and d

        Without col_group_sizes, the row group sizes are reused when they sum
        to n (square worlds share one partition shape); otherwise columns are
        split evenly into d groups.
        """
        sizes = self.col_group_sizes
        if sizes is None and self.group_sizes is not None and sum(self.group_sizes) == self.n:
            sizes = self.group_sizes
        if sizes is None:
            return _even_sizes(self.n, self.d, "columns")
        return _checked_sizes(sizes, self.n, self.d, "columns")


def _even_sizes(total: int, d: int, what: str) -> List[int]:
    if d > total or total % d != 0:
        raise ValueError(f"cannot split {total} {what} evenly into {d} groups")
    return [total // d] * d


def _checked_sizes(sizes: List[int], total: int, d: int, what: str) -> List[int]:
    if len(sizes) != d:
        raise ValueError(f"expected {d} {what} group sizes, got {len(sizes)}")
    if any(s < 1 for s in sizes):
        raise ValueError(f"{what} group sizes must be positive")
    if sum(sizes) != total:
        raise ValueError(f"{what} group sizes sum to {sum(sizes)}, expected {total}")
    return list(sizes)


@dataclass(frozen=True)
class SynthWorld:
    """
    Ground-truth bundle of a realizable instance

    Attributes:
        x_star: m x d row side information (group indicators)
        y_star: n x d column side information
        core_star: d x d core matrix
        pmf: m x n sampling distribution P
        ground_truth: m x n matrix G = X* M* Y*^T
    """

    x_star: np.ndarray
    y_star: np.ndarray
    core_star: np.ndarray
    pmf: np.ndarray
    ground_truth: np.ndarray
    row_groups: Optional[np.ndarray] = field(default=None, compare=False)
    col_groups: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        m, n = self.pmf.shape
        d = self.core_star.shape[0]
        if self.x_star.shape != (m, d) or self.y_star.shape != (n, d):
            raise ConfigurationError(
                f"side information shapes {self.x_star.shape}, {self.y_star.shape} "
                f"do not match pmf {self.pmf.shape} and d={d}"
            )
        if self.ground_truth.shape != (m, n):
            raise ConfigurationError("ground truth and pmf shapes differ")
        ok, error = ArrayValidator.check_pmf(self.pmf, tolerance=1e-9)
        if not ok:
            raise ConfigurationError(error)
        for array in (self.x_star, self.y_star, self.core_star, self.pmf, self.ground_truth):
            array.setflags(write=False)

    @property
    def m(self) -> int:
        return self.pmf.shape[0]

    @property
    def n(self) -> int:
        return self.pmf.shape[1]

    @property
    def d(self) -> int:
        return self.core_star.shape[0]


@dataclass(frozen=True)
class ObservationSet:
    """
    Unlabeled and labeled entry samples of an m x n matrix

    Attributes:
        unlabeled: (M, 2) int array of sampled entries
        labeled_entries: (N, 2) int array of labeled entries
        labeled_values: (N,) observed labels
        m, n: Ambient dimensions
        source: Provenance of the split ("synthetic", "train", "test", ...)
    """

    m: int
    n: int
    unlabeled: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    labeled_entries: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 2), dtype=np.int64)
    )
    labeled_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    source: str = "synthetic"

    def __post_init__(self):
        unlabeled = ArrayValidator.require_entries(self.unlabeled, self.m, self.n)
        entries = ArrayValidator.require_entries(self.labeled_entries, self.m, self.n)
        values = np.asarray(self.labeled_values, dtype=float).reshape(-1)
        if values.shape[0] != entries.shape[0]:
            raise ArgumentError("labeled entries and values differ in length")
        if not np.all(np.isfinite(values)):
            raise ArgumentError("labeled values must be finite")
        for array in (unlabeled, entries, values):
            array.setflags(write=False)
        object.__setattr__(self, "unlabeled", unlabeled)
        object.__setattr__(self, "labeled_entries", entries)
        object.__setattr__(self, "labeled_values", values)

    @property
    def num_unlabeled(self) -> int:
        return self.unlabeled.shape[0]

    @property
    def num_labeled(self) -> int:
        return self.labeled_entries.shape[0]


def one_hot(groups: np.ndarray, d: int) -> np.ndarray:
    """Indicator matrix of shape (len(groups), d) for integer group labels"""
    indicators = np.zeros((groups.shape[0], d))
    indicators[np.arange(groups.shape[0]), groups] = 1.0
    return indicators


def world_from_blocks(
    row_groups: np.ndarray,
    col_groups: np.ndarray,
    core: np.ndarray,
    block_pmf: np.ndarray,
) -> SynthWorld:
    """
    Build a world from explicit group labels, a core matrix and a block PMF

    Args:
        row_groups: (m,) group label in [0, d) of every row
        col_groups: (n,) group label in [0, d) of every column
        core: d x d core matrix M*
        block_pmf: d x d nonnegative matrix P0; P = X* P0 Y*^T normalized

    Returns:
        SynthWorld with indicator side information

    Raises:
        ConfigurationError: On inconsistent shapes or an all-zero lifted PMF
    """
    core = np.asarray(core, dtype=float)
    block_pmf = np.asarray(block_pmf, dtype=float)
    d = core.shape[0]
    row_groups = np.asarray(row_groups, dtype=np.int64)
    col_groups = np.asarray(col_groups, dtype=np.int64)

    if core.shape != (d, d) or block_pmf.shape != (d, d):
        raise ConfigurationError(f"core {core.shape} and block pmf {block_pmf.shape} must be {d}x{d}")
    if np.any(block_pmf < 0):
        raise ConfigurationError("block pmf must be nonnegative")
    for groups, what in ((row_groups, "row"), (col_groups, "column")):
        if groups.size == 0 or groups.min() < 0 or groups.max() >= d:
            raise ConfigurationError(f"{what} group labels must lie in [0, {d})")

    x_star = one_hot(row_groups, d)
    y_star = one_hot(col_groups, d)

    lifted = x_star @ block_pmf @ y_star.T
    mass = lifted.sum()
    if mass < DEGENERATE_MASS:
        raise ConfigurationError("lifted sampling distribution has zero mass")

    return SynthWorld(
        x_star=x_star,
        y_star=y_star,
        core_star=core.copy(),
        pmf=lifted / mass,
        ground_truth=x_star @ core @ y_star.T,
        row_groups=row_groups,
        col_groups=col_groups,
    )


def _random_groups(sizes: List[int], rng: np.random.Generator) -> np.ndarray:
    labels = np.repeat(np.arange(len(sizes)), sizes)
    return labels[rng.permutation(labels.shape[0])]


def make_world(cfg: SynthConfig) -> SynthWorld:
    """
    Generate a realizable block world

    Rows and columns are split into d random groups; the core matrix has
    i.i.d. standard normal entries rescaled to the configured Frobenius norm;
    the block PMF has i.i.d. Uniform[0, 1] entries.

    Args:
        cfg: World configuration

    Returns:
        SynthWorld, deterministic given cfg.seed

    Raises:
        ConfigurationError: On dimension/partition mismatch
    """
    try:
        row_sizes = cfg.row_sizes()
        col_sizes = cfg.col_sizes()
    except ValueError as e:
        raise ConfigurationError(str(e)) from e

    d = cfg.d
    row_groups = _random_groups(row_sizes, generator(cfg.seed, "partition", 0))
    col_groups = _random_groups(col_sizes, generator(cfg.seed, "partition", 1))

    core = generator(cfg.seed, "core").standard_normal((d, d))
    core *= cfg.core_frobenius_norm / np.linalg.norm(core)

    pmf_rng = generator(cfg.seed, "pmf")
    block_pmf = pmf_rng.uniform(0.0, 1.0, size=(d, d))
    if block_pmf.sum() < DEGENERATE_MASS:
        block_pmf = pmf_rng.uniform(0.0, 1.0, size=(d, d))

    world = world_from_blocks(row_groups, col_groups, core, block_pmf)
    logger.debug(f"Generated world m={cfg.m} n={cfg.n} d={d} seed={cfg.seed}")
    return world


def uniform_pmf(m: int, n: int) -> np.ndarray:
    """Uniform sampling distribution over an m x n matrix"""
    return np.full((m, n), 1.0 / (m * n))


def block_model_pmf(groups: int, group_size: int, mix: float = 0.5) -> np.ndarray:
    """
    Check-board block model: mix * I/k + (1 - mix) * Uniform, lifted to groups

    Args:
        groups: Number of groups k
        group_size: Rows (and columns) per group
        mix: Weight of the diagonal component

    Returns:
        (k * group_size)^2 PMF with contiguous groups
    """
    if groups < 1 or group_size < 1:
        raise ArgumentError("groups and group_size must be positive")
    ArrayValidator.require_unit_interval(mix, "mix")
    small = mix * np.eye(groups) / groups + (1.0 - mix) * np.full((groups, groups), 1.0 / groups**2)
    lift = np.kron(small, np.ones((group_size, group_size)))
    return lift / group_size**2


def _check_count(count: int) -> int:
    if count < 0:
        raise ArgumentError(f"sample count must be non-negative, got {count}")
    return int(count)


def _draw_entries(pmf: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    m, n = pmf.shape
    if count == 0:
        return np.zeros((0, 2), dtype=np.int64)
    flat = pmf.ravel()
    flat_index = rng.choice(flat.shape[0], size=count, replace=True, p=flat / flat.sum())
    return np.stack(np.divmod(flat_index, n), axis=1).astype(np.int64)


def draw_unlabeled(world: SynthWorld, count: int, seed: int) -> ObservationSet:
    """
    Draw `count` i.i.d. entries from the world's sampling distribution

    Args:
        world: Source world
        count: Number of draws M
        seed: Seed of the unlabeled stream

    Returns:
        ObservationSet with only unlabeled samples
    """
    count = _check_count(count)
    entries = _draw_entries(world.pmf, count, generator(seed, "unlabeled"))
    return ObservationSet(m=world.m, n=world.n, unlabeled=entries)


def draw_unlabeled_counts(world: SynthWorld, count: int, seed: int):
    """
    Draw the count matrix of `count` i.i.d. entries in one multinomial draw

    Same law as empirical_pmf(draw_unlabeled(...)) without materializing the
    sample list, for Monte-Carlo runs at large M.

    Returns:
        EmpiricalPMF
    """
    from core.subspace import EmpiricalPMF

    count = _check_count(count)
    if count == 0:
        raise ArgumentError("at least one sample is required")
    flat = world.pmf.ravel()
    counts = generator(seed, "unlabeled").multinomial(count, flat / flat.sum())
    return EmpiricalPMF.from_dense_counts(counts.reshape(world.m, world.n))


def draw_labeled(world: SynthWorld, count: int, noise_sd: float, seed: int) -> ObservationSet:
    """
    Draw `count` labeled entries: G at an entry drawn from P, plus Gaussian noise

    Args:
        world: Source world
        count: Number of labeled draws N
        noise_sd: Standard deviation of the additive label noise
        seed: Seed of the labeled and noise streams

    Returns:
        ObservationSet with only labeled samples
    """
    count = _check_count(count)
    if noise_sd < 0:
        raise ArgumentError(f"noise_sd must be non-negative, got {noise_sd}")

    entries = _draw_entries(world.pmf, count, generator(seed, "labeled"))
    values = world.ground_truth[entries[:, 0], entries[:, 1]].astype(float)
    if noise_sd > 0 and count > 0:
        values = values + noise_sd * generator(seed, "noise").standard_normal(count)

    return ObservationSet(
        m=world.m, n=world.n, labeled_entries=entries, labeled_values=values
    )
