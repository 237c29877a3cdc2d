"""
Experiment harness
Synthetic (M, N) grids, error decomposition, subspace rates and the
real-data label-removal protocol
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import stats

from core.baselines import KnnConfig, SoftImputeConfig, knn_predict, select_softimpute_lambda, softimpute_fit
from core.errors import (
    ArgumentError,
    DamcError,
    MissingCellError,
    ParseError,
    UndefinedCorrelationError,
)
from core.imc import (
    FitResult,
    LossSpec,
    SolverConfig,
    empirical_risk,
    fit_factored,
    fit_projected,
    nuclear_norm,
    predict,
)
from core.subspace import (
    EmpiricalPMF,
    SideInfo,
    SubspaceFactors,
    empirical_pmf,
    procrustes_distance,
    side_info,
    truncated_svd,
)
from core.synthgen import (
    ObservationSet,
    SynthConfig,
    SynthWorld,
    draw_labeled,
    draw_unlabeled_counts,
    make_world,
)
from utils.rng import derive_seed, generator
from utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

GRID_COLUMNS = [
    "m_unlabeled",
    "n_labeled",
    "run",
    "train_risk",
    "test_risk",
    "gap",
    "dist_u",
    "dist_v",
    "seed",
]
SCATTER_COLUMNS = ["m_unlabeled", "n_labeled", "mean_gap", "disentangled_estimate"]
REAL_COLUMNS = ["dataset", "method", "p", "rmse", "seed"]
FLOAT_FORMAT = "%.10g"

# Canonical MovieLens-100K cardinalities
ML100K_USERS = 943
ML100K_ITEMS = 1682
ML100K_RATINGS = 100000

RATING_RANGE = (1.0, 5.0)


class SolverChoice(BaseModel):
    """
    Which IMC solver to run and how

    Attributes:
        method: "factored" (Lagrangian form) or "projected" (nuclear ball)
        lambda_reg: Regularization weight of the factored form
        inner_rank: Inner dimension of the factored form (default d)
        budget: Nuclear-norm budget of the projected form (default ||M*||_*)
        loss: Training loss
        config: Optimization settings
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    method: Literal["factored", "projected"] = "factored"
    lambda_reg: float = Field(0.0, ge=0)
    inner_rank: Optional[int] = Field(None, ge=1)
    budget: Optional[float] = Field(None, gt=0)
    loss: LossSpec = LossSpec()
    config: SolverConfig = SolverConfig()


class GridSpec(BaseModel):
    """Synthetic (M, N) grid experiment"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    m_values: List[int] = Field(min_length=1)
    n_values: List[int] = Field(min_length=1)
    runs_per_cell: int = Field(30, ge=1)
    world_config: SynthConfig = SynthConfig()
    solver: SolverChoice = SolverChoice()
    test_size: int = Field(5000, ge=1)
    base_seed: int = Field(0, ge=0)

    @field_validator("m_values", "n_values")
    @classmethod
    def _positive_counts(cls, values: List[int]) -> List[int]:
        if any(v < 1 for v in values):
            raise ValueError(f"sample counts must be at least 1, got {values}")
        return values


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one (M, N, run) grid point; NaN metrics and an error when it failed"""

    m_unlabeled: int
    n_labeled: int
    run_index: int
    train_risk: float
    test_risk: float
    gap: float
    subspace_dist_u: float
    subspace_dist_v: float
    seed: int
    error: Optional[str] = None


@dataclass(frozen=True)
class PipelineResult:
    """Artifacts of one pass of the two-step estimator"""

    factors: SubspaceFactors
    side: SideInfo
    fit: FitResult
    loss: LossSpec


@dataclass(frozen=True)
class CorrelationReport:
    """Pearson r between per-cell mean gaps and their disentangled estimates"""

    pearson_r: float
    series: pd.DataFrame = field(compare=False)


@dataclass(frozen=True)
class SubspaceRate:
    """Mean Procrustes distance per unlabeled count and its log-log slope"""

    m_values: np.ndarray
    mean_distances: np.ndarray
    slope: float


@dataclass(frozen=True)
class RatingDataset:
    """
    Explicit-feedback dataset with 0-based dense ids

    Attributes:
        frame: Columns user, item, rating, timestamp
        n_users, n_items: Sizes of the re-indexed id ranges
        user_ids, item_ids: Original ids by dense index
    """

    frame: pd.DataFrame = field(compare=False)
    n_users: int
    n_items: int
    user_ids: np.ndarray = field(compare=False)
    item_ids: np.ndarray = field(compare=False)
    name: str = "ml-100k"

    @property
    def num_ratings(self) -> int:
        return len(self.frame)


class RealDataConfig(BaseModel):
    """
    One real-data comparison cell

    method_config is method specific: DamcMethodConfig fields for damc,
    SoftImputeConfig fields for softimpute (lambda selected on a validation
    split when omitted) and KnnConfig fields for userknn.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    dataset_path: str
    label_removal_p: float = Field(0.0, ge=0, le=1)
    train_fraction: float = Field(0.8, ge=0, le=1)
    method: Literal["damc", "softimpute", "userknn"] = "damc"
    method_config: Dict[str, Any] = Field(default_factory=dict)
    seed: int = Field(0, ge=0)


class DamcMethodConfig(BaseModel):
    """Settings of the two-step estimator on rating data"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    d: int = Field(40, ge=1)
    center_labels: bool = True
    solver: SolverChoice = SolverChoice(lambda_reg=1e-3, config=SolverConfig(max_iters=500))


@dataclass(frozen=True)
class RealResult:
    dataset: str
    method: str
    p: float
    rmse: float
    seed: int


# ---------------------------------------------------------------------------
# Two-step estimator
# ---------------------------------------------------------------------------


def fit_core(side: SideInfo, labeled: ObservationSet, solver: SolverChoice, budget: Optional[float] = None):
    """
    Run the configured IMC solver

    Returns:
        Tuple of (FitResult, resolved LossSpec)
    """
    loss = solver.loss.resolve(labeled.labeled_values)
    if solver.method == "projected":
        budget = solver.budget if solver.budget is not None else budget
        if budget is None:
            raise ArgumentError("projected solver needs a nuclear budget")
        fit = fit_projected(side, labeled, budget, loss, solver.config)
    else:
        fit = fit_factored(side, labeled, solver.lambda_reg, solver.inner_rank, loss, solver.config)
    return fit, loss


def damc_pipeline(
    unlabeled: Union[EmpiricalPMF, ObservationSet],
    labeled: ObservationSet,
    d: int,
    solver: SolverChoice,
    budget: Optional[float] = None,
    seed: int = 0,
) -> PipelineResult:
    """
    Subspace step on unlabeled samples, then IMC on labeled samples

    Args:
        unlabeled: Empirical PMF or raw unlabeled entries
        labeled: Labeled samples
        d: Subspace dimension
        solver: IMC solver choice
        budget: Fallback nuclear budget for the projected solver
        seed: Seed of the randomized SVD path

    Returns:
        PipelineResult
    """
    if not isinstance(unlabeled, EmpiricalPMF):
        unlabeled = empirical_pmf(unlabeled.unlabeled, unlabeled.m, unlabeled.n)
    factors = truncated_svd(unlabeled.matrix(), d, seed=seed)
    side = side_info(factors, unlabeled.m, unlabeled.n)
    fit, loss = fit_core(side, labeled, solver, budget)
    return PipelineResult(factors=factors, side=side, fit=fit, loss=loss)


# ---------------------------------------------------------------------------
# Synthetic grid
# ---------------------------------------------------------------------------


def _failed_record(M: int, N: int, run: int, seed: int, error: str) -> RunRecord:
    nan = float("nan")
    return RunRecord(M, N, run, nan, nan, nan, nan, nan, seed, error)


def run_single(spec: GridSpec, M: int, N: int, run: int) -> RunRecord:
    """
    One grid point: fresh world, samples, two-step fit and held-out risk

    Solver and numerical failures are captured in the record.
    """
    seed = derive_seed(spec.base_seed, "grid-run", M, N, run)
    try:
        world = make_world(spec.world_config.model_copy(update={"seed": seed}))
        noise_sd = spec.world_config.noise_sd
        counts = draw_unlabeled_counts(world, M, seed)
        labeled = draw_labeled(world, N, noise_sd, seed)
        test = draw_labeled(world, spec.test_size, noise_sd, derive_seed(seed, "test"))

        result = damc_pipeline(
            counts, labeled, world.d, spec.solver, budget=nuclear_norm(world.core_star), seed=seed
        )
        train_risk = result.fit.train_risk
        predictions = predict(result.side, result.fit.core, test.labeled_entries)
        test_risk = empirical_risk(predictions, test.labeled_values, result.loss)

        truth = truncated_svd(world.pmf, world.d)
        dist_u, _ = procrustes_distance(result.factors.u, truth.u)
        dist_v, _ = procrustes_distance(result.factors.v, truth.v)
    except DamcError as e:
        logger.warning(f"Run M={M} N={N} run={run} failed: {e}")
        return _failed_record(M, N, run, seed, str(e))

    logger.info(
        f"Run M={M} N={N} run={run}: train={train_risk:.4e} test={test_risk:.4e} "
        f"dist_u={dist_u:.4f} dist_v={dist_v:.4f}"
    )
    return RunRecord(
        m_unlabeled=M,
        n_labeled=N,
        run_index=run,
        train_risk=train_risk,
        test_risk=test_risk,
        gap=test_risk - train_risk,
        subspace_dist_u=dist_u,
        subspace_dist_v=dist_v,
        seed=seed,
    )


def run_grid(spec: GridSpec, jobs: int = 1) -> List[RunRecord]:
    """
    Run every (M, N, run) point of the grid

    Args:
        spec: Grid specification
        jobs: Worker processes (1 runs in-process)

    Returns:
        Records sorted by (M, N, run); identical for any job count
    """
    if jobs < 1:
        raise ArgumentError(f"jobs must be at least 1, got {jobs}")
    tasks = [
        (M, N, run)
        for M in spec.m_values
        for N in spec.n_values
        for run in range(spec.runs_per_cell)
    ]
    logger.info(f"Running grid: {len(tasks)} runs on {jobs} job(s)")

    if jobs == 1:
        records = [run_single(spec, M, N, run) for M, N, run in tasks]
    else:
        records = Parallel(n_jobs=jobs)(delayed(run_single)(spec, M, N, run) for M, N, run in tasks)

    failed = sum(1 for r in records if r.error is not None)
    if failed:
        logger.warning(f"{failed} of {len(records)} runs failed")
    return sorted(records, key=lambda r: (r.m_unlabeled, r.n_labeled, r.run_index))


def records_frame(records: Iterable[RunRecord]) -> pd.DataFrame:
    """Grid records in the grid CSV layout (plus an error column)"""
    rows = [
        {
            "m_unlabeled": r.m_unlabeled,
            "n_labeled": r.n_labeled,
            "run": r.run_index,
            "train_risk": r.train_risk,
            "test_risk": r.test_risk,
            "gap": r.gap,
            "dist_u": r.subspace_dist_u,
            "dist_v": r.subspace_dist_v,
            "seed": r.seed,
            "error": r.error,
        }
        for r in records
    ]
    return pd.DataFrame(rows, columns=GRID_COLUMNS + ["error"])


def cell_means(records: Iterable[RunRecord]) -> pd.DataFrame:
    """Per-(M, N) mean gap and mean Procrustes distances over successful runs"""
    frame = records_frame(records)
    grouped = frame.groupby(["m_unlabeled", "n_labeled"], sort=True)
    return grouped.agg(
        mean_gap=("gap", "mean"),
        mean_dist_u=("dist_u", "mean"),
        mean_dist_v=("dist_v", "mean"),
        runs=("gap", "count"),
    ).reset_index()


def _gap_lookup(records: Iterable[RunRecord]) -> Dict[Tuple[int, int], float]:
    means = cell_means(records)
    return {
        (int(row.m_unlabeled), int(row.n_labeled)): float(row.mean_gap)
        for row in means.itertuples(index=False)
    }


def _cell_gap(gaps: Dict[Tuple[int, int], float], M: int, N: int) -> float:
    if (M, N) not in gaps:
        raise MissingCellError(f"grid cell (M={M}, N={N}) is missing from the records")
    return gaps[(M, N)]


def disentangled_estimate(records: Sequence[RunRecord], M: int, N: int, m_max: int, n_max: int) -> float:
    """
    GAP(M, n_max) + GAP(m_max, N) from per-cell mean gaps

    Raises:
        MissingCellError: If either cell is absent
    """
    gaps = _gap_lookup(records)
    return _cell_gap(gaps, M, n_max) + _cell_gap(gaps, m_max, N)


def pearson_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    """
    Pearson correlation of two series

    Raises:
        UndefinedCorrelationError: Fewer than two points or zero variance
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ArrayValidator.require_same_length(x, y, "pearson_correlation")
    if x.shape[0] < 2:
        raise UndefinedCorrelationError("correlation needs at least two points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError("correlation is undefined for a zero-variance series")
    return float(stats.pearsonr(x, y)[0])


def scatter_series(
    records: Sequence[RunRecord], m_max: Optional[int] = None, n_max: Optional[int] = None
) -> pd.DataFrame:
    """
    Per-cell mean gap next to its disentangled estimate

    Args:
        records: Full grid records
        m_max, n_max: Reference counts (default the largest present)

    Returns:
        DataFrame in the scatter CSV layout, sorted by (M, N)
    """
    gaps = _gap_lookup(records)
    if not gaps:
        raise ArgumentError("no records to correlate")
    m_max = max(M for M, _ in gaps) if m_max is None else m_max
    n_max = max(N for _, N in gaps) if n_max is None else n_max

    rows = []
    for M, N in sorted(gaps):
        estimate = _cell_gap(gaps, M, n_max) + _cell_gap(gaps, m_max, N)
        rows.append(
            {"m_unlabeled": M, "n_labeled": N, "mean_gap": gaps[(M, N)], "disentangled_estimate": estimate}
        )
    return pd.DataFrame(rows, columns=SCATTER_COLUMNS)


def correlation_report(
    records: Sequence[RunRecord], m_max: Optional[int] = None, n_max: Optional[int] = None
) -> CorrelationReport:
    """
    Pearson correlation between every cell's mean gap and its disentangled estimate

    Cells whose runs all failed are dropped with a warning.

    Raises:
        MissingCellError: If a reference cell is absent
        UndefinedCorrelationError: On a zero-variance series
    """
    series = scatter_series(records, m_max, n_max)
    finite = series.dropna()
    if len(finite) < len(series):
        logger.warning(f"Dropped {len(series) - len(finite)} cells without a finite gap")
    r = pearson_correlation(finite["mean_gap"], finite["disentangled_estimate"])
    logger.info(f"Gap vs disentangled estimate: pearson r = {r:.4f} over {len(finite)} cells")
    return CorrelationReport(pearson_r=r, series=series)


def subspace_rate(world: SynthWorld, m_values: Sequence[int], draws: int, seed: int = 0) -> SubspaceRate:
    """
    Mean Procrustes distance of the empirical subspace as a function of M

    The distance of a draw is the larger of the row and column distances.

    Returns:
        SubspaceRate with the least-squares slope of log distance on log M
    """
    if draws < 1:
        raise ArgumentError("draws must be at least 1")
    if len(m_values) < 2:
        raise ArgumentError("a rate needs at least two values of M")
    truth = truncated_svd(world.pmf, world.d)

    means = []
    for M in m_values:
        distances = []
        for t in range(draws):
            counts = draw_unlabeled_counts(world, M, derive_seed(seed, "unlabeled", M, t))
            factors = truncated_svd(counts.matrix(), world.d)
            dist_u, _ = procrustes_distance(factors.u, truth.u)
            dist_v, _ = procrustes_distance(factors.v, truth.v)
            distances.append(max(dist_u, dist_v))
        means.append(float(np.mean(distances)))
        logger.info(f"M={M}: mean Procrustes distance {means[-1]:.4e}")

    m_array = np.asarray(m_values, dtype=float)
    mean_array = np.asarray(means)
    slope = float(np.polyfit(np.log(m_array), np.log(mean_array), 1)[0])
    return SubspaceRate(m_values=m_array, mean_distances=mean_array, slope=slope)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def write_grid_csv(records: Sequence[RunRecord], path: Union[str, Path]) -> Path:
    """Write the grid CSV; the error column only appears when a run failed"""
    path = Path(path)
    frame = records_frame(records)
    if frame["error"].isna().all():
        frame = frame.drop(columns="error")
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_scatter_csv(series: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write the gap vs disentangled-estimate scatter series"""
    path = Path(path)
    series[SCATTER_COLUMNS].to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def append_real_csv(results: Sequence[RealResult], path: Union[str, Path]) -> Path:
    """Append real-data rows, writing the header only to a new file"""
    path = Path(path)
    frame = pd.DataFrame([asdict(r) for r in results], columns=REAL_COLUMNS)
    write_header = not path.exists() or path.stat().st_size == 0
    frame.to_csv(
        path,
        mode="a",
        header=write_header,
        index=False,
        float_format=FLOAT_FORMAT,
        lineterminator="\n",
    )
    return path


# ---------------------------------------------------------------------------
# Real data
# ---------------------------------------------------------------------------

_INTEGER = r"-?\d+"
_NUMBER = r"[-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?"


def load_ml100k(path: Union[str, Path]) -> RatingDataset:
    """
    Load a MovieLens-100K style file: user, item, rating, timestamp (tab separated)

    Args:
        path: Path to u.data (or any file in the same layout)

    Returns:
        RatingDataset with 0-based dense user and item indices

    Raises:
        FileNotFoundError: If the file does not exist
        ParseError: On an empty file or a malformed row (with its line number)
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")

    names = ["user", "item", "rating", "timestamp"]
    try:
        raw = pd.read_csv(
            path, sep="\t", header=None, names=names, dtype=str, keep_default_na=False, na_filter=False
        )
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"{path}: file is empty") from e
    except pd.errors.ParserError as e:
        raise ParseError(f"{path}: {e}") from e

    if raw.empty:
        raise ParseError(f"{path}: file is empty")

    patterns = {"user": _INTEGER, "item": _INTEGER, "rating": _NUMBER, "timestamp": _INTEGER}
    valid = np.ones(len(raw), dtype=bool)
    for column, pattern in patterns.items():
        valid &= raw[column].fillna("").str.strip().str.fullmatch(pattern).to_numpy(dtype=bool)
    if not valid.all():
        line = int(np.argmin(valid)) + 1
        raise ParseError(f"{path}: malformed row at line {line}: {raw.iloc[line - 1].tolist()}")

    user_ids, users = np.unique(raw["user"].astype(np.int64).to_numpy(), return_inverse=True)
    item_ids, items = np.unique(raw["item"].astype(np.int64).to_numpy(), return_inverse=True)
    frame = pd.DataFrame(
        {
            "user": users.astype(np.int64),
            "item": items.astype(np.int64),
            "rating": raw["rating"].astype(float).to_numpy(),
            "timestamp": raw["timestamp"].astype(np.int64).to_numpy(),
        }
    )

    dataset = RatingDataset(
        frame=frame,
        n_users=len(user_ids),
        n_items=len(item_ids),
        user_ids=user_ids,
        item_ids=item_ids,
    )
    if path.name == "u.data" and (dataset.n_users, dataset.n_items, dataset.num_ratings) != (
        ML100K_USERS,
        ML100K_ITEMS,
        ML100K_RATINGS,
    ):
        logger.warning(
            f"{path}: expected {ML100K_USERS} users, {ML100K_ITEMS} items and {ML100K_RATINGS} "
            f"ratings, found {dataset.n_users}, {dataset.n_items} and {dataset.num_ratings}"
        )
    logger.info(f"Loaded {dataset.num_ratings} ratings: {dataset.n_users} users x {dataset.n_items} items")
    return dataset


def split_train_test(frame: pd.DataFrame, train_fraction: float, seed: int) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Exact-count random split of interactions into train and test"""
    ArrayValidator.require_unit_interval(train_fraction, "train_fraction")
    count = len(frame)
    train_count = int(round(train_fraction * count))
    order = generator(seed, "split").permutation(count)
    train = frame.iloc[np.sort(order[:train_count])].reset_index(drop=True)
    test = frame.iloc[np.sort(order[train_count:])].reset_index(drop=True)
    return train, test


def mask_labels(frame: pd.DataFrame, p: float, seed: int) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Remove the ratings of exactly ceil(p * count) uniformly chosen interactions

    Args:
        frame: Interactions with user, item, rating columns
        p: Fraction of labels removed
        seed: Seed of the mask stream

    Returns:
        Tuple of (labeled interactions, unlabeled user-item pairs)
    """
    p = ArrayValidator.require_unit_interval(p, "p")
    count = len(frame)
    removed_count = math.ceil(round(p * count, 9))
    removed = np.zeros(count, dtype=bool)
    removed[generator(seed, "mask").permutation(count)[:removed_count]] = True

    labeled = frame.loc[~removed].reset_index(drop=True)
    unlabeled = frame.loc[removed, ["user", "item"]].reset_index(drop=True)
    return labeled, unlabeled


def rmse(predictions: Sequence[float], truths: Sequence[float]) -> float:
    """Root mean squared error"""
    predictions = np.asarray(predictions, dtype=float).reshape(-1)
    truths = np.asarray(truths, dtype=float).reshape(-1)
    ArrayValidator.require_same_length(predictions, truths, "rmse")
    return float(np.sqrt(np.mean((predictions - truths) ** 2)))


def _entries(frame: pd.DataFrame) -> np.ndarray:
    return frame[["user", "item"]].to_numpy(dtype=np.int64).reshape(-1, 2)


def _run_damc(
    labeled: pd.DataFrame,
    unlabeled: pd.DataFrame,
    queries: np.ndarray,
    shape: Tuple[int, int],
    options: Dict[str, Any],
    seed: int,
) -> np.ndarray:
    cfg = DamcMethodConfig(**options)
    if labeled.empty:
        raise ArgumentError("no labeled data to fit the core matrix")
    m, n = shape

    pairs = np.vstack([_entries(labeled), _entries(unlabeled)])
    values = labeled["rating"].to_numpy(dtype=float)
    offset = float(values.mean()) if cfg.center_labels else 0.0
    observations = ObservationSet(
        m=m, n=n, unlabeled=pairs, labeled_entries=_entries(labeled), labeled_values=values - offset
    )

    result = damc_pipeline(observations, observations, cfg.d, cfg.solver, seed=seed)
    predictions = predict(result.side, result.fit.core, queries) + offset
    return np.clip(predictions, *RATING_RANGE)


def _run_softimpute(
    labeled: pd.DataFrame, queries: np.ndarray, shape: Tuple[int, int], options: Dict[str, Any], seed: int
) -> np.ndarray:
    m, n = shape
    pairs = (_entries(labeled), labeled["rating"].to_numpy(dtype=float))
    options = dict(options)
    lam = options.pop("lambda", options.pop("lam", None))
    cfg = SoftImputeConfig(**options) if lam is None else SoftImputeConfig(lam=lam, **options)
    if lam is None:
        selection = select_softimpute_lambda(pairs, m, n, cfg=cfg, seed=seed)
        cfg = cfg.model_copy(update={"lam": selection.lam})
        logger.info(f"Selected SoftImpute lambda={selection.lam:.4g}")
    completion = softimpute_fit(pairs, m, n, cfg).completion
    return np.clip(completion[queries[:, 0], queries[:, 1]], *RATING_RANGE)


def _run_knn(
    labeled: pd.DataFrame, queries: np.ndarray, shape: Tuple[int, int], options: Dict[str, Any]
) -> np.ndarray:
    pairs = (_entries(labeled), labeled["rating"].to_numpy(dtype=float))
    predictions = knn_predict(pairs, queries, KnnConfig(**options), shape=shape)
    return np.clip(predictions, *RATING_RANGE)


def run_real(cfg: RealDataConfig, dataset: Optional[RatingDataset] = None) -> RealResult:
    """
    Label-removal experiment on a rating dataset

    Splits interactions into train and test, removes the ratings of a fraction
    p of the training interactions and reports the test RMSE of the method.
    The two-step estimator also uses the unlabeled training pairs; the
    baselines only see labeled ones.

    Args:
        cfg: Experiment cell
        dataset: Preloaded dataset (loaded from cfg.dataset_path when omitted)

    Returns:
        RealResult

    Raises:
        ArgumentError: If the split leaves the train or test side empty, or no
            labels remain for a method that needs them
    """
    dataset = dataset if dataset is not None else load_ml100k(cfg.dataset_path)
    shape = (dataset.n_users, dataset.n_items)

    train, test = split_train_test(dataset.frame, cfg.train_fraction, cfg.seed)
    if train.empty or test.empty:
        side = "training" if train.empty else "test"
        raise ArgumentError(f"train_fraction={cfg.train_fraction:g} leaves no {side} interactions")
    labeled, unlabeled = mask_labels(train, cfg.label_removal_p, cfg.seed)
    queries = _entries(test)
    logger.info(
        f"{cfg.method} p={cfg.label_removal_p:g}: {len(labeled)} labeled, "
        f"{len(unlabeled)} unlabeled, {len(test)} test"
    )

    if cfg.method == "damc":
        predictions = _run_damc(labeled, unlabeled, queries, shape, cfg.method_config, cfg.seed)
    elif cfg.method == "softimpute":
        if labeled.empty:
            raise ArgumentError("no labeled data for SoftImpute")
        predictions = _run_softimpute(labeled, queries, shape, cfg.method_config, cfg.seed)
    else:
        if labeled.empty:
            raise ArgumentError("no labeled data for userKNN")
        predictions = _run_knn(labeled, queries, shape, cfg.method_config)

    score = rmse(predictions, test["rating"].to_numpy(dtype=float))
    logger.info(f"{cfg.method} p={cfg.label_removal_p:g}: test RMSE {score:.4f}")
    return RealResult(
        dataset=dataset.name, method=cfg.method, p=cfg.label_removal_p, rmse=score, seed=cfg.seed
    )
