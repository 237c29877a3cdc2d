"""
Inductive matrix completion on labeled samples
Fits the d x d core matrix given side information X, Y
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import linalg

from core.errors import ArgumentError, NumericalError
from core.subspace import SideInfo
from utils.rng import generator
from utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

# Backtracking line search
INITIAL_STEP = 1.0
ARMIJO = 1e-4
MAX_BACKTRACKS = 60

LabeledLike = Union[Any, Tuple[np.ndarray, np.ndarray]]


class LossConstants(BaseModel):
    """Lipschitz constant and uniform bound of a loss (inf when unbounded)"""

    model_config = ConfigDict(frozen=True)

    lipschitz: float = Field(ge=0)
    loss_bound: float = Field(ge=0)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lipschitz) and math.isfinite(self.loss_bound)


class LossSpec(BaseModel):
    """
    Pointwise loss between a prediction and a label

    Kinds:
    - squared: (p - y)^2, unbounded
    - absolute: |p - y|, 1-Lipschitz, unbounded
    - clipped-squared: (clip(p) - y)^2 with p clipped to clip_range;
      bounded by (hi - lo)^2 and 2(hi - lo)-Lipschitz
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["squared", "absolute", "clipped-squared"] = "squared"
    clip_range: Optional[Tuple[float, float]] = None

    @model_validator(mode="after")
    def _check_range(self) -> "LossSpec":
        if self.clip_range is not None:
            lo, hi = self.clip_range
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"clip_range must satisfy lo < hi, got {self.clip_range}")
        return self

    @property
    def width(self) -> float:
        if self.clip_range is None:
            return math.inf
        return self.clip_range[1] - self.clip_range[0]

    @property
    def lipschitz(self) -> float:
        if self.kind == "absolute":
            return 1.0
        if self.kind == "clipped-squared":
            return 2.0 * self.width
        return math.inf

    @property
    def loss_bound(self) -> float:
        if self.kind == "clipped-squared":
            return self.width**2
        return math.inf

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lipschitz) and math.isfinite(self.loss_bound)

    def constants(self) -> LossConstants:
        return LossConstants(lipschitz=self.lipschitz, loss_bound=self.loss_bound)

    def resolve(self, labels: np.ndarray) -> "LossSpec":
        """
        Fill a missing clip range of a clipped loss from the label range

        Args:
            labels: Observed labels

        Returns:
            LossSpec with clip_range set (self when nothing to fill)
        """
        if self.kind != "clipped-squared" or self.clip_range is not None:
            return self
        if labels.size == 0:
            raise ArgumentError("cannot infer a clip range from zero labels")
        lo, hi = float(np.min(labels)), float(np.max(labels))
        if hi - lo <= 0:
            lo, hi = lo - 0.5, hi + 0.5
        return LossSpec(kind=self.kind, clip_range=(lo, hi))

    def value(self, predictions: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Per-sample loss"""
        if self.kind == "squared":
            return (predictions - labels) ** 2
        if self.kind == "absolute":
            return np.abs(predictions - labels)
        lo, hi = self._range()
        return (np.clip(predictions, lo, hi) - labels) ** 2

    def derivative(self, predictions: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Per-sample derivative with respect to the prediction"""
        if self.kind == "squared":
            return 2.0 * (predictions - labels)
        if self.kind == "absolute":
            return np.sign(predictions - labels)
        lo, hi = self._range()
        inside = (predictions > lo) & (predictions < hi)
        return 2.0 * (np.clip(predictions, lo, hi) - labels) * inside

    def _range(self) -> Tuple[float, float]:
        if self.clip_range is None:
            raise ArgumentError("clipped-squared loss needs a clip range; call resolve(labels)")
        return self.clip_range


class SolverConfig(BaseModel):
    """
    Optimization settings shared by both solvers

    Attributes:
        max_iters: Iteration cap
        step_size: "auto" for backtracking, or a fixed positive step
        tolerance: Relative objective change that stops the solver
        init_scale: Std of the factored initialization (default 0.1/sqrt(d))
        seed: Seed of the initialization stream
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_iters: int = Field(2000, ge=1)
    step_size: Union[Literal["auto"], float] = "auto"
    tolerance: float = Field(1e-8, gt=0)
    init_scale: Optional[float] = Field(None, gt=0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_step(self) -> "SolverConfig":
        if self.step_size != "auto" and not self.step_size > 0:
            raise ValueError(f"step_size must be 'auto' or positive, got {self.step_size}")
        return self


@dataclass(frozen=True)
class FitResult:
    """
    Outcome of a core-matrix fit

    Attributes:
        core: d x d matrix M
        objective_trace: Objective after each accepted iterate (index 0 = start)
        train_risk: Empirical risk of the final core on the training labels
        nuclear_norm: ||M||_*
        factors: (A, B) with M = A B^T for the factored solver
    """

    core: np.ndarray
    objective_trace: np.ndarray
    train_risk: float
    nuclear_norm: float
    method: str
    iterations: int
    converged: bool
    factors: Optional[Tuple[np.ndarray, np.ndarray]] = None
    config: Dict[str, Any] = field(default_factory=dict)


def labeled_arrays(labeled: LabeledLike) -> Tuple[np.ndarray, np.ndarray]:
    """
    Extract (entries, values) from an ObservationSet or an (entries, values) pair

    Returns:
        Tuple of int64 (N, 2) entries and float (N,) values
    """
    if hasattr(labeled, "labeled_entries"):
        return labeled.labeled_entries, labeled.labeled_values
    entries, values = labeled
    entries = np.asarray(entries, dtype=np.int64).reshape(-1, 2)
    values = np.asarray(values, dtype=float).reshape(-1)
    if entries.shape[0] != values.shape[0]:
        raise ArgumentError("labeled entries and values differ in length")
    return entries, values


def nuclear_norm(matrix: np.ndarray) -> float:
    """Sum of singular values"""
    return float(np.sum(linalg.svdvals(matrix)))


def l1_simplex_project(values: np.ndarray, budget: float) -> np.ndarray:
    """
    Euclidean projection of a nonnegative vector onto {w >= 0 : sum(w) <= budget}

    Sort-based threshold: the largest support whose shifted values stay
    positive determines the shift theta.

    Args:
        values: Nonnegative vector
        budget: Nonnegative l1 budget

    Returns:
        Projected vector (the input itself when already feasible)

    Raises:
        ArgumentError: On a negative budget or negative values
    """
    values = np.asarray(values, dtype=float)
    if budget < 0:
        raise ArgumentError(f"budget must be non-negative, got {budget}")
    if np.any(values < 0):
        raise ArgumentError("values must be non-negative")
    if values.sum() <= budget:
        return values.copy()
    if budget == 0:
        return np.zeros_like(values)

    ordered = np.sort(values)[::-1]
    cumulative = np.cumsum(ordered)
    support = np.arange(1, values.shape[0] + 1)
    rho = np.nonzero(ordered * support > cumulative - budget)[0][-1]
    theta = (cumulative[rho] - budget) / (rho + 1.0)
    return np.maximum(values - theta, 0.0)


def project_nuclear_ball(core: np.ndarray, budget: float) -> np.ndarray:
    """
    Frobenius-nearest point of {M : ||M||_* <= budget}

    Args:
        core: d x d matrix
        budget: Nuclear-norm budget

    Returns:
        Projected matrix (a copy of the input when already feasible)
    """
    if budget < 0:
        raise ArgumentError(f"budget must be non-negative, got {budget}")
    u, s, vt = linalg.svd(core, full_matrices=False)
    if s.sum() <= budget:
        return np.array(core, dtype=float, copy=True)
    shrunk = l1_simplex_project(s, budget)
    return (u * shrunk) @ vt


class _Design:
    """Side-information rows gathered at the labeled entries"""

    def __init__(self, side: SideInfo, entries: np.ndarray, labels: np.ndarray, loss: LossSpec):
        entries = ArrayValidator.require_entries(entries, side.m, side.n)
        self.rows = side.x[entries[:, 0]]
        self.cols = side.y[entries[:, 1]]
        self.labels = labels
        self.loss = loss
        self.count = labels.shape[0]

    def predictions(self, core: np.ndarray) -> np.ndarray:
        return np.einsum("ij,ij->i", self.rows @ core, self.cols)

    def risk_and_gradient(self, core: np.ndarray) -> Tuple[float, np.ndarray]:
        predictions = self.predictions(core)
        value = float(np.mean(self.loss.value(predictions, self.labels)))
        weights = self.loss.derivative(predictions, self.labels) / self.count
        gradient = (self.rows * weights[:, None]).T @ self.cols
        return value, gradient

    def risk(self, core: np.ndarray) -> float:
        return float(np.mean(self.loss.value(self.predictions(core), self.labels)))


def _prepare(side: SideInfo, labeled: LabeledLike, loss: LossSpec) -> _Design:
    entries, labels = labeled_arrays(labeled)
    if labels.shape[0] == 0:
        raise ArgumentError("no labeled data to fit the core matrix")
    return _Design(side, entries, labels, loss.resolve(labels))


def objective_and_gradient(
    side: SideInfo, labeled: LabeledLike, core: np.ndarray, loss: LossSpec
) -> Tuple[float, np.ndarray]:
    """
    Empirical risk (1/N) sum loss((X M Y^T)_xi, label) and its gradient in M

    Returns:
        Tuple of (risk, d x d gradient)
    """
    return _prepare(side, labeled, loss).risk_and_gradient(np.asarray(core, dtype=float))


def _factored(design: _Design, a: np.ndarray, b: np.ndarray, lam: float):
    risk, grad_core = design.risk_and_gradient(a @ b.T)
    value = risk + lam * (np.sum(a * a) + np.sum(b * b))
    grad_a = grad_core @ b + 2.0 * lam * a
    grad_b = grad_core.T @ a + 2.0 * lam * b
    return value, grad_a, grad_b


def factored_objective_and_gradient(
    side: SideInfo,
    labeled: LabeledLike,
    a: np.ndarray,
    b: np.ndarray,
    lam: float,
    loss: LossSpec,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Lagrangian objective risk(X A B^T Y^T) + lam (||A||_F^2 + ||B||_F^2)

    Returns:
        Tuple of (objective, gradient in A, gradient in B)
    """
    design = _prepare(side, labeled, loss)
    return _factored(design, np.asarray(a, dtype=float), np.asarray(b, dtype=float), lam)


def _check_finite(value: float, iteration: int, method: str) -> None:
    if not math.isfinite(value):
        raise NumericalError(f"{method}: objective became non-finite at iteration {iteration}")


def _relative_change(previous: float, current: float) -> float:
    return abs(previous - current) / max(abs(previous), np.finfo(float).tiny)


def fit_projected(
    side: SideInfo,
    labeled: LabeledLike,
    budget: float,
    loss: Optional[LossSpec] = None,
    cfg: Optional[SolverConfig] = None,
) -> FitResult:
    """
    Projected gradient descent on the empirical risk over the nuclear ball

    Starts at M = 0 and projects onto {||M||_* <= budget} after every step.
    With step_size "auto" a backtracking (halving, Armijo) search keeps the
    objective nonincreasing.

    Args:
        side: Side information X, Y
        labeled: Labeled samples
        budget: Nuclear-norm budget
        loss: Loss (default squared)
        cfg: Solver settings

    Returns:
        FitResult satisfying the ball constraint

    Raises:
        ArgumentError: Empty labeled set or non-positive budget
        NumericalError: Non-finite objective
    """
    loss = loss or LossSpec()
    cfg = cfg or SolverConfig()
    if budget <= 0:
        raise ArgumentError(f"budget must be positive, got {budget}")

    design = _prepare(side, labeled, loss)
    d = side.d
    core = np.zeros((d, d))
    value, gradient = design.risk_and_gradient(core)
    _check_finite(value, 0, "fit_projected")
    trace = [value]
    step = INITIAL_STEP if cfg.step_size == "auto" else float(cfg.step_size)
    converged = False
    iteration = 0

    logger.info(f"Projected IMC: N={design.count} d={d} budget={budget:g} loss={design.loss.kind}")

    for iteration in range(1, cfg.max_iters + 1):
        if cfg.step_size == "auto":
            t = min(2.0 * step, INITIAL_STEP)
            accepted = False
            for _ in range(MAX_BACKTRACKS):
                candidate = project_nuclear_ball(core - t * gradient, budget)
                candidate_value = design.risk(candidate)
                if candidate_value <= value + ARMIJO * float(np.sum(gradient * (candidate - core))):
                    accepted = True
                    break
                t /= 2.0
            if not accepted:
                # No descent along the projected direction: stationary up to precision
                converged = True
                break
            step = t
        else:
            candidate = project_nuclear_ball(core - step * gradient, budget)

        new_value, new_gradient = design.risk_and_gradient(candidate)
        _check_finite(new_value, iteration, "fit_projected")
        change = _relative_change(value, new_value)
        core, value, gradient = candidate, new_value, new_gradient
        trace.append(value)

        if iteration % 100 == 0:
            logger.debug(f"  iter {iteration}: objective={value:.6e} step={step:.3e}")

        if change < cfg.tolerance:
            converged = True
            break

    if not converged:
        logger.warning(f"Projected IMC stopped at max_iters={cfg.max_iters} without converging")

    return FitResult(
        core=core,
        objective_trace=np.asarray(trace),
        train_risk=design.risk(core),
        nuclear_norm=nuclear_norm(core),
        method="projected",
        iterations=iteration,
        converged=converged,
        config={"budget": budget, "loss": design.loss.model_dump(), "solver": cfg.model_dump()},
    )


def fit_factored(
    side: SideInfo,
    labeled: LabeledLike,
    lam: float = 0.0,
    inner_rank: Optional[int] = None,
    loss: Optional[LossSpec] = None,
    cfg: Optional[SolverConfig] = None,
) -> FitResult:
    """
    Gradient descent on the factored Lagrangian form M = A B^T

    Minimizes risk(X A B^T Y^T) + lam (||A||_F^2 + ||B||_F^2) from a small
    random initialization.

    Args:
        side: Side information X, Y
        labeled: Labeled samples
        lam: Regularization weight (>= 0)
        inner_rank: Inner dimension k of A, B (default d)
        loss: Loss (default squared)
        cfg: Solver settings

    Returns:
        FitResult with factors (A, B)
    """
    loss = loss or LossSpec()
    cfg = cfg or SolverConfig()
    d = side.d
    k = d if inner_rank is None else inner_rank
    if lam < 0:
        raise ArgumentError(f"lambda must be non-negative, got {lam}")
    if not 1 <= k <= d:
        raise ArgumentError(f"inner rank must lie in [1, {d}], got {k}")

    design = _prepare(side, labeled, loss)
    scale = cfg.init_scale if cfg.init_scale is not None else 0.1 / math.sqrt(d)
    rng = generator(cfg.seed, "init")
    a = scale * rng.standard_normal((d, k))
    b = scale * rng.standard_normal((d, k))

    value, grad_a, grad_b = _factored(design, a, b, lam)
    _check_finite(value, 0, "fit_factored")
    trace = [value]
    step = INITIAL_STEP if cfg.step_size == "auto" else float(cfg.step_size)
    converged = False
    iteration = 0

    logger.info(f"Factored IMC: N={design.count} d={d} k={k} lambda={lam:g} loss={design.loss.kind}")

    for iteration in range(1, cfg.max_iters + 1):
        grad_sq = float(np.sum(grad_a * grad_a) + np.sum(grad_b * grad_b))
        if grad_sq == 0.0:
            converged = True
            break

        if cfg.step_size == "auto":
            t = min(2.0 * step, INITIAL_STEP)
            accepted = False
            for _ in range(MAX_BACKTRACKS):
                new_a, new_b = a - t * grad_a, b - t * grad_b
                candidate = _factored(design, new_a, new_b, lam)
                if candidate[0] <= value - ARMIJO * t * grad_sq:
                    accepted = True
                    break
                t /= 2.0
            if not accepted:
                converged = True
                break
            step = t
        else:
            new_a, new_b = a - step * grad_a, b - step * grad_b
            candidate = _factored(design, new_a, new_b, lam)

        new_value = candidate[0]
        _check_finite(new_value, iteration, "fit_factored")
        change = _relative_change(value, new_value)
        a, b = new_a, new_b
        value, grad_a, grad_b = candidate
        trace.append(value)

        if iteration % 100 == 0:
            logger.debug(f"  iter {iteration}: objective={value:.6e} step={step:.3e}")

        if change < cfg.tolerance:
            converged = True
            break

    if not converged:
        logger.warning(f"Factored IMC stopped at max_iters={cfg.max_iters} without converging")

    core = a @ b.T
    return FitResult(
        core=core,
        objective_trace=np.asarray(trace),
        train_risk=design.risk(core),
        nuclear_norm=nuclear_norm(core),
        method="factored",
        iterations=iteration,
        converged=converged,
        factors=(a, b),
        config={
            "lambda": lam,
            "inner_rank": k,
            "loss": design.loss.model_dump(),
            "solver": cfg.model_dump(),
        },
    )


def predict(
    side: SideInfo,
    core: np.ndarray,
    entries: Sequence[Sequence[int]],
    clip_range: Optional[Tuple[float, float]] = None,
) -> np.ndarray:
    """
    Entries of X M Y^T without forming the m x n product

    Args:
        side: Side information
        core: d x d core matrix
        entries: (k, 2) entry indices
        clip_range: Optional (lo, hi) clipping of the predictions

    Returns:
        (k,) predictions

    Raises:
        ArgumentError: If an entry is out of range
    """
    entries = ArrayValidator.require_entries(entries, side.m, side.n)
    values = np.einsum("ij,ij->i", side.x[entries[:, 0]] @ core, side.y[entries[:, 1]])
    if clip_range is not None:
        values = np.clip(values, clip_range[0], clip_range[1])
    return values


def empirical_risk(predictions: np.ndarray, labels: np.ndarray, loss: Optional[LossSpec] = None) -> float:
    """
    Mean loss over paired predictions and labels

    Raises:
        ArgumentError: On a length mismatch or empty input
    """
    loss = loss or LossSpec()
    predictions = np.asarray(predictions, dtype=float).reshape(-1)
    labels = np.asarray(labels, dtype=float).reshape(-1)
    ArrayValidator.require_same_length(predictions, labels, "empirical_risk")
    return float(np.mean(loss.resolve(labels).value(predictions, labels)))
