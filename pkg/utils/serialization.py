"""
JSON layouts for worlds, observations, factors and fit results
Dense matrices are row-major nested lists
"""

import json
import math
from pathlib import Path
from typing import Any, List, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from core.errors import ConfigurationError
from core.imc import FitResult
from core.subspace import SubspaceFactors
from core.synthgen import ObservationSet, SynthWorld

Matrix = List[List[float]]


class WorldPayload(BaseModel):
    """Serialized SynthWorld; the ground truth is recomputed on load"""

    model_config = ConfigDict(extra="forbid")

    x_star: Matrix
    y_star: Matrix
    core_star: Matrix
    pmf: Matrix

    @classmethod
    def from_world(cls, world: SynthWorld) -> "WorldPayload":
        return cls(
            x_star=world.x_star.tolist(),
            y_star=world.y_star.tolist(),
            core_star=world.core_star.tolist(),
            pmf=world.pmf.tolist(),
        )

    def to_world(self) -> SynthWorld:
        x_star = np.asarray(self.x_star, dtype=float)
        y_star = np.asarray(self.y_star, dtype=float)
        core = np.asarray(self.core_star, dtype=float)
        if x_star.ndim != 2 or y_star.ndim != 2 or core.ndim != 2:
            raise ConfigurationError("world matrices must be two-dimensional")
        return SynthWorld(
            x_star=x_star,
            y_star=y_star,
            core_star=core,
            pmf=np.asarray(self.pmf, dtype=float),
            ground_truth=x_star @ core @ y_star.T,
        )


class ObservationPayload(BaseModel):
    """Unlabeled (i, j) pairs and labeled (i, j, value) triples"""

    model_config = ConfigDict(extra="forbid")

    m: int
    n: int
    unlabeled: List[Tuple[int, int]] = []
    labeled: List[Tuple[int, int, float]] = []
    source: str = "synthetic"

    @classmethod
    def from_observations(cls, obs: ObservationSet) -> "ObservationPayload":
        labeled = [
            (int(i), int(j), float(v))
            for (i, j), v in zip(obs.labeled_entries.tolist(), obs.labeled_values.tolist())
        ]
        return cls(
            m=obs.m,
            n=obs.n,
            unlabeled=[tuple(pair) for pair in obs.unlabeled.tolist()],
            labeled=labeled,
            source=obs.source,
        )

    def to_observations(self) -> ObservationSet:
        labeled = np.asarray(self.labeled, dtype=float).reshape(-1, 3)
        return ObservationSet(
            m=self.m,
            n=self.n,
            unlabeled=np.asarray(self.unlabeled, dtype=np.int64).reshape(-1, 2),
            labeled_entries=labeled[:, :2].astype(np.int64),
            labeled_values=labeled[:, 2],
            source=self.source,
        )


class FactorsPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    u: Matrix
    sigma: List[float]
    v: Matrix

    @classmethod
    def from_factors(cls, factors: SubspaceFactors) -> "FactorsPayload":
        return cls(u=factors.u.tolist(), sigma=factors.sigma.tolist(), v=factors.v.tolist())

    def to_factors(self) -> SubspaceFactors:
        return SubspaceFactors(
            u=np.asarray(self.u, dtype=float),
            sigma=np.asarray(self.sigma, dtype=float),
            v=np.asarray(self.v, dtype=float),
        )


def fit_result_payload(fit: FitResult) -> dict:
    """FitResult as a JSON-ready dict: core matrix, trace, risks and config echo"""
    payload = {
        "method": fit.method,
        "core": fit.core.tolist(),
        "objective_trace": fit.objective_trace.tolist(),
        "train_risk": fit.train_risk,
        "nuclear_norm": fit.nuclear_norm,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "config": fit.config,
    }
    if fit.factors is not None:
        payload["factors"] = {"a": fit.factors[0].tolist(), "b": fit.factors[1].tolist()}
    return payload


def _jsonable(value: Any) -> Any:
    # Non-finite floats become strings; strict JSON has no inf/nan
    if isinstance(value, BaseModel):
        return _jsonable(value.model_dump())
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def dump_json(payload: Any, path: Union[str, Path]) -> Path:
    """Write a payload as indented, key-sorted JSON"""
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_world(path: Union[str, Path]) -> SynthWorld:
    """
    Read a world written by dump_json(WorldPayload.from_world(...))

    Raises:
        FileNotFoundError: Missing file
        ConfigurationError: Malformed JSON or layout
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e})") from e
    return WorldPayload.model_validate(raw).to_world()


def load_observations(path: Union[str, Path]) -> ObservationSet:
    """Read observations written by dump_json(ObservationPayload.from_observations(...))"""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e})") from e
    return ObservationPayload.model_validate(raw).to_observations()
