"""
Command handlers for the damc CLI
One method per subcommand (synth-grid, bounds, fit, real, replay)
"""

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from core.bounds import (
    AssumptionConstants,
    assumption_constants,
    error_rates,
    imc_complexity_terms,
    imc_excess_risk_bound,
    theorem_bound,
)
from core.errors import ConfigurationError, UndefinedCorrelationError
from core.experiments import (
    GridSpec,
    RealDataConfig,
    SolverChoice,
    append_real_csv,
    cell_means,
    correlation_report,
    damc_pipeline,
    load_ml100k,
    run_grid,
    run_real,
    scatter_series,
    write_grid_csv,
    write_scatter_csv,
)
from core.imc import LossConstants, LossSpec, empirical_risk, nuclear_norm, predict
from core.subspace import procrustes_distance, spectral_diagnostics, subspace_recovery_bound, truncated_svd
from core.synthgen import (
    ObservationSet,
    SynthConfig,
    SynthWorld,
    block_model_pmf,
    draw_labeled,
    draw_unlabeled_counts,
    make_world,
    one_hot,
    uniform_pmf,
)
from handlers.reports import bound_rows, constants_rows, format_frame, format_table, rates_rows
from utils.rng import derive_seed
from utils.serialization import (
    FactorsPayload,
    ObservationPayload,
    WorldPayload,
    dump_json,
    fit_result_payload,
    load_observations,
    load_world,
)

logger = logging.getLogger(__name__)


class WorldSource(BaseModel):
    """
    Where the bounds command takes P, X* and Y* from

    Kinds:
    - uniform: uniform P on m x n, d = 1, all-ones side information
    - block: block model with `groups` equal groups of `group_size`
    - synth: make_world(synth)
    - file: a world JSON at `path`
    - constants: no world; m, n and every constant come from the config
    """

    model_config = ConfigDict(extra="forbid")

    kind: Literal["uniform", "block", "synth", "file", "constants"] = "synth"
    m: int = Field(200, ge=1)
    n: int = Field(200, ge=1)
    groups: int = Field(4, ge=1)
    group_size: int = Field(50, ge=1)
    mix: float = Field(0.5, ge=0, le=1)
    synth: SynthConfig = SynthConfig()
    path: Optional[str] = None


class BoundsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    world: WorldSource = WorldSource()
    nuclear_budget: Optional[float] = Field(None, ge=0)
    unlabeled: int = Field(100000, ge=1)
    labeled: int = Field(1000, ge=1)
    delta: float = Field(0.05, gt=0, lt=1)
    loss: Union[LossSpec, LossConstants] = LossSpec()
    constants: Dict[str, float] = Field(default_factory=dict)
    appendix_form: bool = False


class FitConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    world: SynthConfig = SynthConfig()
    unlabeled: int = Field(10000, ge=1)
    labeled: int = Field(1000, ge=1)
    test_size: int = Field(5000, ge=1)
    solver: SolverChoice = SolverChoice()


class ReplayConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    unlabeled: int = Field(10000, ge=1)
    labeled: int = Field(1000, ge=1)
    # labeled set from a file written by fit; replaces the fresh draw
    observations_path: Optional[str] = None
    test_size: int = Field(5000, ge=1)
    noise_sd: float = Field(0.0, ge=0)
    solver: SolverChoice = SolverChoice()
    seed: int = Field(0, ge=0)


class RealRunConfig(BaseModel):
    """Methods x removal rates on one dataset"""

    model_config = ConfigDict(extra="forbid")

    dataset_path: Optional[str] = None
    methods: List[Literal["damc", "softimpute", "userknn"]] = ["damc", "softimpute", "userknn"]
    p_values: List[float] = [0.0, 0.9]
    train_fraction: float = Field(0.8, ge=0, le=1)
    method_configs: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    seed: int = Field(0, ge=0)


class CommandHandlers:
    """
    Handles all damc subcommands

    Commands:
    - synth-grid: run the (M, N) grid, write grid/scatter CSVs and a summary
    - bounds: print assumption constants and the excess-risk bound
    - fit: fit one synthetic instance and write the FitResult
    - real: label-removal comparison on a rating dataset
    - replay: re-run the estimator on a serialized world
    """

    def __init__(self, config):
        """
        Initialize command handlers

        Args:
            config: DamcConfig instance with environment settings
        """
        self.config = config

    def _output_dir(self, out: Optional[str]) -> Path:
        path = Path(out) if out else self.config.output_dir
        path.mkdir(parents=True, exist_ok=True)
        return path

    def synth_grid_command(self, run_config: Dict[str, Any], out: Optional[str], jobs: Optional[int]) -> int:
        """
        Handle synth-grid: grid CSV, scatter CSV and summary JSON

        Failed runs keep the grid going and show up in the error column.
        """
        spec = GridSpec.model_validate(run_config)
        out_dir = self._output_dir(out)
        jobs = jobs or self.config.jobs

        records = run_grid(spec, jobs=jobs)
        write_grid_csv(records, out_dir / "grid.csv")

        means = cell_means(records)
        summary: Dict[str, Any] = {
            "runs": len(records),
            "failed_runs": sum(1 for r in records if r.error is not None),
            "cell_means": means.to_dict(orient="records"),
            "pearson_r": None,
        }
        try:
            report = correlation_report(records)
            summary["pearson_r"] = report.pearson_r
            series = report.series
        except UndefinedCorrelationError as e:
            logger.warning(f"Correlation undefined: {e}")
            summary["correlation_error"] = str(e)
            series = scatter_series(records)
        write_scatter_csv(series, out_dir / "scatter.csv")
        dump_json(summary, out_dir / "summary.json")

        print(
            format_frame(
                "Per-cell mean gap",
                ["M", "N", "mean_gap", "dist_u", "dist_v"],
                means[["m_unlabeled", "n_labeled", "mean_gap", "mean_dist_u", "mean_dist_v"]].itertuples(
                    index=False
                ),
            )
        )
        print(f"\npearson r: {summary['pearson_r']}")
        logger.info(f"Wrote grid results to {out_dir}")
        return 0

    def bounds_command(self, run_config: Dict[str, Any], out: Optional[str]) -> int:
        """Handle bounds: print constants, bound terms and rates, write bounds.json"""
        cfg = BoundsConfig.model_validate(run_config)
        source = cfg.world
        payload: Dict[str, Any] = {}

        if source.kind == "constants":
            m, n = source.m, source.n
            try:
                constants = AssumptionConstants.model_validate(cfg.constants)
            except ValueError as e:
                raise ConfigurationError(f"constants world needs every constant: {e}") from e
            world = None
        else:
            world = _bounds_world(source)
            m, n = world.m, world.n
            budget = cfg.nuclear_budget if cfg.nuclear_budget is not None else nuclear_norm(world.core_star)
            constants = assumption_constants(world.pmf, world.x_star, world.y_star, budget, world.d)
            constants = _override_constants(constants, cfg.constants)

        report = theorem_bound(
            constants,
            m,
            n,
            cfg.unlabeled,
            cfg.labeled,
            cfg.delta,
            cfg.loss,
            appendix_form=cfg.appendix_form,
        )
        rates = error_rates(constants, m, n, cfg.unlabeled, cfg.labeled, cfg.loss)
        payload.update({"m": m, "n": n, "constants": constants, "bound": report, "rates": rates})

        print(format_table("Assumption constants", constants_rows(constants)))
        print()
        print(format_table("Excess-risk bound", bound_rows(report)))
        print()
        print(format_table("Rates", rates_rows(rates)))

        if world is not None:
            sigma1, sigma2 = imc_complexity_terms(world.pmf, world.x_star, world.y_star)
            budget = math.sqrt(constants.r) * constants.d
            imc_bound = imc_excess_risk_bound(
                sigma1, sigma2, budget, constants.x_star, constants.y_star,
                constants.d, cfg.labeled, cfg.delta, cfg.loss,
            )
            recovery = subspace_recovery_bound(
                constants.p_star, constants.eigengap, m, n, cfg.unlabeled, cfg.delta
            )
            payload.update(
                {
                    "imc": {"sigma1": sigma1, "sigma2": sigma2, "excess_risk_bound": imc_bound},
                    "subspace_recovery": {
                        "rhs": recovery.rhs,
                        "threshold": recovery.threshold,
                        "condition_met": recovery.condition_met,
                    },
                }
            )
            print()
            print(
                format_table(
                    "Known-subspace IMC and subspace recovery",
                    [
                        ("sigma1", sigma1),
                        ("sigma2", sigma2),
                        ("IMC excess-risk bound", imc_bound),
                        ("Procrustes bound", recovery.rhs),
                        ("Procrustes M threshold", recovery.threshold),
                        ("Procrustes condition met", recovery.condition_met),
                    ],
                )
            )

        path = dump_json(payload, self._output_dir(out) / "bounds.json")
        logger.info(f"Wrote {path}")
        return 0

    def fit_command(self, run_config: Dict[str, Any], out: Optional[str]) -> int:
        """Handle fit: one synthetic instance, writes fit.json, world.json and observations.json"""
        cfg = FitConfig.model_validate(run_config)
        out_dir = self._output_dir(out)
        world = make_world(cfg.world)
        labeled = draw_labeled(world, cfg.labeled, cfg.world.noise_sd, cfg.world.seed)
        payload = _evaluate_world(
            world, cfg.unlabeled, labeled, cfg.test_size, cfg.world.noise_sd, cfg.solver, cfg.world.seed
        )

        dump_json(WorldPayload.from_world(world), out_dir / "world.json")
        dump_json(ObservationPayload.from_observations(labeled), out_dir / "observations.json")
        dump_json(payload, out_dir / "fit.json")
        print(format_table("Fit", _fit_rows(payload)))
        logger.info(f"Wrote fit results to {out_dir}")
        return 0

    def real_command(self, run_config: Dict[str, Any], out: Optional[str]) -> int:
        """Handle real: one CSV row per (method, p)"""
        cfg = RealRunConfig.model_validate(run_config)
        dataset_path = cfg.dataset_path or self.config.ml100k_path
        if not dataset_path:
            raise ConfigurationError("no dataset path: set dataset_path or DAMC_ML100K_PATH")

        cells = [
            RealDataConfig(
                dataset_path=dataset_path,
                label_removal_p=p,
                train_fraction=cfg.train_fraction,
                method=method,
                method_config=cfg.method_configs.get(method, {}),
                seed=cfg.seed,
            )
            for method in cfg.methods
            for p in cfg.p_values
        ]
        if not Path(dataset_path).is_file():
            raise FileNotFoundError(f"dataset not found: {dataset_path}")

        dataset = load_ml100k(dataset_path)
        results = [run_real(cell, dataset) for cell in cells]
        path = append_real_csv(results, self._output_dir(out) / "real.csv")

        print(
            format_frame(
                "Test RMSE", ["method", "p", "rmse"], [(r.method, r.p, r.rmse) for r in results]
            )
        )
        logger.info(f"Appended {len(results)} rows to {path}")
        return 0

    def replay_command(self, world_path: str, run_config: Dict[str, Any], out: Optional[str]) -> int:
        """Handle replay: diagnostics and a fresh fit on a serialized world"""
        cfg = ReplayConfig.model_validate(run_config)
        world = load_world(world_path)
        diagnostics = spectral_diagnostics(world.pmf, world.d)

        if cfg.observations_path:
            labeled = load_observations(cfg.observations_path)
            if (labeled.m, labeled.n) != (world.m, world.n):
                raise ConfigurationError(
                    f"observations are {labeled.m}x{labeled.n}, world is {world.m}x{world.n}"
                )
            logger.info(f"Replaying {labeled.num_labeled} labeled entries from {cfg.observations_path}")
        else:
            labeled = draw_labeled(world, cfg.labeled, cfg.noise_sd, cfg.seed)

        payload = _evaluate_world(world, cfg.unlabeled, labeled, cfg.test_size, cfg.noise_sd, cfg.solver, cfg.seed)
        payload["spectral"] = {
            "spectral_norm": diagnostics.spectral_norm,
            "eigengap": diagnostics.eigengap,
            "condition": diagnostics.condition,
            "singular_values": diagnostics.singular_values,
        }

        dump_json(payload, self._output_dir(out) / "replay.json")
        print(
            format_table(
                "Replay",
                [
                    ("m", world.m),
                    ("n", world.n),
                    ("d", world.d),
                    ("||P||", diagnostics.spectral_norm),
                    ("eigengap", diagnostics.eigengap),
                    ("kappa*", diagnostics.condition),
                ]
                + _fit_rows(payload),
            )
        )
        return 0


def _bounds_world(source: WorldSource) -> SynthWorld:
    if source.kind == "uniform":
        ones_m, ones_n = np.ones((source.m, 1)), np.ones((source.n, 1))
        return SynthWorld(
            x_star=ones_m,
            y_star=ones_n,
            core_star=np.ones((1, 1)),
            pmf=uniform_pmf(source.m, source.n),
            ground_truth=np.ones((source.m, source.n)),
        )
    if source.kind == "block":
        groups = np.repeat(np.arange(source.groups), source.group_size)
        x_star = one_hot(groups, source.groups)
        core = np.eye(source.groups)
        return SynthWorld(
            x_star=x_star,
            y_star=x_star.copy(),
            core_star=core,
            pmf=block_model_pmf(source.groups, source.group_size, source.mix),
            ground_truth=x_star @ core @ x_star.T,
        )
    if source.kind == "file":
        if not source.path:
            raise ConfigurationError("world kind 'file' needs a path")
        return load_world(source.path)
    return make_world(source.synth)


def _override_constants(constants: AssumptionConstants, overrides: Dict[str, float]) -> AssumptionConstants:
    unknown = set(overrides) - set(AssumptionConstants.model_fields)
    if unknown:
        raise ConfigurationError(f"unknown constants: {', '.join(sorted(unknown))}")
    if not overrides:
        return constants
    logger.info(f"Overriding measured constants: {overrides}")
    return AssumptionConstants.model_validate({**constants.model_dump(), **overrides})


def _evaluate_world(
    world: SynthWorld,
    unlabeled: int,
    labeled: ObservationSet,
    test_size: int,
    noise_sd: float,
    solver: SolverChoice,
    seed: int,
) -> Dict[str, Any]:
    counts = draw_unlabeled_counts(world, unlabeled, seed)
    test = draw_labeled(world, test_size, noise_sd, derive_seed(seed, "test"))

    result = damc_pipeline(counts, labeled, world.d, solver, budget=nuclear_norm(world.core_star), seed=seed)
    predictions = predict(result.side, result.fit.core, test.labeled_entries)
    test_risk = empirical_risk(predictions, test.labeled_values, result.loss)

    truth = truncated_svd(world.pmf, world.d)
    dist_u, _ = procrustes_distance(result.factors.u, truth.u)
    dist_v, _ = procrustes_distance(result.factors.v, truth.v)

    return {
        "fit": fit_result_payload(result.fit),
        "factors": FactorsPayload.from_factors(result.factors),
        "unlabeled": unlabeled,
        "labeled": labeled.num_labeled,
        "seed": seed,
        "train_risk": result.fit.train_risk,
        "test_risk": test_risk,
        "gap": test_risk - result.fit.train_risk,
        "dist_u": dist_u,
        "dist_v": dist_v,
    }


def _fit_rows(payload: Dict[str, Any]) -> List:
    fit = payload["fit"]
    return [
        ("method", fit["method"]),
        ("iterations", fit["iterations"]),
        ("converged", fit["converged"]),
        ("nuclear norm", fit["nuclear_norm"]),
        ("train risk", payload["train_risk"]),
        ("test risk", payload["test_risk"]),
        ("gap", payload["gap"]),
        ("dist_u", payload["dist_u"]),
        ("dist_v", payload["dist_v"]),
    ]

