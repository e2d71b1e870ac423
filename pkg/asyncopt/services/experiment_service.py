"""End-to-end experiment pipeline and b-sweeps"""

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np
from dotenv import dotenv_values
from pydantic import ValidationError

from asyncopt.core.config import settings
from asyncopt.core.errors import AdmissibilityError, ConfigError, InvariantViolation, StageError
from asyncopt.models.problem import CompositeProblem, Regularizer
from asyncopt.models.schemas import (
    BoundConstants,
    BoundKind,
    ConvexityKind,
    DataSource,
    DelayKind,
    EngineKind,
    ExperimentConfig,
    ProblemFamily,
    Provenance,
    StepSumSource,
    SummaryEntry,
)
from asyncopt.models.trace import AveragedTrace, DelaySequence, RunTrace
from asyncopt.services.bcd_service import BcdService
from asyncopt.services.bound_service import BoundService, DominanceReport
from asyncopt.services.dataset_service import DatasetService
from asyncopt.services.delay_service import DelayService
from asyncopt.services.export_service import ExportService, format_float
from asyncopt.services.piag_service import PiagService
from asyncopt.services.problem_service import ProblemService
from asyncopt.services.schedule_service import ScheduleService

logger = logging.getLogger(__name__)

# Reference logistic-regression settings; values matching them are tagged "paper"
REFERENCE_SETTINGS: Dict[str, Any] = {
    "a": 0.1,
    "c": 0.0,
    "lambda1": 1e-5,
    "lambda2": 1e-4,
    "n_batches": 10,
    "n_blocks": 14,
}
REFERENCE_B_VALUES = (0.2, 0.6, 1.0)


class ExperimentResult(NamedTuple):
    output_dir: Path
    trace: Union[RunTrace, AveragedTrace]
    reports: Dict[BoundKind, DominanceReport]
    summary: List[SummaryEntry]


class SweepResult(NamedTuple):
    output_dir: Path
    b_values: List[float]
    ks: np.ndarray
    errors: Dict[float, np.ndarray]
    ordered: bool


class ExperimentService:
    """Runs configured experiments and writes their artifacts"""

    @staticmethod
    def load_config(
        path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None
    ) -> ExperimentConfig:
        """
        Flat key=value file, then overrides, validated as one ExperimentConfig

        Args:
            path: Optional config file in dotenv syntax
            overrides: Values taking precedence over the file (None entries ignored)

        Returns:
            Validated ExperimentConfig
        """
        values: Dict[str, Any] = {
            "horizon": settings.default_horizon,
            "h": settings.default_h,
            "trials": settings.default_trials,
            "output_dir": settings.output_dir,
        }
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"Config file not found: {path}")
            for key, value in dotenv_values(path).items():
                if value is None:
                    raise ConfigError(f"{path}: key '{key}' has no value")
                values[key.lower()] = value
        if overrides:
            values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return ExperimentConfig(**values)
        except ValidationError as e:
            raise ConfigError(f"Invalid experiment config: {e}") from e

    def _stage(self, name: str, fn: Callable, *args, **kwargs):
        logger.info(f"Stage {name}")
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except Exception as e:
            logger.error(f"Stage {name} failed: {e}", exc_info=True)
            raise StageError(name, e) from e

    def build_problem(self, config: ExperimentConfig) -> CompositeProblem:
        n_blocks = config.n_blocks if config.engine == EngineKind.BCD else 1
        if config.family == ProblemFamily.LOGISTIC:
            dataset = self._dataset(config)
            return DatasetService.build_logistic_problem(
                dataset,
                config.lambda1,
                config.lambda2,
                config.n_batches,
                config.data_seed,
                n_blocks=n_blocks,
            )
        if config.family == ProblemFamily.LASSO:
            if config.data_source == DataSource.LIBSVM:
                dataset = self._dataset(config)
                design, response = dataset.features.toarray(), dataset.labels.astype(np.float64)
            else:
                design, response, _ = DatasetService.synthesize_regression(
                    config.n_samples, config.dimension, config.data_seed
                )
            return DatasetService.build_lasso_problem(
                design,
                response,
                config.lambda1,
                n_batches=config.n_batches,
                partition=ProblemService.even_partition(design.shape[1], n_blocks),
                shuffle_seed=config.data_seed,
            )
        A = DatasetService.make_spd_matrix(config.dimension, config.cond, config.data_seed)
        b = np.random.default_rng(config.data_seed + 1).standard_normal(config.dimension)
        return DatasetService.build_quadratic_problem(
            A,
            b,
            Regularizer.l1(config.lambda1) if config.lambda1 > 0 else Regularizer.zero(),
            ProblemService.even_partition(config.dimension, n_blocks),
        )

    @staticmethod
    def _dataset(config: ExperimentConfig):
        if config.data_source == DataSource.LIBSVM:
            return DatasetService.load_libsvm(config.data_path)
        return DatasetService.synthesize_classification(
            config.n_samples, config.dimension, config.sparsity, config.data_seed
        )

    @staticmethod
    def build_delays(config: ExperimentConfig, problem: CompositeProblem) -> DelaySequence:
        params = config.delay_params
        if config.delay_kind == DelayKind.ADVERSARIAL:
            return DelayService.build_adversarial_delays(params, config.horizon)
        if config.engine == EngineKind.BCD:
            return DelayService.sample_global_stochastic_delays(
                params, config.horizon, config.delay_seed
            )
        return DelayService.sample_stochastic_delays(
            params, config.horizon, problem.n_components, config.delay_seed
        )

    @staticmethod
    def _validate_delays(seq: DelaySequence, config: ExperimentConfig) -> None:
        first = DelayService.validate_delay_bound(seq, config.delay_params)
        if first is not None:
            raise InvariantViolation(f"Generated delays break the delay bound at k={first}")

    @staticmethod
    def _check_admissibility(policy, seq: DelaySequence, config: ExperimentConfig) -> None:
        try:
            ScheduleService.require_admissible(policy, seq, config.horizon)
        except AdmissibilityError as e:
            if not config.allow_inadmissible:
                raise
            logger.warning(f"Continuing despite inadmissible schedule: {e}")

    def run_experiment(self, config: ExperimentConfig) -> ExperimentResult:
        """
        Full pipeline: problem, reference solve, delays, schedule, engine, bounds, artifacts

        Args:
            config: Validated experiment configuration

        Returns:
            ExperimentResult; artifacts are written to config.output_dir
        """
        output_dir = Path(config.output_dir)
        logger.info(f"Running {config.engine.value} experiment into {output_dir}")

        problem = self._stage("build_problem", self.build_problem, config)
        if problem.optimal_value is None:
            problem = self._stage("reference_solve", ProblemService.solve_and_attach, problem)
        seq = self._stage("delays", self.build_delays, config, problem)
        self._stage("validate_delays", self._validate_delays, seq, config)

        smoothness = (
            problem.blockwise_smoothness
            if config.engine == EngineKind.BCD
            else problem.aggregate_smoothness
        )
        policy = self._stage(
            "schedule", ScheduleService.schedule_for, config.engine, config.h, smoothness, config.delay_params
        )
        self._stage("admissibility", self._check_admissibility, policy, seq, config)

        x0 = np.zeros(problem.dimension)
        per_trial: List[RunTrace] = []
        if config.engine == EngineKind.PIAG:
            trace = self._stage(
                "engine",
                PiagService.piag_run,
                problem,
                policy,
                seq,
                x0,
                allow_inadmissible=True,
            )
        else:
            result = self._stage(
                "engine",
                BcdService.bcd_run,
                problem,
                policy,
                seq,
                x0,
                seed=config.bcd_seed,
                n_trials=config.trials,
                allow_inadmissible=True,
            )
            trace, per_trial = result.averaged, result.traces

        initial_gap = max(ProblemService.eval_objective(problem, x0) - problem.optimal_value, 0.0)
        distance_sq = float(np.sum((x0 - problem.minimizer) ** 2))
        constants = BoundConstants(
            h=config.h,
            smoothness=smoothness,
            params=config.delay_params,
            initial_gap=initial_gap,
            distance_sq=distance_sq,
            sigma=problem.sigma,
            n_blocks=problem.n_blocks,
        )
        source = StepSumSource.CLOSED_FORM if config.paper_faithful else StepSumSource.EXACT
        curves = self._stage("bounds", self._curves, config.engine, problem, constants, policy, source)
        reports = {
            kind: BoundService.dominance_report(
                curve, trace, stderr_multiplier=3.0 if config.engine == EngineKind.BCD else 0.0
            )
            for kind, curve in curves.items()
        }

        summary = self._summary(config, problem, curves, reports, trace, seq, source)
        self._stage(
            "export", self._export, output_dir, trace, per_trial, curves, summary
        )
        return ExperimentResult(output_dir, trace, reports, summary)

    @staticmethod
    def _curves(engine, problem, constants, policy, source):
        if engine == EngineKind.BCD:
            kinds = [BoundKind.BCD_NONCONVEX]
        else:
            kinds = [BoundKind.PIAG_NONCONVEX]
            if problem.convexity in (ConvexityKind.CONVEX, ConvexityKind.PROXIMAL_PL):
                kinds.insert(0, BoundKind.PIAG_CONVEX)
            if problem.convexity == ConvexityKind.PROXIMAL_PL:
                kinds.append(BoundKind.PIAG_PL)
        return {kind: BoundService.build_curve(kind, constants, policy, source) for kind in kinds}

    @staticmethod
    def _export(output_dir: Path, trace, per_trial, curves, summary) -> None:
        ExportService.write_trace_csv(trace, output_dir / "trace.csv")
        for idx, trial in enumerate(per_trial):
            ExportService.write_trace_csv(trial, output_dir / "trials" / f"trial_{idx:03d}.csv")
        primary = next(iter(curves.values()))
        ExportService.write_bound_csv(
            trace.ks, BoundService.eval_bounds(primary, trace.ks), output_dir / "bound.csv"
        )
        for kind, curve in curves.items():
            ExportService.write_bound_csv(
                trace.ks, BoundService.eval_bounds(curve, trace.ks), output_dir / f"bound_{kind.value}.csv"
            )
        ExportService.write_summary(summary, output_dir / "summary.txt")

    @staticmethod
    def _summary(config, problem, curves, reports, trace, seq, source) -> List[SummaryEntry]:
        def entry(key, value, provenance, note=None):
            text = format_float(value) if isinstance(value, (float, np.floating)) else str(value)
            return SummaryEntry(key=key, value=text, provenance=provenance, note=note)

        def config_entry(key):
            value = getattr(config, key)
            paper = key in REFERENCE_SETTINGS and value == REFERENCE_SETTINGS[key]
            if key == "b":
                paper = value in REFERENCE_B_VALUES
            if isinstance(value, (EngineKind, ProblemFamily, DataSource, DelayKind)):
                value = value.value
            return entry(key, value, Provenance.PAPER if paper else Provenance.CONFIG)

        entries = [
            config_entry(key)
            for key in (
                "engine", "family", "data_source", "delay_kind", "a", "b", "c", "h",
                "horizon", "lambda1", "lambda2", "n_batches", "n_blocks",
            )
        ]
        entries.append(entry("stepsum_source", source.value, Provenance.CONFIG))
        entries += [
            entry("n_components", problem.n_components, Provenance.DERIVED),
            entry("dimension", problem.dimension, Provenance.DERIVED),
            entry("L", problem.aggregate_smoothness, Provenance.DERIVED),
            entry("L_hat", problem.blockwise_smoothness, Provenance.DERIVED),
            entry("P_star", problem.optimal_value, Provenance.DERIVED, "reference solve"),
            entry("max_delay", int(np.max(seq.values)), Provenance.DERIVED),
        ]
        if problem.sigma is not None:
            entries.append(entry("sigma", problem.sigma, Provenance.DERIVED))
        first_curve = next(iter(curves.values()))
        entries.append(entry("initial_gap", first_curve.constants.initial_gap, Provenance.DERIVED))
        for key, value in BoundService.diagnostics(first_curve).items():
            note = "implementation-defined surrogate" if key in ("lambda", "rho") else None
            entries.append(entry(key, value, Provenance.DERIVED, note))
        entries.append(entry("final_objective_error", trace.objective_error[-1], Provenance.DERIVED))
        entries.append(entry("final_running_best", trace.running_best[-1], Provenance.DERIVED))
        for kind, report in reports.items():
            entries.append(entry(f"violations_{kind.value}", report.n_violations, Provenance.DERIVED))
        return entries

    def sweep(
        self,
        template: ExperimentConfig,
        b_values: Sequence[float],
        workers: Optional[int] = None,
    ) -> SweepResult:
        """
        One experiment per b, gathered in b order

        Args:
            template: Config whose b and output_dir are replaced per run
            b_values: Delay growth exponents to compare
            workers: Process count (settings.sweep_workers by default)

        Returns:
            SweepResult with the aligned objective errors
        """
        if not b_values:
            raise ConfigError("sweep needs at least one b value")
        root = Path(template.output_dir)
        configs = []
        for b in b_values:
            values = template.model_dump()
            values.update(b=float(b), output_dir=str(root / f"b_{b:g}"))
            try:
                configs.append(ExperimentConfig(**values))
            except ValidationError as e:
                raise ConfigError(f"Invalid b value {b}: {e}") from e

        workers = settings.sweep_workers if workers is None else workers
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                errors = list(pool.map(_final_errors, configs))
        else:
            errors = [_final_errors(config) for config in configs]

        common = min(len(e) for e in errors)
        ks = np.arange(common)
        columns = {f"error_b{b:g}": e[:common] for b, e in zip(b_values, errors)}
        ExportService.write_comparison_csv(ks, columns, root / "comparison.csv")

        ordered_by_b = sorted(zip(b_values, (e[common - 1] for e in errors)))
        finals = [err for _, err in ordered_by_b]
        ordered = all(lo <= hi for lo, hi in zip(finals, finals[1:]))
        lines = [
            SummaryEntry(
                key=f"final_error_b{b:g}", value=format_float(err), provenance=Provenance.DERIVED
            )
            for b, err in ordered_by_b
        ]
        lines.append(
            SummaryEntry(key="final_k", value=str(common - 1), provenance=Provenance.DERIVED)
        )
        lines.append(
            SummaryEntry(
                key="ordered_by_b",
                value=str(ordered).lower(),
                provenance=Provenance.DERIVED,
                note="error at the final common k is nondecreasing in b",
            )
        )
        ExportService.write_summary(lines, root / "sweep_summary.txt")
        logger.info(f"Sweep over b={list(b_values)} finished, ordered={ordered}")
        return SweepResult(root, list(b_values), ks, dict(zip(b_values, errors)), ordered)


def _final_errors(config: ExperimentConfig) -> np.ndarray:
    """Sweep worker: run one experiment and return its objective-error column"""
    return ExperimentService().run_experiment(config).trace.objective_error
