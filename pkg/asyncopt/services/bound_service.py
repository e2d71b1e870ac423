"""Theoretical bound curves and their comparison against run traces"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional, Union

import numpy as np

from asyncopt.models.schemas import (
    BoundConstants,
    BoundKind,
    EngineKind,
    StepSizePolicy,
    StepSumSource,
)
from asyncopt.models.trace import AveragedTrace, RunTrace
from asyncopt.services.schedule_service import ScheduleService

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundCurve:
    """Upper-bound sequence of one guarantee, evaluable at any k"""

    kind: BoundKind
    constants: BoundConstants
    policy: StepSizePolicy
    source: StepSumSource = StepSumSource.EXACT


class DominanceReport(NamedTuple):
    violations: np.ndarray
    n_violations: int
    first_violation: Optional[int]
    max_ratio: float


class BoundService:
    """Builds, evaluates and audits the convergence guarantees"""

    @staticmethod
    def build_curve(
        kind: BoundKind,
        constants: BoundConstants,
        policy: StepSizePolicy,
        source: StepSumSource = StepSumSource.EXACT,
    ) -> BoundCurve:
        """
        Bind constants and a step-size policy into a curve

        Args:
            kind: Which guarantee
            constants: h, L (or L-hat), delay params, initial gap and extras
            policy: Step-size policy whose sums enter the bound
            source: Exact step-size sums or the closed-form lower bound

        Returns:
            BoundCurve
        """
        if kind == BoundKind.PIAG_CONVEX and constants.distance_sq is None:
            raise ValueError("The convex bound needs ||x_0 - x*||^2")
        if kind == BoundKind.PIAG_PL and constants.sigma is None:
            raise ValueError("The proximal-PL bound needs sigma")
        if kind == BoundKind.BCD_NONCONVEX and constants.n_blocks is None:
            raise ValueError("The Async-BCD bound needs the block count m")
        if policy.h != constants.h or policy.smoothness != constants.smoothness:
            raise ValueError("Bound constants and step-size policy disagree on h or L")
        if source == StepSumSource.CLOSED_FORM and not policy.is_schedule:
            raise ValueError("The closed-form step-size sum needs a delay-matched schedule")
        return BoundCurve(kind=kind, constants=constants, policy=policy, source=source)

    @staticmethod
    def eval_bound(curve: BoundCurve, k: int) -> float:
        return float(BoundService.eval_bounds(curve, np.array([k]))[0])

    @staticmethod
    def eval_bounds(curve: BoundCurve, ks: np.ndarray) -> np.ndarray:
        """Bound value at every k in ``ks``"""
        sums = ScheduleService.stepsums(curve.policy, np.asarray(ks), curve.source)
        return BoundService.bound_from_stepsum(curve, sums)

    @staticmethod
    def bound_from_stepsum(curve: BoundCurve, sums: np.ndarray) -> np.ndarray:
        """Bound as a function of S = sum_{t<k} gamma_t"""
        const = curve.constants
        h, L, gap = const.h, const.smoothness, const.initial_gap
        sums = np.asarray(sums, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            if curve.kind == BoundKind.PIAG_NONCONVEX:
                return 2.0 * (h * h - h + 1.0) * gap / (1.0 - h) / sums
            if curve.kind == BoundKind.BCD_NONCONVEX:
                return 4.0 * const.n_blocks * gap / ((1.0 - h) * sums)
        if curve.kind == BoundKind.PIAG_CONVEX:
            a0 = BoundService.a0(h, L)
            return (gap + const.distance_sq / (2.0 * a0)) / (1.0 + sums / a0)
        return gap * np.exp(-BoundService.pl_exponent(h, L, const.sigma) * sums)

    @staticmethod
    def a0(h: float, smoothness: float) -> float:
        return h * (h + 1.0) / (smoothness * (1.0 - h))

    @staticmethod
    def pl_exponent(h: float, smoothness: float, sigma: float) -> float:
        """kappa = 3 beta sigma (1 - h~) / (4 (h~^2 - h~ + 1))"""
        h_tilde = (1.0 + h) / 2.0
        beta = min(1.0, (1.0 - h) / (2.0 * h) * smoothness / sigma)
        return 3.0 * beta * sigma * (1.0 - h_tilde) / (4.0 * (h_tilde ** 2 - h_tilde + 1.0))

    @staticmethod
    def diagnostics(curve: BoundCurve) -> Dict[str, float]:
        """
        Derived constants reported next to a curve

        lambda is exp(-kappa * rate_constant), so the proximal-PL bound behaves
        like lambda^phi(k); it is an implementation-defined surrogate. For b = 1
        the same curve decays like k^(-rho) with rho = kappa * rate_constant.
        """
        const = curve.constants
        h, L = const.h, const.smoothness
        h_tilde = (1.0 + h) / 2.0
        values = {"a_0": BoundService.a0(h, L), "h_tilde": h_tilde}
        if const.sigma is not None:
            values["beta"] = min(1.0, (1.0 - h) / (2.0 * h) * L / const.sigma)
            kappa = BoundService.pl_exponent(h, L, const.sigma)
            values["kappa"] = kappa
            if curve.policy.is_schedule:
                exponent = kappa * ScheduleService.rate_constant(curve.policy)
                values["lambda"] = math.exp(-exponent)
                if const.params.b == 1.0:
                    values["rho"] = exponent
        return values

    @staticmethod
    def dominance_report(
        curve: BoundCurve,
        trace: Union[RunTrace, AveragedTrace],
        stderr_multiplier: float = 0.0,
        rtol: float = 1e-12,
    ) -> DominanceReport:
        """
        Flag every k where the empirical metric exceeds the bound

        The metric is the objective error for the convex and proximal-PL
        curves and the running best stationarity measure otherwise. For an
        averaged trace the metric may exceed the bound by ``stderr_multiplier``
        standard errors.
        """
        expected_engine = EngineKind.BCD if curve.kind == BoundKind.BCD_NONCONVEX else EngineKind.PIAG
        if trace.engine != expected_engine:
            raise ValueError(f"{curve.kind.value} curve cannot judge a {trace.engine.value} trace")
        expected_gamma = ScheduleService.step_sizes(curve.policy, trace.gamma.size)
        if not np.array_equal(expected_gamma, trace.gamma):
            raise ValueError("Trace was produced with a different step-size policy")

        uses_objective = curve.kind in (BoundKind.PIAG_CONVEX, BoundKind.PIAG_PL)
        metric = trace.objective_error if uses_objective else trace.running_best
        slack = np.zeros_like(metric)
        if isinstance(trace, AveragedTrace) and stderr_multiplier:
            stderr = trace.objective_error_stderr if uses_objective else trace.running_best_stderr
            slack = stderr_multiplier * stderr

        bounds = BoundService.eval_bounds(curve, trace.ks)
        violations = metric - slack > bounds * (1.0 + rtol)
        hits = np.flatnonzero(violations)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = metric / bounds
        finite = ratios[np.isfinite(ratios)]
        report = DominanceReport(
            violations=violations,
            n_violations=int(hits.size),
            first_violation=int(hits[0]) if hits.size else None,
            max_ratio=float(finite.max()) if finite.size else 0.0,
        )
        if report.n_violations:
            logger.warning(
                f"{curve.kind.value}: {report.n_violations} violations, first at k={report.first_violation}"
            )
        return report
