"""Tests for the PIAG engine"""

import math

import numpy as np
import pytest

from asyncopt.core.errors import AdmissibilityError, InvariantViolation
from asyncopt.models.schemas import (
    BoundConstants,
    BoundKind,
    DelayParams,
    EngineKind,
    PolicyKind,
    StepSizePolicy,
)
from asyncopt.services.bound_service import BoundService
from asyncopt.services.dataset_service import DatasetService
from asyncopt.services.delay_service import DelayService
from asyncopt.services.piag_service import IterateHistory, PiagService
from asyncopt.services.problem_service import ProblemService
from asyncopt.services.schedule_service import ScheduleService


def _run(problem, params, seq, h=0.99, horizon=None):
    policy = ScheduleService.schedule_for(EngineKind.PIAG, h, problem.aggregate_smoothness, params)
    x0 = np.zeros(problem.dimension)
    return policy, PiagService.piag_run(problem, policy, seq, x0, horizon=horizon)


def _constants(problem, params, h=0.99):
    x0 = np.zeros(problem.dimension)
    return BoundConstants(
        h=h,
        smoothness=problem.aggregate_smoothness,
        params=params,
        initial_gap=max(ProblemService.eval_objective(problem, x0) - problem.optimal_value, 0.0),
        distance_sq=float(problem.minimizer @ problem.minimizer),
        sigma=problem.sigma,
    )


def _violations(problem, params, policy, trace, kind, h=0.99):
    curve = BoundService.build_curve(kind, _constants(problem, params, h), policy)
    return BoundService.dominance_report(curve, trace).n_violations


class TestIterateHistory:
    def test_evicted_iterate(self):
        history = IterateHistory(2, 1)
        for k in range(3):
            history.store(k, np.array([float(k)]))
        np.testing.assert_array_equal(history.get(2), [2.0])
        with pytest.raises(InvariantViolation):
            history.get(0)


class TestPiagStep:
    """Single iterations on a fixed state"""

    def test_no_arrivals_keeps_aggregate(self, lasso_problem, rng):
        state = PiagService.init_state(lasso_problem, rng.standard_normal(lasso_problem.dimension), 4)
        before = state.g_aggregate.copy()
        PiagService.piag_step(state, lasso_problem, 0.01, [])
        np.testing.assert_array_equal(state.g_aggregate, before)
        assert state.k == 1

    def test_all_fresh_arrivals_give_full_gradient(self, lasso_problem, rng):
        x0 = rng.standard_normal(lasso_problem.dimension)
        state = PiagService.init_state(lasso_problem, x0, 4)
        PiagService.piag_step(state, lasso_problem, 0.01, [])
        x1 = state.x_current.copy()
        PiagService.piag_step(state, lasso_problem, 0.01, [(i, 0) for i in range(lasso_problem.n_components)])
        np.testing.assert_allclose(
            state.g_aggregate, ProblemService.full_gradient(lasso_problem, x1), rtol=1e-13, atol=1e-14
        )

    def test_single_arrival_changes_one_slot(self, lasso_problem, rng):
        state = PiagService.init_state(lasso_problem, rng.standard_normal(lasso_problem.dimension), 4)
        PiagService.piag_step(state, lasso_problem, 0.01, [])
        before = state.gradient_table.copy()
        PiagService.piag_step(state, lasso_problem, 0.01, [(2, 0)])
        changed = np.any(state.gradient_table != before, axis=1)
        np.testing.assert_array_equal(np.flatnonzero(changed), [2])
        assert state.read_times[2] == 1

    def test_evicted_read_raises(self):
        problem = DatasetService.build_quadratic_problem(np.array([[1.0]]), np.array([0.0]))
        state = PiagService.init_state(problem, np.array([1.0]), history_size=1)
        PiagService.piag_step(state, problem, 0.5, [(0, 0)])
        with pytest.raises(InvariantViolation):
            PiagService.piag_step(state, problem, 0.5, [(0, 1)])


class TestPiagRun:
    def test_zero_delays_reduce_to_gradient_descent(self):
        problem = DatasetService.build_quadratic_problem(np.array([[1.0]]), np.array([0.0]))
        params = DelayParams(a=0.1, b=0.0)
        seq = DelayService.constant_delays(0, 40, params)
        policy = StepSizePolicy(kind=PolicyKind.CONSTANT, h=0.9, smoothness=1.0, gamma=0.5)
        trace = PiagService.piag_run(problem, policy, seq, np.array([1.0]), record_iterates=True)
        np.testing.assert_allclose(trace.iterates[:, 0], 0.5 ** np.arange(41), rtol=1e-14)

    def test_epochs_reduce_to_stale_gradient_steps(self):
        A = DatasetService.make_spd_matrix(5, 5.0, seed=21)
        b = np.random.default_rng(22).standard_normal(5)
        problem = DatasetService.build_quadratic_problem(A, b)
        params = DelayParams(a=0.5, b=1.0)
        seq = DelayService.build_adversarial_delays(params, 1000)
        policy = ScheduleService.schedule_for(EngineKind.PIAG, 0.99, problem.aggregate_smoothness, params)
        trace = PiagService.piag_run(problem, policy, seq, np.ones(5), record_iterates=True)

        starts = np.array(seq.epoch_starts)
        for k in range(1000):
            start = int(starts[np.searchsorted(starts, k, side="right") - 1])
            anchor = trace.iterates[start]
            total_step = math.fsum(trace.gamma[start:k + 1])
            expected = anchor - total_step * ProblemService.full_gradient(problem, anchor)
            error = np.linalg.norm(trace.iterates[k + 1] - expected)
            assert error <= 1e-12 * max(np.linalg.norm(anchor), 1.0)

    def test_objective_decreases(self, strongly_convex_quadratic):
        params = DelayParams(a=0.5, b=0.6)
        seq = DelayService.sample_stochastic_delays(params, 500, 1, seed=0)
        _, trace = _run(strongly_convex_quadratic, params, seq)
        assert trace.tau.max() > 0
        assert trace.objective_error[-1] < trace.objective_error[0]

    def test_deterministic(self, lasso_problem):
        params = DelayParams(a=0.5, b=0.6)
        seq = DelayService.sample_stochastic_delays(params, 300, lasso_problem.n_components, seed=4)
        _, first = _run(lasso_problem, params, seq)
        _, second = _run(lasso_problem, params, seq)
        np.testing.assert_array_equal(first.objective_error, second.objective_error)
        np.testing.assert_array_equal(first.stationarity_sq, second.stationarity_sq)

    def test_trace_layout(self, lasso_problem):
        params = DelayParams(a=0.5, b=0.6)
        seq = DelayService.sample_stochastic_delays(params, 100, lasso_problem.n_components, seed=4)
        _, trace = _run(lasso_problem, params, seq, horizon=60)
        assert trace.horizon == 60
        assert trace.gamma.size == 61
        assert np.isnan(trace.stationarity_sq[0])
        assert np.all(np.diff(trace.running_best[1:]) <= 0)
        assert trace.summary["engine"] == "piag"

    def test_inadmissible_policy_refused(self, lasso_problem):
        params = DelayParams(a=0.1, b=0.0)
        seq = DelayService.constant_delays(0, 20, params)
        policy = StepSizePolicy(
            kind=PolicyKind.CONSTANT,
            h=0.5,
            smoothness=lasso_problem.aggregate_smoothness,
            gamma=1.0 / lasso_problem.aggregate_smoothness,
        )
        x0 = np.zeros(lasso_problem.dimension)
        with pytest.raises(AdmissibilityError):
            PiagService.piag_run(lasso_problem, policy, seq, x0)
        trace = PiagService.piag_run(lasso_problem, policy, seq, x0, allow_inadmissible=True)
        assert trace.horizon == 20

    def test_table_rows_must_match_components(self, lasso_problem):
        params = DelayParams(a=0.5, b=0.6)
        seq = DelayService.sample_stochastic_delays(params, 50, 3, seed=0)
        with pytest.raises(ValueError):
            _run(lasso_problem, params, seq)


class TestGuarantees:
    """Empirical metrics stay below the convergence bounds"""

    @pytest.mark.parametrize("b", [0.0, 0.2, 0.6, 1.0])
    def test_lasso_bounds_dominate(self, lasso_problem, b):
        params = DelayParams(a=0.5, b=b)
        for seed in range(3):
            seq = DelayService.sample_stochastic_delays(params, 2000, lasso_problem.n_components, seed)
            policy, trace = _run(lasso_problem, params, seq)
            assert _violations(lasso_problem, params, policy, trace, BoundKind.PIAG_NONCONVEX) == 0
            assert _violations(lasso_problem, params, policy, trace, BoundKind.PIAG_CONVEX) == 0

    def test_lasso_bounds_dominate_adversarial(self, lasso_problem):
        params = DelayParams(a=0.5, b=1.0)
        seq = DelayService.build_adversarial_delays(params, 2000)
        policy, trace = _run(lasso_problem, params, seq)
        assert _violations(lasso_problem, params, policy, trace, BoundKind.PIAG_NONCONVEX) == 0
        assert _violations(lasso_problem, params, policy, trace, BoundKind.PIAG_CONVEX) == 0

    @pytest.mark.slow
    @pytest.mark.parametrize("b", [0.0, 0.2, 0.6, 1.0])
    def test_lasso_bounds_dominate_full_scale(self, wide_lasso_problem, b):
        params = DelayParams(a=0.5, b=b)
        for seed in range(20):
            seq = DelayService.sample_stochastic_delays(params, 20_000, wide_lasso_problem.n_components, seed)
            policy, trace = _run(wide_lasso_problem, params, seq)
            assert _violations(wide_lasso_problem, params, policy, trace, BoundKind.PIAG_NONCONVEX) == 0
            assert _violations(wide_lasso_problem, params, policy, trace, BoundKind.PIAG_CONVEX) == 0

    @pytest.mark.parametrize("b", [0.0, 0.2])
    def test_pl_bound_dominates(self, strongly_convex_quadratic, b):
        params = DelayParams(a=0.1, b=b)
        seq = DelayService.sample_stochastic_delays(params, 2000, 1, seed=1)
        policy, trace = _run(strongly_convex_quadratic, params, seq)
        assert _violations(strongly_convex_quadratic, params, policy, trace, BoundKind.PIAG_PL) == 0

    @pytest.mark.parametrize("a, b", [(0.5, 0.6), (0.5, 1.0), (0.9, 1.0)])
    def test_pl_bound_dominates_with_growing_delays(self, strongly_convex_quadratic, a, b):
        params = DelayParams(a=a, b=b)
        seq = DelayService.sample_stochastic_delays(params, 2000, 1, seed=1)
        policy, trace = _run(strongly_convex_quadratic, params, seq)
        assert trace.tau.max() > 0
        assert _violations(strongly_convex_quadratic, params, policy, trace, BoundKind.PIAG_PL) == 0
        assert _violations(strongly_convex_quadratic, params, policy, trace, BoundKind.PIAG_CONVEX) == 0

    def test_geometric_decay_with_bounded_delays(self, strongly_convex_quadratic):
        params = DelayParams(a=0.1, b=0.0)
        seq = DelayService.sample_stochastic_delays(params, 2000, 1, seed=1)
        _, trace = _run(strongly_convex_quadratic, params, seq)
        ks = trace.ks[1000:]
        logs = np.log(trace.objective_error[1000:])
        slope, intercept = np.polyfit(ks, logs, 1)
        residual = logs - (slope * ks + intercept)
        r_squared = 1.0 - residual @ residual / np.sum((logs - logs.mean()) ** 2)
        assert slope < 0
        assert r_squared >= 0.99
