"""Deterministic replay of asynchronous block-coordinate descent"""

import logging
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from asyncopt.core.errors import AdmissibilityError, ConfigError
from asyncopt.models.problem import CompositeProblem
from asyncopt.models.schemas import EngineKind, StepSizePolicy
from asyncopt.models.trace import AveragedTrace, DelaySequence, RunTrace
from asyncopt.services.piag_service import IterateHistory
from asyncopt.services.problem_service import ProblemService
from asyncopt.services.prox_service import ProxService
from asyncopt.services.schedule_service import ScheduleService

logger = logging.getLogger(__name__)


class BcdResult(NamedTuple):
    traces: List[RunTrace]
    averaged: AveragedTrace


class BcdService:
    """Async-BCD engine and the prox-gradient mapping metric"""

    @staticmethod
    def prox_gradient_mapping(problem: CompositeProblem, x: np.ndarray) -> np.ndarray:
        """L-hat (prox_{r/L-hat}(x - grad f(x)/L-hat) - x); zero exactly at stationary points"""
        L_hat = problem.blockwise_smoothness
        if not L_hat > 0:
            raise ValueError("prox_gradient_mapping needs L-hat > 0")
        return L_hat * (ProblemService.prox_gradient_step(problem, x, L_hat) - x)

    @staticmethod
    def draw_blocks(delays: np.ndarray, n_blocks: int, seed) -> np.ndarray:
        """
        Block index for every step k < K

        Draws are consumed in order of the read time k - tau_k (ties by k), so
        the block used at step k is fixed when its stale iterate was read.
        """
        K = delays.size
        ks = np.arange(K)
        order = np.lexsort((ks, ks - delays))
        blocks = np.empty(K, dtype=np.int64)
        blocks[order] = np.random.default_rng(seed).integers(n_blocks, size=K)
        return blocks

    @staticmethod
    def trial_seeds(seed: int, n_trials: int) -> list:
        return np.random.SeedSequence(seed).spawn(n_trials)

    @staticmethod
    def bcd_trial(
        problem: CompositeProblem,
        gammas: np.ndarray,
        delays: np.ndarray,
        x0: np.ndarray,
        seed,
        record_iterates: bool = False,
    ) -> RunTrace:
        """
        One Async-BCD trajectory

        Args:
            problem: Problem whose regularizer separates over its partition
            gammas: gamma_0..gamma_K
            delays: Global delays tau_0..tau_K
            x0: Starting point
            seed: Seed (or SeedSequence) for the block draws
            record_iterates: Keep x_0..x_K on the trace

        Returns:
            RunTrace whose stationarity column is ||prox-gradient mapping(x_k)||^2
        """
        K = delays.size - 1
        x = np.array(x0, dtype=np.float64)
        history = IterateHistory(int(delays.max()) + 1, problem.dimension)
        history.store(0, x)
        blocks = BcdService.draw_blocks(delays[:K], problem.n_blocks, seed)
        slices = problem.block_slices
        optimum = problem.optimal_value

        objective_error = np.empty(K + 1)
        stationarity = np.empty(K + 1)
        iterates = np.empty((K + 1, problem.dimension)) if record_iterates else None

        def record(k: int) -> None:
            if iterates is not None:
                iterates[k] = x
            value = ProblemService.eval_objective(problem, x)
            objective_error[k] = value - optimum if optimum is not None else np.nan
            mapping = BcdService.prox_gradient_mapping(problem, x)
            stationarity[k] = mapping @ mapping

        record(0)
        for k in range(K):
            j = int(blocks[k])
            block = slices[j]
            stale = history.get(k - int(delays[k]))
            partial = ProblemService.block_partial_gradient(problem, j, stale)
            x = x.copy()
            x[block] = ProxService.prox_block(
                problem.regularizer,
                gammas[k],
                block,
                x[block] - gammas[k] * partial,
                problem.block_partition,
            )
            history.store(k + 1, x)
            record(k + 1)

        running_best = np.minimum.accumulate(stationarity)
        return RunTrace(
            engine=EngineKind.BCD,
            ks=np.arange(K + 1),
            objective_error=objective_error,
            stationarity_sq=stationarity,
            running_best=running_best,
            gamma=gammas,
            tau=delays,
            blocks=blocks,
            iterates=iterates,
            summary={
                "engine": EngineKind.BCD.value,
                "horizon": K,
                "final_objective_error": float(objective_error[-1]),
                "final_running_best": float(running_best[-1]),
                "max_delay": int(delays.max()),
            },
        )

    @staticmethod
    def bcd_run(
        problem: CompositeProblem,
        policy: StepSizePolicy,
        delay_seq: DelaySequence,
        x0: np.ndarray,
        horizon: Optional[int] = None,
        seed: int = 0,
        n_trials: int = 1,
        allow_inadmissible: bool = False,
    ) -> BcdResult:
        """
        Independent seeded Async-BCD trials sharing one delay sequence

        Args:
            problem: Composite problem with a block-separable regularizer
            policy: Step-size policy built on L-hat
            delay_seq: Global delay sequence
            x0: Starting point
            horizon: Number of iterations K (defaults to the delay horizon)
            seed: Root seed; trial t uses the t-th spawned child
            n_trials: Number of trials averaged

        Returns:
            BcdResult(per-trial traces, trial average)
        """
        if not problem.regularizer.is_separable_under(problem.block_partition):
            raise ConfigError(
                "Regularizer does not separate over the block partition; "
                "Async-BCD is not applicable"
            )
        if n_trials < 1:
            raise ValueError(f"n_trials must be positive, got {n_trials}")
        K = delay_seq.horizon if horizon is None else horizon
        if not 1 <= K <= delay_seq.horizon:
            raise ValueError(f"horizon must lie in [1, {delay_seq.horizon}], got {K}")
        try:
            ScheduleService.require_admissible(policy, delay_seq, K)
        except AdmissibilityError as e:
            if not allow_inadmissible:
                raise
            logger.warning(f"Running Async-BCD with an inadmissible policy: {e}")

        delays = np.asarray(delay_seq.values[: K + 1], dtype=np.int64)
        gammas = ScheduleService.step_sizes(policy, K + 1)
        logger.info(
            f"Async-BCD run: m={problem.n_blocks}, d={problem.dimension}, K={K}, "
            f"{n_trials} trials, max delay={int(delays.max())}"
        )
        traces = [
            BcdService.bcd_trial(problem, gammas, delays, x0, child)
            for child in BcdService.trial_seeds(seed, n_trials)
        ]
        averaged = BcdService.average_traces(traces)
        logger.info(
            f"Async-BCD finished: mean final objective error {averaged.objective_error[-1]!r}"
        )
        return BcdResult(traces, averaged)

    @staticmethod
    def average_traces(traces: Sequence[RunTrace]) -> AveragedTrace:
        """Mean and standard error across trials"""
        if not traces:
            raise ValueError("Nothing to average")
        n = len(traces)

        def mean_and_stderr(name: str):
            rows = np.stack([getattr(t, name) for t in traces])
            stderr = rows.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(rows.shape[1])
            return rows.mean(axis=0), stderr

        objective, objective_se = mean_and_stderr("objective_error")
        best, best_se = mean_and_stderr("running_best")
        stationarity, _ = mean_and_stderr("stationarity_sq")
        first = traces[0]
        return AveragedTrace(
            engine=first.engine,
            ks=first.ks,
            objective_error=objective,
            objective_error_stderr=objective_se,
            stationarity_sq=stationarity,
            running_best=best,
            running_best_stderr=best_se,
            gamma=first.gamma,
            tau=first.tau,
            n_trials=n,
        )
