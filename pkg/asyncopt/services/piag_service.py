"""Deterministic replay of PIAG under a pre-drawn delay table"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from asyncopt.core.errors import AdmissibilityError, InvariantViolation
from asyncopt.models.problem import CompositeProblem
from asyncopt.models.schemas import EngineKind, StepSizePolicy
from asyncopt.models.trace import DelaySequence, RunTrace
from asyncopt.services.problem_service import ProblemService
from asyncopt.services.prox_service import ProxService
from asyncopt.services.schedule_service import ScheduleService

logger = logging.getLogger(__name__)


class IterateHistory:
    """Ring buffer of the last ``capacity`` iterates, addressed by iteration number"""

    def __init__(self, capacity: int, dimension: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._rows = np.zeros((capacity, dimension))
        self._owners = np.full(capacity, -1, dtype=np.int64)

    def store(self, k: int, x: np.ndarray) -> None:
        slot = k % self.capacity
        self._rows[slot] = x
        self._owners[slot] = k

    def get(self, k: int) -> np.ndarray:
        slot = k % self.capacity
        if k < 0 or self._owners[slot] != k:
            raise InvariantViolation(
                f"Iterate x_{k} is no longer in the history (capacity {self.capacity})"
            )
        return self._rows[slot]


@dataclass
class PiagState:
    """Engine state at iteration k

    gradient_table[i] holds grad f^(i) at x_{read_times[i]}; xi is the
    subgradient of r recovered from the prox step that produced x_current.
    """

    k: int
    x_current: np.ndarray
    history: IterateHistory
    gradient_table: np.ndarray
    read_times: np.ndarray
    g_aggregate: np.ndarray
    xi: Optional[np.ndarray] = None


class PiagService:
    """Proximal incremental aggregated gradient engine"""

    @staticmethod
    def init_state(problem: CompositeProblem, x0: np.ndarray, history_size: int) -> PiagState:
        """Algorithm start: every table slot holds grad f^(i)(x_0)"""
        x0 = np.array(x0, dtype=np.float64)
        if x0.shape != (problem.dimension,):
            raise ValueError(f"x0 has shape {x0.shape}, problem dimension is {problem.dimension}")
        history = IterateHistory(history_size, problem.dimension)
        history.store(0, x0)
        table = np.stack([c.gradient(x0) for c in problem.components])
        return PiagState(
            k=0,
            x_current=x0,
            history=history,
            gradient_table=table,
            read_times=np.zeros(problem.n_components, dtype=np.int64),
            g_aggregate=table.mean(axis=0),
        )

    @staticmethod
    def piag_step(
        state: PiagState,
        problem: CompositeProblem,
        gamma: float,
        arriving_components: Iterable[Tuple[int, int]],
    ) -> PiagState:
        """
        One PIAG iteration, updating ``state`` in place

        Args:
            state: State at iteration k
            problem: Composite problem
            gamma: Step size gamma_k
            arriving_components: (i, delay) pairs; slot i is refreshed with
                grad f^(i)(x_{k - delay})

        Returns:
            The same state object advanced to k + 1
        """
        for i, delay in arriving_components:
            read_time = state.k - int(delay)
            state.gradient_table[i] = problem.components[i].gradient(state.history.get(read_time))
            state.read_times[i] = read_time
        state.g_aggregate = state.gradient_table.mean(axis=0)

        pre_prox = state.x_current - gamma * state.g_aggregate
        post_prox = ProxService.prox(problem.regularizer, gamma, pre_prox)
        state.xi = ProxService.recover_subgradient(problem.regularizer, gamma, pre_prox, post_prox)
        state.k += 1
        state.x_current = post_prox
        state.history.store(state.k, post_prox)
        return state

    @staticmethod
    def arrivals(delays: np.ndarray, k: int) -> np.ndarray:
        """Components whose read time k - tau_k^(i) moved at step k"""
        if k == 0:
            return np.flatnonzero(delays[:, 0] != 0)
        return np.flatnonzero(delays[:, k] != delays[:, k - 1] + 1)

    @staticmethod
    def piag_run(
        problem: CompositeProblem,
        policy: StepSizePolicy,
        delay_seq: DelaySequence,
        x0: np.ndarray,
        horizon: Optional[int] = None,
        allow_inadmissible: bool = False,
        record_iterates: bool = False,
    ) -> RunTrace:
        """
        Replay K PIAG iterations with the supplied per-component delays

        Args:
            problem: Composite problem; P* is used for the objective error when known
            policy: Step-size policy, checked against max-over-components delays
            delay_seq: Delay sequence covering the horizon
            x0: Starting point
            horizon: Number of iterations K (defaults to the delay horizon)
            allow_inadmissible: Run even if the window-sum condition fails
            record_iterates: Keep x_0..x_K on the trace

        Returns:
            RunTrace with one row per k = 0..K
        """
        K = delay_seq.horizon if horizon is None else horizon
        if not 1 <= K <= delay_seq.horizon:
            raise ValueError(f"horizon must lie in [1, {delay_seq.horizon}], got {K}")
        try:
            ScheduleService.require_admissible(policy, delay_seq, K)
        except AdmissibilityError as e:
            if not allow_inadmissible:
                raise
            logger.warning(f"Running PIAG with an inadmissible policy: {e}")

        delays = np.asarray(delay_seq.component_table(problem.n_components))[:, : K + 1]
        gammas = ScheduleService.step_sizes(policy, K + 1)
        state = PiagService.init_state(problem, x0, int(delays.max()) + 1)
        logger.info(
            f"PIAG run: n={problem.n_components}, d={problem.dimension}, K={K}, "
            f"max delay={int(delays.max())}"
        )

        objective_error = np.empty(K + 1)
        stationarity = np.full(K + 1, np.nan)
        iterates = np.empty((K + 1, problem.dimension)) if record_iterates else None
        optimum = problem.optimal_value

        def record(k: int) -> None:
            value = ProblemService.eval_objective(problem, state.x_current)
            objective_error[k] = value - optimum if optimum is not None else np.nan
            if state.xi is not None:
                stationarity[k] = ProblemService.stationarity_sq(problem, state.x_current, state.xi)
            if iterates is not None:
                iterates[k] = state.x_current

        record(0)
        for k in range(K):
            arriving = PiagService.arrivals(delays, k)
            PiagService.piag_step(
                state, problem, gammas[k], ((i, delays[i, k]) for i in arriving)
            )
            record(k + 1)

        running_best = np.fmin.accumulate(stationarity)
        summary = {
            "engine": EngineKind.PIAG.value,
            "horizon": K,
            "final_objective_error": float(objective_error[-1]),
            "final_running_best": float(running_best[-1]),
            "max_delay": int(delays.max()),
        }
        logger.info(f"PIAG run finished: final objective error {objective_error[-1]!r}")
        return RunTrace(
            engine=EngineKind.PIAG,
            ks=np.arange(K + 1),
            objective_error=objective_error,
            stationarity_sq=stationarity,
            running_best=running_best,
            gamma=gammas,
            tau=np.asarray(delay_seq.values[: K + 1]),
            iterates=iterates,
            summary=summary,
        )
