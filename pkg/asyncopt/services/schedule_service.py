"""Delay-adaptive step-size schedules and their admissibility certificate"""

import logging
import math
from typing import Optional

import numpy as np

from asyncopt.core.errors import AdmissibilityError
from asyncopt.models.schemas import (
    DelayParams,
    EngineKind,
    PolicyKind,
    StepSizePolicy,
    StepSumSource,
)
from asyncopt.models.trace import DelaySequence

logger = logging.getLogger(__name__)

_EPS = np.finfo(np.float64).eps
# Prefix sums are exact-rounded at block boundaries and plain cumsum inside,
# so each carries at most _PREFIX_BLOCK * eps relative error
_PREFIX_BLOCK = 256
# Window sums closer than this (relative) to h/L are re-summed exactly
_SCREEN_RTOL = 1e-9


class ScheduleService:
    """Step sizes gamma_k, phi(k) and step-size sums"""

    @staticmethod
    def schedule_for(
        engine: EngineKind, h: float, smoothness: float, params: DelayParams
    ) -> StepSizePolicy:
        """The delay-matched schedule of an engine (L for PIAG, L-hat for Async-BCD)"""
        kind = PolicyKind.PIAG_SCHEDULE if engine == EngineKind.PIAG else PolicyKind.BCD_SCHEDULE
        return StepSizePolicy(kind=kind, h=h, smoothness=smoothness, params=params)

    @staticmethod
    def step_sizes(policy: StepSizePolicy, count: int) -> np.ndarray:
        """gamma_0, ..., gamma_{count-1}"""
        if count < 0:
            raise ValueError(f"count must be nonnegative, got {count}")
        return ScheduleService._evaluate(policy, np.arange(count))

    @staticmethod
    def step_size(policy: StepSizePolicy, k: int) -> float:
        if k < 0:
            raise ValueError(f"k must be nonnegative, got {k}")
        return float(ScheduleService._evaluate(policy, np.array([k]))[0])

    @staticmethod
    def _evaluate(policy: StepSizePolicy, ks: np.ndarray) -> np.ndarray:
        if policy.is_schedule:
            a, b, c = policy.params.a, policy.params.b, policy.params.c
            growth = a * np.power((ks + c) / (1.0 - a), b) + c + 1.0
            return policy.h / (policy.smoothness * growth)
        if policy.kind == PolicyKind.CONSTANT:
            return np.full(ks.shape, policy.gamma, dtype=np.float64)
        table = np.asarray(policy.table, dtype=np.float64)
        if ks.size and ks.max() >= table.size:
            raise ValueError(
                f"user_table has {table.size} step sizes, step {int(ks.max())} requested"
            )
        return table[ks]

    @staticmethod
    def prefix_sums(gammas: np.ndarray) -> np.ndarray:
        """S_k = sum_{t<k} gamma_t for k = 0..len(gammas)

        Each block offset is a correctly rounded math.fsum, so the error does
        not accumulate across blocks.
        """
        prefix = np.zeros(gammas.size + 1)
        offset = 0.0
        block_sums = []
        for start in range(0, gammas.size, _PREFIX_BLOCK):
            block = gammas[start:start + _PREFIX_BLOCK]
            prefix[start + 1:start + 1 + block.size] = offset + np.cumsum(block)
            block_sums.append(math.fsum(block))
            offset = math.fsum(block_sums)
        return prefix

    @staticmethod
    def check_admissibility(
        policy: StepSizePolicy, seq: DelaySequence, horizon: Optional[int] = None
    ) -> Optional[int]:
        """
        Verify sum_{t=k-tau_k}^{k} gamma_t <= h/L for every k <= K

        Windows are screened with prefix sums; every window whose screened sum
        is not clearly on one side of h/L is decided by an exact math.fsum.

        Args:
            policy: Step-size policy (its smoothness is L or L-hat)
            seq: Delay sequence; per-component tables use the max over components
            horizon: Last k to check, defaults to the sequence horizon

        Returns:
            None when admissible, otherwise the first violating k
        """
        first, _ = ScheduleService._first_violation(policy, seq, horizon)
        return first

    @staticmethod
    def require_admissible(
        policy: StepSizePolicy, seq: DelaySequence, horizon: Optional[int] = None
    ) -> None:
        """Raise AdmissibilityError at the first violating k"""
        first, window = ScheduleService._first_violation(policy, seq, horizon)
        if first is not None:
            logger.error(f"Step-size policy {policy.kind.value} is inadmissible at k={first}")
            raise AdmissibilityError(first, window, policy.limit)

    @staticmethod
    def _first_violation(policy: StepSizePolicy, seq: DelaySequence, horizon: Optional[int]):
        K = seq.horizon if horizon is None else horizon
        if K > seq.horizon:
            raise ValueError(f"Delay sequence covers K={seq.horizon}, {K} requested")
        gammas = ScheduleService.step_sizes(policy, K + 1)
        prefix = ScheduleService.prefix_sums(gammas)
        ks = np.arange(K + 1)
        starts = ks - seq.values[: K + 1]
        windows = prefix[ks + 1] - prefix[starts]

        limit = policy.limit
        band = _SCREEN_RTOL * limit + 2.0 * _PREFIX_BLOCK * _EPS * prefix[ks + 1]
        definite = np.flatnonzero(windows > limit + band)
        stop = int(definite[0]) if definite.size else K + 1
        for k in np.flatnonzero(np.abs(windows[:stop] - limit) <= band[:stop]):
            exact = math.fsum(gammas[starts[k]:k + 1])
            if exact > limit:
                return int(k), exact
        if definite.size:
            return stop, math.fsum(gammas[starts[stop]:stop + 1])
        return None, None

    @staticmethod
    def phi(b: float, k: float) -> float:
        """Rate clock: k^(1-b) for b < 1, ln k for b = 1"""
        if k < 1:
            raise ValueError(f"phi is defined for k >= 1, got {k}")
        if not 0.0 <= b <= 1.0:
            raise ValueError(f"b must lie in [0, 1], got {b}")
        return math.log(k) if b == 1.0 else float(k) ** (1.0 - b)

    @staticmethod
    def stepsum_lower_bound(policy: StepSizePolicy, k: int) -> float:
        """Closed-form lower bound on sum_{t<k} gamma_t for a delay-matched schedule"""
        if not policy.is_schedule:
            raise ValueError("The closed-form step-size sum exists only for schedules")
        if k < 1:
            raise ValueError(f"k must be at least 1, got {k}")
        return float(ScheduleService._closed_form(policy, np.array([k], dtype=np.float64))[0])

    @staticmethod
    def _closed_form(policy: StepSizePolicy, ks: np.ndarray) -> np.ndarray:
        h, L = policy.h, policy.smoothness
        a, b, c = policy.params.a, policy.params.b, policy.params.c
        gamma0 = h / (L * (a * (c / (1.0 - a)) ** b + c + 1.0))
        if b == 1.0:
            return gamma0 + h * np.log((ks + c) / (1.0 + c)) / (L * (a / (1.0 - a) + 1.0))
        denom = L * (a * (1.0 - a) ** (-b) + (c + 1.0) ** (1.0 - b)) * (1.0 - b)
        return gamma0 + h * (np.power(ks + c, 1.0 - b) - (1.0 + c) ** (1.0 - b)) / denom

    @staticmethod
    def stepsum(
        policy: StepSizePolicy, k: int, source: StepSumSource = StepSumSource.EXACT
    ) -> float:
        """sum_{t<k} gamma_t, exactly summed or from the closed-form lower bound"""
        if k < 0:
            raise ValueError(f"k must be nonnegative, got {k}")
        if k == 0:
            return 0.0
        if source == StepSumSource.CLOSED_FORM:
            return ScheduleService.stepsum_lower_bound(policy, k)
        return math.fsum(ScheduleService.step_sizes(policy, k))

    @staticmethod
    def stepsums(
        policy: StepSizePolicy, ks: np.ndarray, source: StepSumSource = StepSumSource.EXACT
    ) -> np.ndarray:
        """Vectorized stepsum over an increasing array of k"""
        ks = np.asarray(ks, dtype=np.int64)
        if ks.size == 0:
            return np.zeros(0)
        if np.any(ks < 0):
            raise ValueError("k must be nonnegative")
        if source == StepSumSource.EXACT:
            prefix = ScheduleService.prefix_sums(ScheduleService.step_sizes(policy, int(ks.max())))
            return prefix[ks]
        if not policy.is_schedule:
            raise ValueError("The closed-form step-size sum exists only for schedules")
        sums = np.zeros(ks.shape)
        positive = ks >= 1
        sums[positive] = ScheduleService._closed_form(policy, ks[positive].astype(np.float64))
        return sums

    @staticmethod
    def rate_constant(policy: StepSizePolicy) -> float:
        """lim_k sum_{t<k} gamma_t / phi(k) implied by the closed form"""
        if not policy.is_schedule:
            raise ValueError("rate_constant exists only for schedules")
        h, L = policy.h, policy.smoothness
        a, b, c = policy.params.a, policy.params.b, policy.params.c
        if b == 1.0:
            return h / (L * (a / (1.0 - a) + 1.0))
        return h / (L * (a * (1.0 - a) ** (-b) + (c + 1.0) ** (1.0 - b)) * (1.0 - b))
