"""Delay sequence generation and delay-bound validation"""

import logging
from bisect import bisect_right
from typing import Optional, Sequence, Tuple

import numpy as np

from asyncopt.core.errors import ConfigError
from asyncopt.models.schemas import DelayKind, DelayParams
from asyncopt.models.trace import DelaySequence

logger = logging.getLogger(__name__)

# Epochs shorter than this are scanned element by element
_SCALAR_SCAN = 32


class DelayService:
    """Stochastic, adversarial and user-supplied delay models"""

    @staticmethod
    def delay_bounds(params: DelayParams, ks: np.ndarray) -> np.ndarray:
        """a * k^b + c for every k in ``ks``

        Every comparison against the bound goes through this function so the
        generators and the validator see identical floats.
        """
        ks = np.asarray(ks, dtype=np.float64)
        return params.a * np.power(ks, params.b) + params.c

    @staticmethod
    def delay_bound(params: DelayParams, k: int) -> float:
        return float(DelayService.delay_bounds(params, np.array([k]))[0])

    @staticmethod
    def delay_caps(params: DelayParams, horizon: int) -> np.ndarray:
        """Largest admissible integer delay min(k, floor(a k^b + c)) for k = 0..K"""
        ks = np.arange(horizon + 1)
        floors = np.floor(DelayService.delay_bounds(params, ks)).astype(np.int64)
        return np.minimum(ks, floors)

    @staticmethod
    def sample_stochastic_delays(
        params: DelayParams, horizon: int, n_components: int, seed: int
    ) -> DelaySequence:
        """
        Per-component increment-or-resample delays

        Each component's delay grows by one while it stays within the bound and
        is otherwise redrawn uniformly from {1, ..., min(k, floor(a k^b + c))}
        (zero when that range is empty). tau_k is the max over components.

        Args:
            params: Delay-bound parameters
            horizon: Last iteration K
            n_components: Number of PIAG components n
            seed: Seed of the numpy generator

        Returns:
            DelaySequence carrying the n x (K+1) table
        """
        table = DelayService._sample_table(params, horizon, n_components, seed)
        logger.info(
            f"Sampled stochastic delays (a={params.a}, b={params.b}, c={params.c}) "
            f"for {n_components} components, K={horizon}, max tau={table.max()}"
        )
        return DelaySequence(
            values=table.max(axis=0),
            params=params,
            kind=DelayKind.STOCHASTIC,
            seed=seed,
            per_component=table,
        )

    @staticmethod
    def sample_global_stochastic_delays(
        params: DelayParams, horizon: int, seed: int
    ) -> DelaySequence:
        """Single shared delay sequence, one tau_k per step (Async-BCD)"""
        table = DelayService._sample_table(params, horizon, 1, seed)
        return DelaySequence(
            values=table[0], params=params, kind=DelayKind.STOCHASTIC, seed=seed
        )

    @staticmethod
    def _sample_table(
        params: DelayParams, horizon: int, n_components: int, seed: int
    ) -> np.ndarray:
        if horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {horizon}")
        if n_components < 1:
            raise ValueError(f"n_components must be at least 1, got {n_components}")
        rng = np.random.default_rng(seed)
        caps = DelayService.delay_caps(params, horizon)
        table = np.zeros((n_components, horizon + 1), dtype=np.int64)
        current = np.zeros(n_components, dtype=np.int64)
        for k in range(1, horizon + 1):
            cap = int(caps[k])
            current += 1
            resample = current > cap
            if resample.any():
                if cap == 0:
                    current[resample] = 0
                else:
                    current[resample] = rng.integers(1, cap + 1, size=int(resample.sum()))
            table[:, k] = current
        return table

    @staticmethod
    def epoch_starts(params: DelayParams, horizon: int) -> Tuple[int, ...]:
        """
        Epoch starts T_0 = 0 < T_1 < ... of the adversarial construction, up to ``horizon``

        T_{t+1} is the first kappa > T_t with kappa - T_t > a kappa^b + c, i.e.
        one past the largest kappa whose delay kappa - T_t is still admissible.
        """
        if horizon < 0:
            raise ValueError(f"horizon must be nonnegative, got {horizon}")
        bounds = DelayService.delay_bounds(params, np.arange(horizon + 1))
        starts = [0]
        while True:
            next_start = DelayService._first_failure(starts[-1], bounds, horizon)
            if next_start is None:
                return tuple(starts)
            starts.append(next_start)

    @staticmethod
    def _first_failure(start: int, bounds: np.ndarray, horizon: int) -> Optional[int]:
        kappa = start + 1
        scalar_stop = min(start + _SCALAR_SCAN, horizon + 1)
        while kappa < scalar_stop:
            if kappa - start > bounds[kappa]:
                return kappa
            kappa += 1
        width = 2 * _SCALAR_SCAN
        while kappa <= horizon:
            stop = min(kappa + width, horizon + 1)
            failing = np.flatnonzero(np.arange(kappa, stop) - start > bounds[kappa:stop])
            if failing.size:
                return int(kappa + failing[0])
            kappa = stop
            width *= 2
        return None

    @staticmethod
    def build_adversarial_delays(params: DelayParams, horizon: int) -> DelaySequence:
        """tau_k = k - T_t on every epoch [T_t, T_{t+1})"""
        if horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {horizon}")
        starts = DelayService.epoch_starts(params, horizon)
        ks = np.arange(horizon + 1)
        owners = np.searchsorted(np.array(starts), ks, side="right") - 1
        values = ks - np.array(starts, dtype=np.int64)[owners]
        logger.info(
            f"Built adversarial delays (a={params.a}, b={params.b}, c={params.c}), "
            f"K={horizon}, {len(starts)} epochs"
        )
        return DelaySequence(
            values=values.astype(np.int64),
            params=params,
            kind=DelayKind.ADVERSARIAL,
            epoch_starts=starts,
        )

    @staticmethod
    def validate_delay_bound(seq: DelaySequence, params: DelayParams) -> Optional[int]:
        """
        Check tau_k <= k and tau_k <= a k^b + c for every k (and every component)

        Returns:
            None when the sequence passes, otherwise the first violating k
        """
        table = np.atleast_2d(seq.values if seq.per_component is None else seq.per_component)
        ks = np.arange(table.shape[1])
        bounds = DelayService.delay_bounds(params, ks)
        violating = np.any((table > ks) | (table > bounds), axis=0)
        hits = np.flatnonzero(violating)
        return int(hits[0]) if hits.size else None

    @staticmethod
    def count_effective_gd_steps(seq: DelaySequence, k: int) -> int:
        """max{t : T_t <= k - 1} + 1, the number of gradient steps behind x_k"""
        if seq.kind != DelayKind.ADVERSARIAL or not seq.epoch_starts:
            raise ValueError("Gradient-step counting needs an adversarial delay sequence")
        if not 1 <= k <= seq.horizon + 1:
            raise ValueError(f"k must lie in [1, {seq.horizon + 1}], got {k}")
        return bisect_right(seq.epoch_starts, k - 1)

    @staticmethod
    def from_table(
        values: Sequence[int],
        params: DelayParams,
        per_component: Optional[np.ndarray] = None,
        validate: bool = True,
    ) -> DelaySequence:
        """User-supplied delays; rejected unless they satisfy the delay bound"""
        table = None if per_component is None else np.asarray(per_component, dtype=np.int64)
        if table is not None and values is None:
            values = table.max(axis=0)
        try:
            seq = DelaySequence(
                values=np.asarray(values, dtype=np.int64),
                params=params,
                kind=DelayKind.USER_SUPPLIED,
                per_component=table,
            )
        except ValueError as e:
            raise ConfigError(f"Invalid delay table: {e}") from e
        if validate:
            first = DelayService.validate_delay_bound(seq, params)
            if first is not None:
                raise ConfigError(f"Supplied delays violate the delay bound at k={first}")
        return seq

    @staticmethod
    def constant_delays(value: int, horizon: int, params: DelayParams) -> DelaySequence:
        """tau_k = min(k, value), the bounded-delay regime"""
        if value < 0:
            raise ValueError(f"delay must be nonnegative, got {value}")
        return DelayService.from_table(np.minimum(np.arange(horizon + 1), value), params)
