"""Delay sequences and per-iteration run traces"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from asyncopt.models.schemas import DelayKind, DelayParams, EngineKind


@dataclass(frozen=True, eq=False)
class DelaySequence:
    """Delays tau_0..tau_K, optionally with the per-component PIAG table"""

    values: np.ndarray
    params: DelayParams
    kind: DelayKind
    seed: Optional[int] = None
    per_component: Optional[np.ndarray] = None
    epoch_starts: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("delay values must be a non-empty 1-D sequence")
        if not np.issubdtype(values.dtype, np.integer) or np.any(values < 0):
            raise ValueError("delays must be nonnegative integers")
        future = np.flatnonzero(values > np.arange(values.size))
        if future.size:
            raise ValueError(f"tau_k exceeds k at k={int(future[0])}; reads cannot come from the future")
        if self.per_component is not None:
            table = np.asarray(self.per_component)
            if table.ndim != 2 or table.shape[1] != values.size:
                raise ValueError(
                    f"per-component table shape {table.shape} does not cover {values.size} steps"
                )
            if not np.array_equal(table.max(axis=0), values):
                raise ValueError("tau_k must equal the max over components of tau_k^(i)")
        if self.kind == DelayKind.ADVERSARIAL and not self.epoch_starts:
            raise ValueError("adversarial sequences carry their epoch starts")

    @property
    def horizon(self) -> int:
        return int(self.values.size - 1)

    def component_table(self, n_components: int) -> np.ndarray:
        """(n, K+1) table; a global sequence is broadcast to every component"""
        if self.per_component is not None:
            if self.per_component.shape[0] != n_components:
                raise ValueError(
                    f"delay table has {self.per_component.shape[0]} rows, "
                    f"problem has {n_components} components"
                )
            return self.per_component
        return np.broadcast_to(self.values, (n_components, self.values.size))


@dataclass(frozen=True, eq=False)
class RunTrace:
    """Per-iteration metrics of one engine run

    stationarity_sq is ||grad f(x_k) + xi_k||^2 for PIAG and
    ||prox-gradient mapping(x_k)||^2 for Async-BCD.
    """

    engine: EngineKind
    ks: np.ndarray
    objective_error: np.ndarray
    stationarity_sq: np.ndarray
    running_best: np.ndarray
    gamma: np.ndarray
    tau: np.ndarray
    blocks: Optional[np.ndarray] = None
    iterates: Optional[np.ndarray] = None
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return int(self.ks[-1])


@dataclass(frozen=True, eq=False)
class AveragedTrace:
    """Trial mean of several traces sharing ks, gamma and tau"""

    engine: EngineKind
    ks: np.ndarray
    objective_error: np.ndarray
    objective_error_stderr: np.ndarray
    stationarity_sq: np.ndarray
    running_best: np.ndarray
    running_best_stderr: np.ndarray
    gamma: np.ndarray
    tau: np.ndarray
    n_trials: int
