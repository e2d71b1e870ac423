"""Pydantic schemas for parameters, policies and experiment configuration"""

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ConvexityKind(str, Enum):
    """Which case of the PIAG guarantee applies to a problem"""

    NONCONVEX = "nonconvex"
    CONVEX = "convex"
    PROXIMAL_PL = "proximal_pl"


class RegularizerKind(str, Enum):
    """Regularizer catalog"""

    ZERO = "zero"
    L1 = "l1"
    BOX = "box_indicator"
    SEPARABLE = "separable_list"


class DelayKind(str, Enum):
    """How a delay sequence was produced"""

    STOCHASTIC = "stochastic"
    ADVERSARIAL = "adversarial"
    USER_SUPPLIED = "user_supplied"


class PolicyKind(str, Enum):
    """Step-size policy family"""

    PIAG_SCHEDULE = "piag_schedule"
    BCD_SCHEDULE = "bcd_schedule"
    CONSTANT = "constant"
    USER_TABLE = "user_table"


class BoundKind(str, Enum):
    """Theoretical bound curve family"""

    PIAG_NONCONVEX = "piag_nonconvex"
    PIAG_CONVEX = "piag_convex"
    PIAG_PL = "piag_pl"
    BCD_NONCONVEX = "bcd_nonconvex"


class EngineKind(str, Enum):
    """Simulated algorithm"""

    PIAG = "piag"
    BCD = "bcd"


class ProblemFamily(str, Enum):
    """Objective family used by experiments"""

    LOGISTIC = "logistic"
    LASSO = "lasso"
    QUADRATIC = "quadratic"


class DataSource(str, Enum):
    """Where experiment samples come from"""

    SYNTHETIC = "synthetic"
    LIBSVM = "libsvm"


class StepSumSource(str, Enum):
    """How the step-size sum inside a bound is obtained"""

    EXACT = "exact"
    CLOSED_FORM = "closed_form"


class Provenance(str, Enum):
    """Origin tag attached to every summary value"""

    PAPER = "paper"
    CONFIG = "config"
    DERIVED = "derived"


class DelayParams(BaseModel):
    """Delay-bound parameters: tau_k <= min(k, a*k^b + c)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    a: float = Field(..., gt=0.0, lt=1.0)
    b: float = Field(..., ge=0.0, le=1.0)
    c: float = Field(default=0.0, ge=0.0)


class StepSizePolicy(BaseModel):
    """Step-size policy with the constants its admissibility limit h/L needs"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: PolicyKind
    h: float = Field(..., gt=0.0, lt=1.0)
    smoothness: float = Field(..., gt=0.0)  # L for PIAG, L-hat for Async-BCD
    params: Optional[DelayParams] = None
    gamma: Optional[float] = Field(default=None, gt=0.0)
    table: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "StepSizePolicy":
        if self.kind in (PolicyKind.PIAG_SCHEDULE, PolicyKind.BCD_SCHEDULE):
            if self.params is None:
                raise ValueError(f"{self.kind.value} requires delay params")
        elif self.kind == PolicyKind.CONSTANT:
            if self.gamma is None:
                raise ValueError("constant policy requires gamma")
        elif self.kind == PolicyKind.USER_TABLE:
            if not self.table:
                raise ValueError("user_table policy requires a non-empty table")
            if any(not (g > 0.0) for g in self.table):
                raise ValueError("user_table step sizes must be positive")
        return self

    @property
    def is_schedule(self) -> bool:
        return self.kind in (PolicyKind.PIAG_SCHEDULE, PolicyKind.BCD_SCHEDULE)

    @property
    def limit(self) -> float:
        """Right-hand side h/L of the window-sum condition"""
        return self.h / self.smoothness


class BoundConstants(BaseModel):
    """Constants a bound curve is evaluated with"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    h: float = Field(..., gt=0.0, lt=1.0)
    smoothness: float = Field(..., gt=0.0)
    params: DelayParams
    initial_gap: float = Field(..., ge=0.0)  # P(x_0) - P*
    distance_sq: Optional[float] = Field(default=None, ge=0.0)  # ||x_0 - x*||^2
    sigma: Optional[float] = Field(default=None, gt=0.0)
    n_blocks: Optional[int] = Field(default=None, ge=1)


class SummaryEntry(BaseModel):
    """One key/value line of a run summary"""

    key: str
    value: str
    provenance: Provenance
    note: Optional[str] = None


class ExperimentConfig(BaseModel):
    """Flat experiment description; every field maps to one key=value line"""

    model_config = ConfigDict(extra="forbid")

    engine: EngineKind = EngineKind.PIAG

    # Problem
    family: ProblemFamily = ProblemFamily.LOGISTIC
    data_source: DataSource = DataSource.SYNTHETIC
    data_path: Optional[str] = None
    n_samples: int = Field(default=500, ge=1)
    dimension: int = Field(default=100, ge=1)
    sparsity: float = Field(default=0.1, gt=0.0, le=1.0)
    data_seed: int = 7
    lambda1: float = Field(default=1e-5, ge=0.0)
    lambda2: float = Field(default=1e-4, ge=0.0)
    n_batches: int = Field(default=10, ge=1)
    n_blocks: int = Field(default=14, ge=1)
    cond: float = Field(default=10.0, ge=1.0)

    # Delays
    delay_kind: DelayKind = DelayKind.STOCHASTIC
    a: float = Field(default=0.1, gt=0.0, lt=1.0)
    b: float = Field(default=0.2, ge=0.0, le=1.0)
    c: float = Field(default=0.0, ge=0.0)
    delay_seed: int = 0

    # Schedule and engine
    h: float = Field(default=0.99, gt=0.0, lt=1.0)
    horizon: int = Field(default=10_000, ge=1)
    trials: int = Field(default=32, ge=1)
    bcd_seed: int = 0

    # Output and flags
    output_dir: str = "./runs"
    paper_faithful: bool = False
    allow_inadmissible: bool = False

    @model_validator(mode="after")
    def _check_sources(self) -> "ExperimentConfig":
        if self.data_source == DataSource.LIBSVM and not self.data_path:
            raise ValueError("data_source=libsvm requires data_path")
        if self.delay_kind == DelayKind.USER_SUPPLIED:
            raise ValueError("user_supplied delays are not available from a config file")
        return self

    @property
    def delay_params(self) -> DelayParams:
        return DelayParams(a=self.a, b=self.b, c=self.c)
