"""Composite problem P = f + r, its smooth components, regularizers and datasets"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.special import expit

from asyncopt.models.schemas import ConvexityKind, RegularizerKind


class SmoothComponent(ABC):
    """One summand f^(i) of the smooth part"""

    @property
    @abstractmethod
    def dimension(self) -> int:
        ...

    @abstractmethod
    def value(self, x: np.ndarray) -> float:
        ...

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        ...

    def partial_gradient(self, x: np.ndarray, block: slice) -> np.ndarray:
        """Gradient restricted to the coordinates of ``block``"""
        return self.gradient(x)[block]


class QuadraticComponent(SmoothComponent):
    """f(x) = 0.5 * x^T A x - b^T x + const with symmetric PSD A"""

    def __init__(self, A: np.ndarray, b: np.ndarray, const: float = 0.0):
        A = np.asarray(A, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if b.shape != (A.shape[0],):
            raise ValueError(
                f"Dimension mismatch: A is {A.shape[0]}x{A.shape[0]}, b has shape {b.shape}"
            )
        if not np.allclose(A, A.T, rtol=1e-12, atol=1e-12):
            raise ValueError("A must be symmetric")
        self.A = A
        self.b = b
        self.const = float(const)

    @property
    def dimension(self) -> int:
        return int(self.A.shape[0])

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.A @ x - self.b @ x + self.const)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x - self.b

    def partial_gradient(self, x: np.ndarray, block: slice) -> np.ndarray:
        return self.A[block] @ x - self.b[block]


class LogisticComponent(SmoothComponent):
    """Mean logistic loss over a batch plus (lambda2/2)||x||^2

    features is an (s, d) CSR matrix, labels an (s,) array in {-1, +1}.
    """

    def __init__(self, features: sparse.csr_matrix, labels: np.ndarray, lambda2: float):
        if features.shape[0] == 0:
            raise ValueError("Logistic component needs a non-empty batch")
        if features.shape[0] != labels.shape[0]:
            raise ValueError("features and labels disagree on the batch size")
        self.features = sparse.csr_matrix(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.float64)
        self.lambda2 = float(lambda2)

    @property
    def dimension(self) -> int:
        return int(self.features.shape[1])

    @property
    def batch_size(self) -> int:
        return int(self.features.shape[0])

    def value(self, x: np.ndarray) -> float:
        margins = self.labels * (self.features @ x)
        loss = np.logaddexp(0.0, -margins).mean()
        return float(loss + 0.5 * self.lambda2 * (x @ x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        margins = self.labels * (self.features @ x)
        weights = -self.labels * expit(-margins)
        return self.features.T @ weights / self.batch_size + self.lambda2 * x


@dataclass(frozen=True, eq=False)
class Regularizer:
    """Separable convex regularizer r

    ``parts``/``block_sizes`` are only used by separable_list, which applies
    parts[j] to the j-th block of the given sizes.
    """

    kind: RegularizerKind
    lam: float = 0.0
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    parts: Tuple["Regularizer", ...] = ()
    block_sizes: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind == RegularizerKind.L1 and self.lam < 0:
            raise ValueError(f"l1 weight must be nonnegative, got {self.lam}")
        if self.kind == RegularizerKind.BOX:
            if self.lo is None or self.hi is None or self.lo.shape != self.hi.shape:
                raise ValueError("box_indicator needs lo and hi of equal shape")
            if np.any(self.lo > self.hi):
                raise ValueError("box_indicator needs lo <= hi coordinate-wise")
        if self.kind == RegularizerKind.SEPARABLE:
            if len(self.parts) != len(self.block_sizes) or not self.parts:
                raise ValueError("separable_list needs one regularizer per block")
            if any(size <= 0 for size in self.block_sizes):
                raise ValueError("separable_list block sizes must be positive")

    @classmethod
    def zero(cls) -> "Regularizer":
        return cls(kind=RegularizerKind.ZERO)

    @classmethod
    def l1(cls, lam: float) -> "Regularizer":
        return cls(kind=RegularizerKind.L1, lam=float(lam))

    @classmethod
    def box(cls, lo, hi) -> "Regularizer":
        return cls(
            kind=RegularizerKind.BOX,
            lo=np.asarray(lo, dtype=np.float64),
            hi=np.asarray(hi, dtype=np.float64),
        )

    @classmethod
    def separable(cls, parts, block_sizes) -> "Regularizer":
        return cls(
            kind=RegularizerKind.SEPARABLE,
            parts=tuple(parts),
            block_sizes=tuple(int(s) for s in block_sizes),
        )

    def is_separable_under(self, partition: Tuple[int, ...]) -> bool:
        """Whether r splits as a sum of per-block terms for ``partition``"""
        if self.kind != RegularizerKind.SEPARABLE:
            return True
        # a coarser stored split still separates if the partition refines it
        cuts = set(np.cumsum(partition).tolist())
        return set(np.cumsum(self.block_sizes).tolist()) <= cuts


@dataclass(frozen=True, eq=False)
class CompositeProblem:
    """P(x) = (1/n) sum_i f^(i)(x) + r(x) with its smoothness constants"""

    components: Tuple[SmoothComponent, ...]
    regularizer: Regularizer
    block_partition: Tuple[int, ...]
    component_smoothness: Tuple[float, ...]
    aggregate_smoothness: float
    blockwise_smoothness: float
    convexity: ConvexityKind = ConvexityKind.NONCONVEX
    sigma: Optional[float] = None
    optimal_value: Optional[float] = None
    minimizer: Optional[np.ndarray] = None
    provenance: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.components:
            raise ValueError("A problem needs at least one component")
        d = self.components[0].dimension
        if any(c.dimension != d for c in self.components):
            raise ValueError("All components must share the same dimension")
        if any(size <= 0 for size in self.block_partition):
            raise ValueError(f"Block sizes must be positive, got {self.block_partition}")
        if sum(self.block_partition) != d:
            raise ValueError(
                f"Block sizes sum to {sum(self.block_partition)}, dimension is {d}"
            )
        if len(self.component_smoothness) != len(self.components):
            raise ValueError("One smoothness constant per component is required")
        if any(L < 0 for L in self.component_smoothness):
            raise ValueError("Smoothness constants must be nonnegative")
        expected = float(np.sqrt(np.mean(np.square(self.component_smoothness))))
        if abs(self.aggregate_smoothness - expected) > 1e-12 * max(expected, 1e-300):
            raise ValueError(
                f"aggregate_smoothness {self.aggregate_smoothness} != sqrt(mean L_i^2) {expected}"
            )
        if self.convexity == ConvexityKind.PROXIMAL_PL and not (
            self.sigma is not None and self.sigma > 0
        ):
            raise ValueError("proximal_pl problems need sigma > 0")

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def dimension(self) -> int:
        return self.components[0].dimension

    @property
    def n_blocks(self) -> int:
        return len(self.block_partition)

    @property
    def block_slices(self) -> Tuple[slice, ...]:
        bounds = np.concatenate([[0], np.cumsum(self.block_partition)])
        return tuple(slice(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]))

    def with_optimum(self, minimizer: np.ndarray, optimal_value: float) -> "CompositeProblem":
        return replace(self, minimizer=np.array(minimizer), optimal_value=float(optimal_value))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Binary classification samples with sparse features"""

    features: sparse.csr_matrix
    labels: np.ndarray
    dimension: int

    def __post_init__(self):
        if self.features.shape != (self.labels.shape[0], self.dimension):
            raise ValueError(
                f"features shape {self.features.shape} does not match "
                f"({self.labels.shape[0]}, {self.dimension})"
            )
        if self.labels.size and not np.all(np.isin(self.labels, (-1, 1))):
            raise ValueError("labels must be -1 or +1")

    @property
    def n_samples(self) -> int:
        return int(self.labels.shape[0])
