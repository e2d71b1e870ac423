"""Datasets, libsvm I/O and the concrete objective families"""

import logging
import re
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from asyncopt.core.errors import ConfigError, DatasetFormatError
from asyncopt.models.problem import (
    CompositeProblem,
    Dataset,
    LogisticComponent,
    QuadraticComponent,
    Regularizer,
)
from asyncopt.models.schemas import ConvexityKind, Provenance, RegularizerKind
from asyncopt.services.problem_service import ProblemService

logger = logging.getLogger(__name__)

_FEATURE = re.compile(r"^(\d+):(\S+)$")
_LABELS = {-1.0: -1, 0.0: -1, 1.0: 1}


class DatasetService:
    """Loading, synthesizing and turning data into composite problems"""

    @staticmethod
    def load_libsvm(path: Union[str, Path], dimension: Optional[int] = None) -> Dataset:
        """
        Parse a binary-classification libsvm file

        Args:
            path: File with lines "label idx:val idx:val ..." (1-based indices)
            dimension: Feature count; defaults to the largest index seen

        Returns:
            Dataset with labels mapped to -1/+1
        """
        rows: List[int] = []
        cols: List[int] = []
        vals: List[float] = []
        labels: List[int] = []
        path = Path(path)
        logger.info(f"Reading libsvm data from {path}")
        with path.open("r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                tokens = line.split("#", 1)[0].split()
                if not tokens:
                    continue
                labels.append(DatasetService._parse_label(tokens[0], line_number))
                sample = len(labels) - 1
                for token in tokens[1:]:
                    match = _FEATURE.match(token)
                    if match is None:
                        raise DatasetFormatError(f"malformed feature '{token}'", line_number)
                    index = int(match.group(1))
                    if index < 1:
                        raise DatasetFormatError(
                            f"feature indices are 1-based, got {index}", line_number
                        )
                    try:
                        value = float(match.group(2))
                    except ValueError:
                        raise DatasetFormatError(
                            f"malformed feature value '{match.group(2)}'", line_number
                        )
                    rows.append(sample)
                    cols.append(index - 1)
                    vals.append(value)

        seen = max(cols) + 1 if cols else 0
        if dimension is None:
            dimension = seen
        elif dimension < seen:
            raise ConfigError(f"dimension {dimension} is smaller than the largest index {seen}")
        features = sparse.csr_matrix(
            (np.array(vals, dtype=np.float64), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
            shape=(len(labels), dimension),
        )
        features.sum_duplicates()
        logger.info(f"Loaded {len(labels)} samples with {dimension} features")
        return Dataset(features=features, labels=np.array(labels, dtype=np.int64), dimension=dimension)

    @staticmethod
    def _parse_label(token: str, line_number: int) -> int:
        try:
            value = float(token)
        except ValueError:
            raise DatasetFormatError(f"malformed label '{token}'", line_number)
        if value not in _LABELS:
            raise DatasetFormatError(f"unknown label value '{token}'", line_number)
        return _LABELS[value]

    @staticmethod
    def write_libsvm(dataset: Dataset, path: Union[str, Path]) -> None:
        """Write 1-based libsvm lines with round-trip float precision"""
        features = dataset.features.tocsr()
        features.sort_indices()
        with Path(path).open("w", encoding="utf-8") as f:
            for row, label in enumerate(dataset.labels):
                start, stop = features.indptr[row], features.indptr[row + 1]
                items = " ".join(
                    f"{int(j) + 1}:{float(v)!r}"
                    for j, v in zip(features.indices[start:stop], features.data[start:stop])
                )
                f.write(f"{int(label):+d} {items}".rstrip() + "\n")

    @staticmethod
    def synthesize_classification(
        n_samples: int, dimension: int, sparsity: float, seed: int, label_noise: float = 0.1
    ) -> Dataset:
        """
        Sparse Gaussian features labelled by a planted hyperplane

        Args:
            n_samples: N
            dimension: d
            sparsity: Expected fraction of nonzero features per sample
            seed: Generator seed
            label_noise: Fraction of labels flipped at random

        Returns:
            Dataset
        """
        if n_samples < 1 or dimension < 1:
            raise ValueError("n_samples and dimension must be positive")
        if not 0.0 < sparsity <= 1.0:
            raise ValueError(f"sparsity must lie in (0, 1], got {sparsity}")
        rng = np.random.default_rng(seed)
        features = sparse.random(
            n_samples,
            dimension,
            density=sparsity,
            format="csr",
            random_state=rng,
            data_rvs=rng.standard_normal,
        )
        planted = rng.standard_normal(dimension)
        margins = features @ planted
        labels = np.where(margins >= 0.0, 1, -1)
        flips = rng.random(n_samples) < label_noise
        labels[flips] = -labels[flips]
        return Dataset(features=features.tocsr(), labels=labels.astype(np.int64), dimension=dimension)

    @staticmethod
    def synthesize_regression(
        n_samples: int, dimension: int, seed: int, support: float = 0.2, noise: float = 0.1
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gaussian design M, planted sparse coefficients w and response y = M w + noise"""
        if n_samples < 1 or dimension < 1:
            raise ValueError("n_samples and dimension must be positive")
        rng = np.random.default_rng(seed)
        design = rng.standard_normal((n_samples, dimension))
        coefficients = np.zeros(dimension)
        active = rng.choice(dimension, size=max(1, int(round(support * dimension))), replace=False)
        coefficients[active] = rng.standard_normal(active.size)
        response = design @ coefficients + noise * rng.standard_normal(n_samples)
        return design, response, coefficients

    @staticmethod
    def make_spd_matrix(dimension: int, cond: float, seed: int) -> np.ndarray:
        """Random symmetric matrix with eigenvalues evenly spaced in [1, cond]"""
        if cond < 1.0:
            raise ValueError(f"cond must be at least 1, got {cond}")
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.standard_normal((dimension, dimension)))
        eigenvalues = np.linspace(1.0, cond, dimension)
        A = (q * eigenvalues) @ q.T
        return 0.5 * (A + A.T)

    @staticmethod
    def split_batches(n_samples: int, n_batches: int, seed: int) -> List[np.ndarray]:
        """Seeded shuffle, then contiguous batches; the first N mod n batches get one extra"""
        if n_batches < 1:
            raise ConfigError(f"n_batches must be positive, got {n_batches}")
        if n_batches > n_samples:
            raise ConfigError(f"Cannot split {n_samples} samples into {n_batches} batches")
        order = np.random.default_rng(seed).permutation(n_samples)
        return np.array_split(order, n_batches)

    @staticmethod
    def build_logistic_problem(
        dataset: Dataset,
        lambda1: float,
        lambda2: float,
        n_batches: int,
        shuffle_seed: int,
        n_blocks: int = 1,
    ) -> CompositeProblem:
        """
        l1/l2-regularized logistic regression split into ``n_batches`` components

        Args:
            dataset: Samples with labels in {-1, +1}
            lambda1: l1 weight of r
            lambda2: l2 weight inside every component
            n_batches: Number of components n
            shuffle_seed: Seed of the batch shuffle
            n_blocks: Block count of the coordinate partition

        Returns:
            CompositeProblem flagged convex, or proximal_pl with sigma = lambda2
        """
        batches = DatasetService.split_batches(dataset.n_samples, n_batches, shuffle_seed)
        components = tuple(
            LogisticComponent(dataset.features[batch], dataset.labels[batch], lambda2)
            for batch in batches
        )
        partition = ProblemService.even_partition(dataset.dimension, n_blocks)
        estimate = ProblemService.estimate_smoothness(components, partition)
        strongly_convex = lambda2 > 0
        logger.info(
            f"Logistic problem: N={dataset.n_samples}, d={dataset.dimension}, "
            f"n={n_batches}, lambda1={lambda1}, lambda2={lambda2}"
        )
        return CompositeProblem(
            components=components,
            regularizer=Regularizer.l1(lambda1) if lambda1 > 0 else Regularizer.zero(),
            block_partition=partition,
            component_smoothness=estimate.component,
            aggregate_smoothness=estimate.aggregate,
            blockwise_smoothness=estimate.blockwise,
            convexity=ConvexityKind.PROXIMAL_PL if strongly_convex else ConvexityKind.CONVEX,
            sigma=lambda2 if strongly_convex else None,
            provenance={
                "component_smoothness": Provenance.DERIVED.value,
                "sigma": Provenance.DERIVED.value,
            },
        )

    @staticmethod
    def build_quadratic_problem(
        A: np.ndarray,
        b: np.ndarray,
        regularizer: Optional[Regularizer] = None,
        partition: Optional[Sequence[int]] = None,
    ) -> CompositeProblem:
        """
        f(x) = 0.5 x^T A x - b^T x as a single component

        Positive definite A gives sigma = lambda_min(A); with r = 0 the
        minimizer A^{-1} b and P* are attached directly.
        """
        component = QuadraticComponent(A, b)
        regularizer = regularizer or Regularizer.zero()
        partition = tuple(partition) if partition is not None else (component.dimension,)
        eigenvalues = np.linalg.eigvalsh(component.A)
        if eigenvalues[0] < -1e-10 * max(abs(eigenvalues[-1]), 1.0):
            raise ValueError("A must be positive semidefinite")
        estimate = ProblemService.estimate_smoothness((component,), partition)
        sigma = float(eigenvalues[0]) if eigenvalues[0] > 0 else None
        problem = CompositeProblem(
            components=(component,),
            regularizer=regularizer,
            block_partition=partition,
            component_smoothness=estimate.component,
            aggregate_smoothness=estimate.aggregate,
            blockwise_smoothness=estimate.blockwise,
            convexity=ConvexityKind.PROXIMAL_PL if sigma is not None else ConvexityKind.CONVEX,
            sigma=sigma,
            provenance={"sigma": Provenance.DERIVED.value},
        )
        if sigma is not None and regularizer.kind == RegularizerKind.ZERO:
            minimizer = np.linalg.solve(component.A, component.b)
            problem = problem.with_optimum(minimizer, component.value(minimizer))
        return problem

    @staticmethod
    def build_lasso_problem(
        design: np.ndarray,
        response: np.ndarray,
        lambda1: float,
        n_batches: int = 1,
        partition: Optional[Sequence[int]] = None,
        shuffle_seed: int = 0,
    ) -> CompositeProblem:
        """
        Least squares split into batches plus lambda1 ||x||_1

        Component i is ||M_B x - y_B||^2 / (2|B|), i.e. a quadratic with
        A_i = M_B^T M_B / |B|.
        """
        design = np.asarray(design, dtype=np.float64)
        response = np.asarray(response, dtype=np.float64)
        if design.shape[0] != response.shape[0]:
            raise ValueError("design and response disagree on the sample count")
        batches = DatasetService.split_batches(design.shape[0], n_batches, shuffle_seed)
        components = []
        for batch in batches:
            rows, target = design[batch], response[batch]
            size = float(len(batch))
            components.append(
                QuadraticComponent(rows.T @ rows / size, rows.T @ target / size, target @ target / (2.0 * size))
            )
        components = tuple(components)
        partition = tuple(partition) if partition is not None else (design.shape[1],)
        estimate = ProblemService.estimate_smoothness(components, partition)
        logger.info(
            f"Lasso problem: N={design.shape[0]}, d={design.shape[1]}, n={n_batches}, "
            f"m={len(partition)}, lambda1={lambda1}"
        )
        return CompositeProblem(
            components=components,
            regularizer=Regularizer.l1(lambda1),
            block_partition=partition,
            component_smoothness=estimate.component,
            aggregate_smoothness=estimate.aggregate,
            blockwise_smoothness=estimate.blockwise,
            convexity=ConvexityKind.CONVEX,
        )
