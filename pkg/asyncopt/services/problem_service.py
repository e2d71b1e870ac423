"""Objective, gradient and smoothness oracles for composite problems"""

import logging
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from asyncopt.core.config import settings
from asyncopt.core.errors import InvariantViolation
from asyncopt.models.problem import (
    CompositeProblem,
    LogisticComponent,
    QuadraticComponent,
    SmoothComponent,
)
from asyncopt.services.prox_service import ProxService

logger = logging.getLogger(__name__)


class SmoothnessEstimate(NamedTuple):
    component: Tuple[float, ...]
    aggregate: float
    blockwise: float


class ReferenceSolution(NamedTuple):
    minimizer: np.ndarray
    optimal_value: float
    iterations: int
    residual: float


class ProblemService:
    """Evaluation of P = f + r and the constants the step-size formulas need

    Component and block indices are 0-based.
    """

    @staticmethod
    def even_partition(dimension: int, n_blocks: int) -> Tuple[int, ...]:
        """Split ``dimension`` into ``n_blocks`` sizes; earlier blocks take the remainder"""
        if n_blocks < 1 or n_blocks > dimension:
            raise ValueError(f"Cannot split dimension {dimension} into {n_blocks} blocks")
        base, extra = divmod(dimension, n_blocks)
        return tuple(base + 1 if j < extra else base for j in range(n_blocks))

    @staticmethod
    def smooth_value(problem: CompositeProblem, x: np.ndarray) -> float:
        """f(x) = (1/n) sum_i f^(i)(x)"""
        ProblemService._check_point(problem, x)
        return float(np.mean([c.value(x) for c in problem.components]))

    @staticmethod
    def eval_objective(problem: CompositeProblem, x: np.ndarray) -> float:
        """P(x) = f(x) + r(x); +inf when x is outside the domain of r"""
        ProblemService._check_point(problem, x)
        r_value = ProxService.value(problem.regularizer, x)
        if np.isinf(r_value):
            return r_value
        return ProblemService.smooth_value(problem, x) + r_value

    @staticmethod
    def component_gradient(problem: CompositeProblem, i: int, x: np.ndarray) -> np.ndarray:
        if not 0 <= i < problem.n_components:
            raise ValueError(f"Component index {i} out of range [0, {problem.n_components})")
        ProblemService._check_point(problem, x)
        return problem.components[i].gradient(x)

    @staticmethod
    def full_gradient(problem: CompositeProblem, x: np.ndarray) -> np.ndarray:
        ProblemService._check_point(problem, x)
        total = np.zeros(problem.dimension)
        for component in problem.components:
            total += component.gradient(x)
        return total / problem.n_components

    @staticmethod
    def block_partial_gradient(problem: CompositeProblem, j: int, x: np.ndarray) -> np.ndarray:
        """The j-th block of grad f(x)"""
        if not 0 <= j < problem.n_blocks:
            raise ValueError(f"Block index {j} out of range [0, {problem.n_blocks})")
        ProblemService._check_point(problem, x)
        block = problem.block_slices[j]
        total = np.zeros(block.stop - block.start)
        for component in problem.components:
            total += component.partial_gradient(x, block)
        return total / problem.n_components

    @staticmethod
    def stationarity_sq(problem: CompositeProblem, x: np.ndarray, xi: np.ndarray) -> float:
        """||grad f(x) + xi||^2 for a subgradient xi of r at x"""
        residual = ProblemService.full_gradient(problem, x) + xi
        return float(residual @ residual)

    @staticmethod
    def power_iteration(
        A: np.ndarray,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
    ) -> float:
        """
        Upper estimate of the largest eigenvalue of a symmetric PSD matrix

        Iterates until the Rayleigh quotient rho has residual
        ||A v - rho v|| <= tol * rho and returns rho + residual, which bounds
        lambda_max from above and exceeds it by at most tol * rho.
        """
        tol = settings.power_iteration_tol if tol is None else tol
        max_iter = settings.power_iteration_max_iter if max_iter is None else max_iter
        v = np.random.default_rng(0).standard_normal(A.shape[0])
        v /= np.linalg.norm(v)
        for _ in range(max_iter):
            w = A @ v
            rho = float(v @ w)
            if rho <= 0.0 and not np.any(w):
                return 0.0
            residual = float(np.linalg.norm(w - rho * v))
            if residual <= tol * rho:
                return rho + residual
            v = w / np.linalg.norm(w)
        logger.warning(
            f"Power iteration did not reach relative residual {tol} in {max_iter} iterations; "
            f"using a dense eigensolver"
        )
        top = linalg.eigh(A, eigvals_only=True, subset_by_index=[A.shape[0] - 1, A.shape[0] - 1])
        return float(top[0])

    @staticmethod
    def estimate_smoothness(
        components: Sequence[SmoothComponent], partition: Sequence[int]
    ) -> SmoothnessEstimate:
        """
        Component, aggregate and block-wise smoothness constants

        Args:
            components: Quadratic or logistic components sharing one dimension
            partition: Block sizes used for the block-wise constant

        Returns:
            SmoothnessEstimate(L_i list, L = sqrt(mean L_i^2), L-hat)
        """
        if not components:
            raise ValueError("Need at least one component")
        bounds = np.concatenate([[0], np.cumsum(partition)]).astype(int)
        blocks = [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]

        if all(isinstance(c, QuadraticComponent) for c in components):
            per_component = tuple(ProblemService.power_iteration(c.A) for c in components)
            hessian = np.mean([c.A for c in components], axis=0)
            blockwise = max(
                float(np.linalg.norm(hessian[bi, bj], 2)) for bi in blocks for bj in blocks
            )
        elif all(isinstance(c, LogisticComponent) for c in components):
            per_component = tuple(
                float(c.features.multiply(c.features).sum() / (4.0 * c.batch_size) + c.lambda2)
                for c in components
            )
            # Hessian <= mean_i Q_i^T Q_i / (4|B_i|) + lambda2 I; for a PSD matrix
            # every off-diagonal block norm is at most the largest diagonal one
            lambda2 = float(np.mean([c.lambda2 for c in components]))
            blockwise = 0.0
            for block in blocks:
                diag = lambda2 * np.eye(block.stop - block.start)
                for c in components:
                    columns = c.features[:, block]
                    diag += (columns.T @ columns).toarray() / (4.0 * c.batch_size * len(components))
                blockwise = max(blockwise, float(np.linalg.norm(diag, 2)))
        else:
            raise ValueError("Smoothness estimation supports quadratic or logistic families only")

        aggregate = float(np.sqrt(np.mean(np.square(per_component))))
        logger.info(f"Smoothness: L={aggregate:.6g}, L_hat={blockwise:.6g}")
        return SmoothnessEstimate(per_component, aggregate, blockwise)

    @staticmethod
    def prox_gradient_step(problem: CompositeProblem, x: np.ndarray, smoothness: float) -> np.ndarray:
        """prox_{r/L}(x - grad f(x)/L)"""
        if not smoothness > 0:
            raise ValueError(f"Smoothness constant must be positive, got {smoothness}")
        gradient = ProblemService.full_gradient(problem, x)
        return ProxService.prox(problem.regularizer, 1.0 / smoothness, x - gradient / smoothness)

    @staticmethod
    def forward_backward_gap(problem: CompositeProblem, x: np.ndarray) -> float:
        """
        min_y <grad f(x), y - x> + (L/2)||y - x||^2 + r(y) - r(x), evaluated at its minimizer

        Returns:
            A nonpositive real; zero exactly at prox-gradient fixed points
        """
        L = problem.aggregate_smoothness
        if not L > 0:
            raise ValueError("forward_backward_gap needs L > 0")
        gradient = ProblemService.full_gradient(problem, x)
        y = ProxService.prox(problem.regularizer, 1.0 / L, x - gradient / L)
        step = y - x
        value = (
            gradient @ step
            + 0.5 * L * (step @ step)
            + ProxService.value(problem.regularizer, y)
            - ProxService.value(problem.regularizer, x)
        )
        # y = x attains 0, so rounding above it is noise
        return min(float(value), 0.0)

    @staticmethod
    def prox_gradient_residual(problem: CompositeProblem, x: np.ndarray) -> float:
        """||L (prox_{r/L}(x - grad f(x)/L) - x)|| with the aggregate L"""
        L = problem.aggregate_smoothness
        return float(L * np.linalg.norm(ProblemService.prox_gradient_step(problem, x, L) - x))

    @staticmethod
    def proximal_pl_violations(
        problem: CompositeProblem, points: Sequence[np.ndarray], rtol: float = 1e-9
    ) -> int:
        """Number of points breaking sigma (P(x) - P*) <= -L * gap(x)"""
        if problem.sigma is None or problem.optimal_value is None:
            raise ValueError("Proximal-PL check needs sigma and a known optimal value")
        L = problem.aggregate_smoothness
        violations = 0
        for x in points:
            lhs = problem.sigma * (ProblemService.eval_objective(problem, x) - problem.optimal_value)
            rhs = -L * ProblemService.forward_backward_gap(problem, x)
            if lhs > rhs + rtol * max(abs(rhs), 1.0):
                violations += 1
        return violations

    @staticmethod
    def reference_solve(
        problem: CompositeProblem,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
        accelerated: bool = True,
    ) -> ReferenceSolution:
        """
        Deterministic proximal gradient with fixed step 1/L

        With ``accelerated`` the iteration adds FISTA momentum and restarts it
        whenever the momentum direction opposes the gradient mapping.

        Args:
            problem: Problem to minimize
            tol: Target prox-gradient residual
            max_iter: Iteration cap

        Returns:
            ReferenceSolution with x*, P*, iteration count and final residual
        """
        tol = settings.reference_tol if tol is None else tol
        max_iter = settings.reference_max_iter if max_iter is None else max_iter
        L = problem.aggregate_smoothness
        if not L > 0:
            raise ValueError("reference_solve needs L > 0")

        x = ProxService.prox(problem.regularizer, 1.0 / L, np.zeros(problem.dimension))
        y = x.copy()
        t = 1.0
        for iteration in range(1, max_iter + 1):
            x_next = ProblemService.prox_gradient_step(problem, y, L)
            if L * np.linalg.norm(x_next - y) < tol:
                residual = ProblemService.prox_gradient_residual(problem, x_next)
                if residual < tol:
                    value = ProblemService.eval_objective(problem, x_next)
                    logger.info(
                        f"Reference solve converged in {iteration} iterations, P*={value!r}"
                    )
                    return ReferenceSolution(x_next, value, iteration, residual)
            if not accelerated:
                x, y = x_next, x_next
                continue
            if (y - x_next) @ (x_next - x) > 0:
                t, y = 1.0, x_next
                x = x_next
                continue
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_next + ((t - 1.0) / t_next) * (x_next - x)
            x, t = x_next, t_next

        raise InvariantViolation(
            f"Reference solve did not reach residual {tol} within {max_iter} iterations"
        )

    @staticmethod
    def solve_and_attach(problem: CompositeProblem, **kwargs) -> CompositeProblem:
        """Problem copy carrying the reference minimizer and optimal value"""
        solution = ProblemService.reference_solve(problem, **kwargs)
        return problem.with_optimum(solution.minimizer, solution.optimal_value)

    @staticmethod
    def _check_point(problem: CompositeProblem, x: np.ndarray) -> None:
        if np.shape(x) != (problem.dimension,):
            raise ValueError(
                f"Dimension mismatch: problem has d={problem.dimension}, x has shape {np.shape(x)}"
            )
