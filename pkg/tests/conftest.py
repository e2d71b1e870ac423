"""Shared problems for the test suite"""

import numpy as np
import pytest

from asyncopt.services.dataset_service import DatasetService
from asyncopt.services.problem_service import ProblemService


@pytest.fixture(scope="session")
def lasso_problem():
    """Lasso on 100 samples, d = 20, five components, solved to high accuracy"""
    design, response, _ = DatasetService.synthesize_regression(100, 20, seed=3)
    problem = DatasetService.build_lasso_problem(design, response, 0.05, n_batches=5, shuffle_seed=1)
    return ProblemService.solve_and_attach(problem)


@pytest.fixture(scope="session")
def wide_lasso_problem():
    """Lasso on 200 samples, d = 50, five components"""
    design, response, _ = DatasetService.synthesize_regression(200, 50, seed=3)
    problem = DatasetService.build_lasso_problem(design, response, 0.05, n_batches=5, shuffle_seed=1)
    return ProblemService.solve_and_attach(problem)


@pytest.fixture(scope="session")
def block_lasso_problem():
    """Lasso with d = 28 split into 14 blocks of two coordinates"""
    design, response, _ = DatasetService.synthesize_regression(120, 28, seed=5)
    problem = DatasetService.build_lasso_problem(
        design,
        response,
        0.05,
        n_batches=4,
        partition=ProblemService.even_partition(28, 14),
        shuffle_seed=2,
    )
    return ProblemService.solve_and_attach(problem)


@pytest.fixture(scope="session")
def logistic_dataset():
    return DatasetService.synthesize_classification(200, 50, 0.1, seed=7)


@pytest.fixture(scope="session")
def logistic_problem(logistic_dataset):
    """l1/l2 logistic regression with ten batches of twenty samples"""
    problem = DatasetService.build_logistic_problem(logistic_dataset, 1e-5, 1e-4, 10, shuffle_seed=0)
    return ProblemService.solve_and_attach(problem)


@pytest.fixture(scope="session")
def strongly_convex_quadratic():
    """0.5 x^T A x - b^T x with eigenvalues in [1, 1000] and a closed-form optimum"""
    A = DatasetService.make_spd_matrix(20, 1000.0, seed=11)
    b = np.random.default_rng(12).standard_normal(20)
    return DatasetService.build_quadratic_problem(A, b)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
