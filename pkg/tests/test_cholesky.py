import numpy as np
import pytest
from pytest import approx

from axe_cv.main.cholesky import Cholesky, check_spd, covariance_factor, symmetrize
from axe_cv.main.types.mistakes import DimensionMismatch, NotPositiveDefinite


def test_solve_and_logdet(rng, spd):
    a = spd(rng, 6)
    rhs = rng.standard_normal((6, 2))
    solver = Cholesky(a)
    assert np.allclose(solver.solve(rhs), np.linalg.solve(a, rhs), atol=1e-10)
    assert solver.logdet() == approx(np.linalg.slogdet(a)[1], rel=1e-12)
    assert np.allclose(solver.lower @ solver.lower.T, a)
    assert np.allclose(solver.inverse() @ a, np.eye(6), atol=1e-10)


def test_indefinite_matrix_is_a_mistake():
    with pytest.raises(NotPositiveDefinite):
        Cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]), "test matrix")


def test_non_finite_matrix_is_a_mistake():
    with pytest.raises(NotPositiveDefinite):
        Cholesky(np.array([[np.nan]]))


def test_non_square_matrix():
    with pytest.raises(DimensionMismatch):
        Cholesky(np.ones((2, 3)))


def test_empty_matrix():
    solver = Cholesky(np.zeros((0, 0)))
    assert solver.logdet() == 0.0
    assert solver.solve(np.zeros(0)).shape == (0,)
    assert solver.sample(np.random.default_rng(0), 3).shape == (3, 0)


def test_sample_covariance_is_the_inverse():
    a = np.diag([4.0, 0.25])
    draws = Cholesky(a).sample(np.random.default_rng(1), 40000)
    assert draws.shape == (40000, 2)
    assert draws.var(axis=0) == approx([0.25, 4.0], rel=0.05)


def test_check_spd_rejects_asymmetric():
    with pytest.raises(NotPositiveDefinite, match="not symmetric"):
        check_spd(np.array([[2.0, 1.0], [0.0, 2.0]]))


def test_covariance_factor(rng, spd):
    cov = spd(rng, 4)
    L = covariance_factor(cov)
    assert np.allclose(L @ L.T, cov)
    assert covariance_factor(np.zeros((0, 0))).shape == (0, 0)
    with pytest.raises(NotPositiveDefinite):
        covariance_factor(-np.eye(2))


def test_symmetrize():
    a = np.array([[1.0, 2.0], [0.0, 1.0]])
    assert np.array_equal(symmetrize(a), [[1.0, 1.0], [1.0, 1.0]])
