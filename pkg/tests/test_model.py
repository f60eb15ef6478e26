import numpy as np
import pytest

from axe_cv.main.covariance import CovarianceStructure
from axe_cv.main.model import (
    ModelSpec,
    PseudoResponse,
    VarianceEstimates,
    intercept_residual,
    validate_model,
)
from axe_cv.main.types.family import Family
from axe_cv.main.types.mistakes import (
    DimensionMismatch,
    MissingPseudoResponse,
    NoInterceptSpan,
    NotPositiveDefinite,
)


def small_spec(**changes) -> ModelSpec:
    options = dict(
        X1=np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]]),
        X2=np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        response=np.array([0.5, 1.0, -0.2]),
        C=np.eye(2),
    )
    options.update(changes)
    return ModelSpec(**options)


def test_valid_model():
    spec = small_spec()
    validate_model(spec)
    assert (spec.N, spec.P1, spec.P2, spec.P) == (3, 2, 2, 4)
    assert spec.X.shape == (3, 4)


def test_intercept_span():
    with pytest.raises(NoInterceptSpan):
        validate_model(small_spec(X1=np.array([[0.0], [1.0], [2.0]]), C=None))
    # The ones vector may be a combination of columns
    X1 = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert intercept_residual(X1) < 1e-12


def test_prior_must_be_positive_definite():
    with pytest.raises(NotPositiveDefinite):
        validate_model(small_spec(C=np.array([[1.0, 2.0], [2.0, 1.0]])))


def test_dimension_mismatches():
    with pytest.raises(DimensionMismatch):
        validate_model(small_spec(X2=np.ones((2, 2))))
    with pytest.raises(DimensionMismatch):
        validate_model(small_spec(C=np.eye(3)))
    with pytest.raises(DimensionMismatch):
        validate_model(small_spec(known_variance=np.ones(4)))
    with pytest.raises(DimensionMismatch):
        ModelSpec(X1=np.ones((1, 1, 1)), X2=np.ones((1, 1)), response=[1.0])


def test_non_finite_response():
    with pytest.raises(DimensionMismatch):
        validate_model(small_spec(response=np.array([0.0, np.inf, 1.0])))


def test_observation_variance():
    spec = small_spec()
    assert np.array_equal(spec.observation_variance(2.0), np.full(3, 4.0))
    known = small_spec(known_variance=np.array([1.0, 2.0, 3.0]))
    assert known.has_fixed_variances
    assert np.array_equal(known.observation_variance(5.0), [1.0, 2.0, 3.0])


def test_poisson_needs_pseudo_response():
    spec = small_spec(response=np.array([1.0, 3.0, 0.0]), family=Family.POISSON_LOG)
    with pytest.raises(MissingPseudoResponse):
        spec.working_response
    pseudo = PseudoResponse(yg=np.zeros(3), pvar=np.ones(3))
    with_pseudo = spec.with_pseudo_response(pseudo)
    assert np.array_equal(with_pseudo.working_response, np.zeros(3))
    assert np.allclose(with_pseudo.to_response_scale(np.zeros(2), np.array([0, 2])), 1.0)


def test_pseudo_response_validation():
    with pytest.raises(NotPositiveDefinite):
        PseudoResponse(yg=np.zeros(2), pvar=np.array([1.0, 0.0]))
    with pytest.raises(DimensionMismatch):
        PseudoResponse(yg=np.zeros(2), pvar=np.ones(3))


def test_take_restricts_every_row_vector():
    spec = small_spec(known_variance=np.array([1.0, 2.0, 3.0]), offset=np.array([4.0, 5.0, 6.0]))
    part = spec.take(np.array([0, 2]))
    assert part.N == 2
    assert np.array_equal(part.response, [0.5, -0.2])
    assert np.array_equal(part.known_variance, [1.0, 3.0])
    assert np.array_equal(part.offset, [4.0, 6.0])
    assert np.array_equal(part.X2, [[1.0, 0.0], [0.0, 1.0]])


def test_arrays_are_read_only():
    spec = small_spec()
    with pytest.raises(ValueError):
        spec.response[0] = 10.0


def test_prior_precision():
    spec = small_spec(C=2.0 * np.eye(2), cov=CovarianceStructure(sigma2=4.0))
    precision = spec.prior_precision(spec.sigma())
    assert np.allclose(np.diag(precision), [0.5, 0.5, 0.25, 0.25])
    flat = small_spec(C=None).prior_precision(np.eye(2))
    assert np.array_equal(flat[:2, :2], np.zeros((2, 2)))


def test_variance_estimates_validation():
    with pytest.raises(NotPositiveDefinite):
        VarianceEstimates(sigma=np.eye(2), tau=0.0)
    with pytest.raises(NotPositiveDefinite):
        VarianceEstimates(sigma=-np.eye(2), tau=1.0)
    estimates = VarianceEstimates.from_spec(small_spec(cov=CovarianceStructure(sigma2=2.0)))
    assert np.array_equal(estimates.sigma, 2.0 * np.eye(2))
