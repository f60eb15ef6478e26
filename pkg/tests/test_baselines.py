import numpy as np
import pytest
from pytest import approx

from axe_cv.main.axe import axe_fold
from axe_cv.main.baselines import (
    conditional_normal,
    ghost_draws,
    ghost_estimate,
    ghost_run,
    held_out_columns,
    iis_a,
    iis_c,
    iis_run,
    naive_run,
    normal_logpdf,
)
from axe_cv.main.covariance import CovarianceStructure
from axe_cv.main.folds import build_fold_plan
from axe_cv.main.gibbs import (
    GibbsConfig,
    PosteriorDraws,
    SigmaDraws,
    gibbs_run,
    mc_standard_error,
    mcv_fold,
)
from axe_cv.main.model import ModelSpec, VarianceEstimates
from axe_cv.main.types.covariance_kind import CovarianceKind
from axe_cv.main.types.cv_method import CvMethod
from axe_cv.main.types.fold_scheme import FoldScheme
from axe_cv.main.types.iis_integration import IisIntegration
from axe_cv.main.types.mistakes import DegenerateWeights


def constant_variance_draws(spec: ModelSpec, S: int, sigma2: float, tau2: float, seed: int = 0):
    beta = np.random.default_rng(seed).standard_normal((S, spec.P))
    return PosteriorDraws(
        beta=beta,
        sigma=SigmaDraws.scaled(np.full(S, sigma2), np.eye(spec.P2)),
        tau2=np.full(S, tau2),
    )


# --- Ghosting


def test_ghost_draws_from_an_independent_prior():
    draws = ghost_draws(np.array([3.0]), 4.0 * np.eye(2), np.array([0]), 10000, seed=1)
    assert draws.shape == (10000, 1)
    assert abs(draws.mean()) < 0.06
    assert draws.var() == approx(4.0, rel=0.05)


def test_conditional_normal_of_a_correlated_pair():
    sigma = np.array([[1.0, 0.5], [0.5, 1.0]])
    mean, cov = conditional_normal(sigma, np.array([0]), np.array([1.0]))
    assert mean == approx([0.5])
    assert cov == approx([[0.75]])
    draws = ghost_draws(np.array([1.0]), sigma, np.array([0]), 20000, seed=2)
    assert draws.mean() == approx(0.5, abs=0.03)
    assert draws.var() == approx(0.75, rel=0.05)


def test_zero_ghost_draws():
    assert ghost_draws(np.array([0.0]), np.eye(2), np.array([1]), 0).shape == (0, 1)


def test_held_out_columns(one_way):
    spec, labels = one_way(J=3, n=2)
    assert held_out_columns(spec, np.flatnonzero(labels == 1)).tolist() == [1]
    # Leaving out one row of a cluster keeps its column observed
    assert held_out_columns(spec, np.array([0])).size == 0


def test_ghost_estimate_averages_the_fixed_part(one_way):
    spec, labels = one_way(J=3, n=2)
    draws = constant_variance_draws(spec, 4000, 1.0, 1.0)
    fold = np.flatnonzero(labels == 2)
    estimate = ghost_estimate(draws, spec, fold, seed=3)
    assert estimate == approx(np.full(2, draws.beta[:, 0].mean()), abs=4 / np.sqrt(4000))


def test_ghost_estimate_from_one_draw(one_way):
    spec, labels = one_way(J=3, n=2)
    draws = constant_variance_draws(spec, 1, 2.0, 1.0, seed=5)
    fold = np.flatnonzero(labels == 0)
    ghost = ghost_draws(
        draws.beta[0, 2:], 2.0 * np.eye(3), np.array([0]), 1, np.random.default_rng(7)
    )
    expected = draws.beta[0, 0] + ghost[0, 0]
    assert ghost_estimate(draws, spec, fold, seed=7) == approx(np.full(2, expected))


def test_ghost_estimate_shifts_by_the_car_conditional_mean(one_way):
    spec, labels = one_way(J=3, n=2)
    path = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    sigma = CovarianceStructure(kind=CovarianceKind.CAR, alpha=0.8, W=path).matrix(3)
    S = 2000
    draws = PosteriorDraws(
        beta=np.tile([0.5, 0.0, 1.5, -1.0], (S, 1)),
        sigma=SigmaDraws(dense=np.repeat(sigma[None], S, axis=0)),
        tau2=np.ones(S),
    )
    fold = np.flatnonzero(labels == 0)
    theta_rest = np.array([1.5, -1.0])

    Q = np.linalg.inv(sigma)
    shift = -(Q[0, 1:] @ theta_rest) / Q[0, 0]
    brute = ghost_draws(theta_rest, sigma, np.array([0]), 100_000, seed=9)[:, 0]
    variance = 1 / Q[0, 0]
    assert brute.mean() == approx(shift, abs=3 * np.sqrt(variance / 100_000))
    assert abs(shift) > 0.5

    estimate = ghost_estimate(draws, spec, fold, seed=3)
    tolerance = 3 * np.sqrt(variance / S + variance / 100_000)
    assert estimate == approx(np.full(2, 0.5 + brute.mean()), abs=tolerance)


# --- Importance sampling


def test_iis_c_single_draw_is_its_conditional_mean(one_way):
    spec, labels = one_way(J=3, n=2)
    draws = constant_variance_draws(spec, 1, 1.0, 1.0, seed=2)
    fold = np.flatnonzero(labels == 1)
    weights, estimate = iis_c(draws, spec, fold)
    assert weights.normalized == approx([1.0])
    assert estimate == approx(np.full(2, draws.beta[0, 0]))


def test_identical_draws_get_uniform_weights(one_way):
    spec, labels = one_way(J=3, n=2)
    beta = np.tile(np.random.default_rng(1).standard_normal(spec.P), (10, 1))
    draws = PosteriorDraws(
        beta=beta, sigma=SigmaDraws.scaled(np.ones(10), np.eye(3)), tau2=np.ones(10)
    )
    weights, _ = iis_c(draws, spec, np.flatnonzero(labels == 0))
    assert weights.normalized == approx(np.full(10, 0.1))


def test_scalar_inverse_likelihood_weight():
    spec = ModelSpec(X1=np.ones((2, 1)), X2=np.eye(2), response=np.zeros(2))
    draws = PosteriorDraws(
        beta=np.array([[0.0, 0.3, -0.4]]),
        sigma=SigmaDraws.scaled(np.array([0.5]), np.eye(2)),
        tau2=np.array([0.5]),
    )
    weights, _ = iis_c(draws, spec, np.array([1]), smooth=False)
    assert weights.log_w[0] == approx(0.5 * np.log(2 * np.pi))


def test_monte_carlo_integration_approaches_the_analytic_one(one_way):
    spec, labels = one_way(J=4, n=3, seed=3)
    draws = gibbs_run(spec, GibbsConfig(draws=200, burn_in=100, seed=1))
    fold = np.flatnonzero(labels == 2)
    _, analytic = iis_c(draws, spec, fold, smooth=False)
    _, sampled = iis_c(draws, spec, fold, IisIntegration.MONTE_CARLO, smooth=False, seed=4)
    assert sampled == approx(analytic, abs=0.1)


def test_degenerate_weights(one_way):
    spec, labels = one_way(J=3, n=2)
    fold = np.flatnonzero(labels == 0)
    y = spec.response[fold].mean()
    beta = np.zeros((10, spec.P))
    beta[:, 0] = y
    beta[9, 0] = y + 50.0
    draws = PosteriorDraws(
        beta=beta, sigma=SigmaDraws.scaled(np.full(10, 0.01), np.eye(3)), tau2=np.full(10, 0.01)
    )
    with pytest.raises(DegenerateWeights):
        iis_c(draws, spec, fold, smooth=False)


def test_iis_a_with_constant_variances_is_axe(one_way):
    spec, labels = one_way(J=5, n=[2, 3, 4, 3, 2], seed=6)
    draws = constant_variance_draws(spec, 50, 1.5, 0.8, seed=1)
    var = VarianceEstimates(sigma=1.5 * np.eye(5), tau=float(np.sqrt(0.8)))
    for label in range(5):
        fold = np.flatnonzero(labels == label)
        weights, estimate = iis_a(draws, spec, fold)
        assert weights.normalized == approx(np.full(50, 0.02))
        assert np.max(np.abs(estimate - axe_fold(spec, var, fold))) < 1e-10


def test_normal_logpdf():
    assert normal_logpdf(np.zeros(1), np.zeros(1), np.eye(1)) == approx(-0.5 * np.log(2 * np.pi))


def two_cluster_regression(seed: int = 0) -> tuple[ModelSpec, np.ndarray]:
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], 6)
    x = rng.standard_normal(labels.size)
    theta = rng.standard_normal(2)
    y = 1.0 + 0.7 * x + theta[labels] + rng.normal(0.0, 0.5, labels.size)
    spec = ModelSpec(
        X1=np.column_stack([np.ones(labels.size), x]),
        X2=(labels[:, None] == np.arange(2)[None, :]).astype(float),
        response=y,
    )
    return spec, labels


@pytest.mark.slow
def test_iis_a_matches_a_refit_of_the_two_cluster_model():
    spec, labels = two_cluster_regression(seed=4)
    fold = np.flatnonzero(labels == 0)
    training = np.flatnonzero(labels == 1)
    draws = gibbs_run(spec, GibbsConfig(draws=200, burn_in=200, seed=1))
    _, estimate = iis_a(draws, spec, fold)

    # With a flat intercept the held-out mean is the training least squares fit
    coef, *_ = np.linalg.lstsq(spec.X1[training], spec.response[training], rcond=None)
    assert estimate == approx(spec.X1[fold] @ coef, rel=1e-6, abs=1e-8)

    refit_config = GibbsConfig(draws=4000, burn_in=500, seed=2)
    refit, refit_draws = mcv_fold(spec, refit_config, fold)
    # The held-out effect has conditional mean zero under a diagonal Sigma
    X_fold = spec.X[fold].copy()
    X_fold[:, spec.P1] = 0
    per_draw = refit_draws.beta @ X_fold.T
    assert per_draw.mean(axis=0) == approx(refit)
    standard_error = mc_standard_error(per_draw)
    assert np.all(np.abs(estimate - refit) <= 3 * standard_error)


# --- Plan drivers


def test_drivers_cover_every_fold(one_way):
    spec, labels = one_way(J=4, n=3, seed=2)
    plan = build_fold_plan(FoldScheme.LCO, labels=labels)
    draws = gibbs_run(spec, GibbsConfig(draws=300, burn_in=100, seed=2))
    ghost = ghost_run(draws, spec, plan, seed=1)
    iis = iis_run(draws, spec, plan, CvMethod.IIS_C, threads=2)
    marginal = iis_run(draws, spec, plan, CvMethod.IIS_A)
    naive = naive_run(draws, spec, plan)
    for result in (ghost, iis, marginal, naive):
        assert len(result.per_fold) == plan.J
        assert np.all(np.isfinite(result.predictions(spec.N)))
    assert all(record.khat is not None for record in iis.per_fold)
    assert all(record.weights.sum() == approx(1.0) for record in marginal.per_fold)
    assert naive.method == CvMethod.NAIVE


def test_short_chains_report_no_tail_shape(one_way):
    spec, labels = one_way(J=3, n=2, seed=4)
    plan = build_fold_plan(FoldScheme.LCO, labels=labels)
    draws = constant_variance_draws(spec, 10, 1.0, 1.0)
    result = iis_run(draws, spec, plan, CvMethod.IIS_A)
    assert all(np.isnan(record.khat) for record in result.per_fold)
