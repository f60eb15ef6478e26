import numpy as np
import pytest
from pytest import approx

from axe_cv.main.covariance import CovarianceStructure
from axe_cv.main.folds import build_fold_plan
from axe_cv.main.gibbs import PosteriorDraws, SigmaDraws
from axe_cv.main.linalg import log_marginal_likelihood
from axe_cv.main.model import ModelSpec, VarianceEstimates
from axe_cv.main.plugin import (
    drop_cluster_mode_shift,
    fit_poisson_plugins,
    iis_estimates,
    map_estimates,
    posterior_mean_estimates,
    variance_mode,
)
from axe_cv.main.psis import ImportanceWeights
from axe_cv.main.types.family import Family
from axe_cv.main.types.fold_scheme import FoldScheme
from axe_cv.main.types.mistakes import DimensionMismatch
from axe_cv.main.types.variance_source import VarianceSource


def small_draws() -> PosteriorDraws:
    return PosteriorDraws(
        beta=np.zeros((3, 2)),
        sigma=SigmaDraws.scaled(np.array([1.0, 2.0, 6.0]), np.eye(1)),
        tau2=np.array([1.0, 4.0, 16.0]),
    )


def test_posterior_means():
    estimates = posterior_mean_estimates(small_draws())
    assert estimates.source == VarianceSource.POSTERIOR_MEAN
    assert estimates.sigma == approx([[3.0]])
    # tau is averaged on the standard deviation scale
    assert estimates.tau == approx((1 + 2 + 4) / 3)


def test_reweighted_means():
    draws = small_draws()
    uniform = ImportanceWeights.from_log_weights(np.zeros(3))
    assert iis_estimates(draws, uniform).sigma == approx([[3.0]])
    tilted = ImportanceWeights.from_log_weights(np.log([0.5, 0.5, 0.0 + 1e-300]))
    estimates = iis_estimates(draws, tilted)
    assert estimates.source == VarianceSource.IIS
    assert estimates.sigma == approx([[1.5]])
    assert estimates.tau == approx(1.5)
    with pytest.raises(DimensionMismatch):
        iis_estimates(draws, ImportanceWeights.from_log_weights(np.zeros(2)))


def test_variance_mode_is_a_local_maximum(one_way):
    spec, _ = one_way(J=12, n=6, sigma2=2.0, tau2=1.0, seed=3)
    sigma2, tau2 = variance_mode(spec)

    def value(s2, t2):
        return log_marginal_likelihood(
            spec, VarianceEstimates(sigma=s2 * np.eye(12), tau=float(np.sqrt(t2)))
        )

    best = value(sigma2, tau2)
    for factor in (0.9, 1.1):
        assert value(sigma2 * factor, tau2) <= best + 1e-9
        assert value(sigma2, tau2 * factor) <= best + 1e-9


def test_map_estimates_with_known_variances(one_way):
    spec, _ = one_way(J=8, n=1, seed=4)
    spec = ModelSpec(
        X1=spec.X1, X2=spec.X2, response=spec.response, known_variance=np.full(8, 0.5)
    )
    estimates = map_estimates(spec)
    assert estimates.source == VarianceSource.MAP
    assert estimates.tau == 1.0
    assert estimates.sigma.shape == (8, 8)


def test_mode_shift_per_fold(one_way):
    spec, labels = one_way(J=6, n=4, seed=5)
    plan = build_fold_plan(FoldScheme.LCO, labels=labels)
    shifts = drop_cluster_mode_shift(spec, plan)
    assert shifts.shape == (6,)
    assert np.all(shifts >= 0)


def test_poisson_plugins():
    rng = np.random.default_rng(2)
    labels = np.repeat(np.arange(6), 5)
    exposure = rng.uniform(5, 20, size=labels.size)
    effects = rng.normal(0, 0.5, size=6)
    spec = ModelSpec(
        X1=np.ones((labels.size, 1)),
        X2=(labels[:, None] == np.arange(6)[None, :]).astype(float),
        response=rng.poisson(exposure * np.exp(effects[labels])).astype(float),
        C=np.array([[100.0]]),
        cov=CovarianceStructure(sigma2=0.5),
        family=Family.POISSON_LOG,
        offset=exposure,
    )
    estimates, pseudo = fit_poisson_plugins(spec)
    assert estimates.tau == 1.0
    assert estimates.sigma[0, 0] > 0
    assert pseudo.yg.shape == (labels.size,)
    assert np.all(pseudo.pvar > 0)


@pytest.mark.slow
def test_mode_shift_shrinks_with_more_clusters(one_way):
    medians = []
    for J in (5, 10, 20, 40, 80):
        shifts = []
        for seed in range(3):
            spec, labels = one_way(J=J, n=5, sigma2=1.0, tau2=1.0, seed=100 * J + seed)
            plan = build_fold_plan(FoldScheme.LCO, labels=labels)
            shifts.append(drop_cluster_mode_shift(spec, plan, threads=4))
        medians.append(float(np.median(np.concatenate(shifts))))
    assert all(later <= earlier for earlier, later in zip(medians, medians[1:]))
    assert medians[-1] < 0.05
