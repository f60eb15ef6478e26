"""Plug-in values of the variance parameters, and the modes they converge to."""

import logging

import numpy as np
from scipy.optimize import minimize

from axe_cv.main.axe import glmm_pseudo_response, poisson_mode
from axe_cv.main.folds import FoldPlan, map_folds
from axe_cv.main.gibbs import PosteriorDraws
from axe_cv.main.linalg import log_marginal_likelihood
from axe_cv.main.model import ModelSpec, PseudoResponse, VarianceEstimates
from axe_cv.main.psis import ImportanceWeights
from axe_cv.main.types.mistakes import DimensionMismatch, Mistake
from axe_cv.main.types.pseudo_variance import PseudoVariance
from axe_cv.main.types.variance_source import VarianceSource

logger = logging.getLogger(__name__)


def posterior_mean_estimates(draws: PosteriorDraws) -> VarianceEstimates:
    """Posterior means of Sigma and of tau"""
    return VarianceEstimates(
        sigma=draws.sigma.mean(),
        tau=float(np.mean(np.sqrt(draws.tau2))),
        source=VarianceSource.POSTERIOR_MEAN,
    )


def iis_estimates(draws: PosteriorDraws, weights: ImportanceWeights) -> VarianceEstimates:
    """Importance-reweighted posterior means of Sigma and of tau"""
    w = weights.normalized
    if w.shape[0] != draws.S:
        raise DimensionMismatch(f"Got {w.shape[0]} weights for {draws.S} draws")
    sigma = np.einsum("s,sij->ij", w, draws.sigma.stack())
    return VarianceEstimates(
        sigma=(sigma + sigma.T) / 2,
        tau=float(w @ np.sqrt(draws.tau2)),
        source=VarianceSource.IIS,
    )


def _estimates_at(spec: ModelSpec, log_params: np.ndarray) -> VarianceEstimates:
    sigma = spec.cov.with_sigma2(float(np.exp(log_params[0]))).matrix(spec.P2)
    tau = 1.0 if spec.has_fixed_variances else float(np.exp(0.5 * log_params[1]))
    return VarianceEstimates(sigma=sigma, tau=tau, source=VarianceSource.MAP)


def variance_mode(
    spec: ModelSpec, start: np.ndarray | None = None, tol: float = 1e-8
) -> np.ndarray:
    """
    Maximizer of the marginal likelihood over (sigma^2, tau^2).

    Sigma varies through the scale of the model's covariance structure.
    Models with fixed observation variances only optimize sigma^2 and
    return tau^2 = 1. Nelder-Mead runs on the log scale.
    """
    free = 1 if spec.has_fixed_variances else 2
    if start is None:
        start = np.array([spec.cov.sigma2, float(np.var(spec.working_response)) or 1.0])
    x0 = np.log(np.asarray(start, dtype=float)[:free])

    def objective(log_params: np.ndarray) -> float:
        if np.any(np.abs(log_params) > 50):
            return np.inf
        try:
            return -log_marginal_likelihood(spec, _estimates_at(spec, log_params))
        except Mistake:
            return np.inf

    result = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={"xatol": tol, "fatol": tol, "maxiter": 4000},
    )
    if not result.success:
        logger.warning("Variance mode search stopped early: %s", result.message)
    mode = np.exp(result.x)
    return mode if free == 2 else np.array([mode[0], 1.0])


def map_estimates(spec: ModelSpec, start: np.ndarray | None = None) -> VarianceEstimates:
    mode = variance_mode(spec, start)
    return _estimates_at(spec, np.log(mode))


def drop_cluster_mode_shift(
    spec: ModelSpec, plan: FoldPlan, threads: int | None = 1
) -> np.ndarray:
    """
    Per fold, the largest absolute change of the (sigma^2, tau^2) mode when the
    fold is removed from the data.
    """
    full = variance_mode(spec)

    def shift(fold_id: int, fold: np.ndarray) -> float:
        training = plan.training(fold_id)
        dropped = variance_mode(spec.take(training), start=full)
        return float(np.max(np.abs(dropped - full)))

    return np.array(map_folds(shift, plan, threads))


def fit_poisson_plugins(
    spec: ModelSpec,
    rounds: int = 20,
    variant: PseudoVariance = PseudoVariance.DELTA,
    tol: float = 1e-6,
) -> tuple[VarianceEstimates, PseudoResponse]:
    """
    GLMM plug-ins by alternating the posterior mode of beta with the marginal
    likelihood mode of sigma^2 on the resulting pseudo-response.
    """
    sigma2 = spec.cov.sigma2
    pseudo = None
    for round_ in range(rounds):
        cov = spec.cov.with_sigma2(sigma2)
        beta, fitted = poisson_mode(spec, cov.matrix(spec.P2))
        pseudo = glmm_pseudo_response(spec, beta, fitted, variant)
        working = spec.with_pseudo_response(pseudo).with_cov(cov)
        updated = float(variance_mode(working, start=np.array([sigma2, 1.0]))[0])
        converged = abs(updated - sigma2) <= tol * max(1.0, sigma2)
        sigma2 = updated
        if converged:
            logger.debug("GLMM plug-ins converged after %d rounds", round_ + 1)
            break
    else:
        logger.warning("GLMM plug-ins did not converge in %d rounds", rounds)
    estimates = VarianceEstimates(
        sigma=spec.cov.with_sigma2(sigma2).matrix(spec.P2),
        tau=1.0,
        source=VarianceSource.MAP,
    )
    return estimates, pseudo
