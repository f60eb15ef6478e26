"""
Leave-cluster-out approximations that reuse full-data posterior draws.

- ghosting redraws the held-out effects from their conditional prior
- iIS-C reweights draws by the inverse likelihood of the fold with the held-out
  effects integrated out
- iIS-A reweights by the inverse marginal likelihood of the fold given the
  variance parameters and the training data, integrating out all of beta
"""

import logging
import time

import numpy as np
from scipy.special import logsumexp

from axe_cv.main.cholesky import Cholesky, covariance_factor
from axe_cv.main.cv_result import CvResult, FoldRecord
from axe_cv.main.folds import FoldPlan, check_fold, map_folds
from axe_cv.main.gibbs import PosteriorDraws
from axe_cv.main.linalg import identical_rows, rank_one_downdate, woodbury_downdate
from axe_cv.main.model import ModelSpec
from axe_cv.main.psis import DEFAULT_TAIL_FRACTION, ImportanceWeights, psis_smooth
from axe_cv.main.types.cv_method import CvMethod
from axe_cv.main.types.iis_integration import IisIntegration
from axe_cv.main.types.mistakes import (
    DegenerateWeights,
    NonFiniteLogDensity,
    NotPositiveDefinite,
)

logger = logging.getLogger(__name__)

MC_INTEGRATION_DRAWS = 200


# --- Conditional normal of the held-out effects


def held_out_columns(spec: ModelSpec, fold: np.ndarray) -> np.ndarray:
    """Random-effect columns that are nonzero in the fold and zero in every training row"""
    mask = np.ones(spec.N, dtype=bool)
    mask[fold] = False
    in_fold = np.any(spec.X2[fold] != 0, axis=0)
    in_training = np.any(spec.X2[mask] != 0, axis=0)
    return np.flatnonzero(in_fold & ~in_training)


def conditional_normal(
    sigma: np.ndarray, held: np.ndarray, theta_rest: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """
    Mean and covariance of theta_held | theta_rest, Sigma.

    Returns the matrix A with mean A theta_rest when `theta_rest` is None.
    """
    held = np.asarray(held, dtype=int)
    rest = np.setdiff1d(np.arange(sigma.shape[0]), held)
    sigma_hh = sigma[np.ix_(held, held)]
    cross = sigma[np.ix_(held, rest)]
    if rest.size == 0 or not np.any(cross):
        A = np.zeros((held.size, rest.size))
        schur = sigma_hh
    else:
        solver = Cholesky(sigma[np.ix_(rest, rest)], "Sigma_-j,-j")
        A = solver.solve(cross.T).T
        schur = sigma_hh - A @ cross.T
    schur = (schur + schur.T) / 2
    if theta_rest is None:
        return A, schur
    return A @ np.asarray(theta_rest, dtype=float), schur


def ghost_draws(
    theta_rest: np.ndarray,
    Sigma: np.ndarray,
    held: np.ndarray,
    count: int,
    seed: int | np.random.Generator = 0,
) -> np.ndarray:
    """count x |held| draws of theta_held | theta_rest, Sigma"""
    rng = np.random.default_rng(seed)
    mean, cov = conditional_normal(Sigma, held, theta_rest)
    if count == 0:
        return np.zeros((0, mean.size))
    factor = covariance_factor(cov, "conditional Sigma_jj")
    return mean[None, :] + rng.standard_normal((count, mean.size)) @ factor.T


def _split_fold_design(spec: ModelSpec, fold: np.ndarray, held: np.ndarray):
    """Fold design with the held-out columns zeroed, and the held-out block Z"""
    X_rest = spec.X[fold].copy()
    X_rest[:, spec.P1 + held] = 0
    Z = spec.X2[np.ix_(fold, held)]
    return X_rest, Z


def ghost_estimate(
    draws: PosteriorDraws, spec: ModelSpec, fold: np.ndarray, seed: int = 0
) -> np.ndarray:
    """Link-scale average of mu + ghost effect over the draws"""
    fold = np.asarray(fold, dtype=int)
    held = held_out_columns(spec, fold)
    rest = np.setdiff1d(np.arange(spec.P2), held)
    X_rest, Z = _split_fold_design(spec, fold, held)
    rng = np.random.default_rng(seed)
    total = np.zeros(fold.size)
    for s in range(draws.S):
        beta = draws.beta[s]
        theta = ghost_draws(beta[spec.P1 + rest], draws.sigma[s], held, 1, rng)[0]
        total += X_rest @ beta + Z @ theta
    return total / draws.S


# --- Importance weighting


def normal_logpdf(y: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    solver = Cholesky(cov, "fold predictive covariance")
    residual = y - mean
    return float(
        -0.5 * (y.size * np.log(2 * np.pi) + solver.logdet() + residual @ solver.solve(residual))
    )


def _weights(
    log_lik: np.ndarray, smooth: bool, tail_fraction: float
) -> ImportanceWeights:
    bad = np.flatnonzero(~np.isfinite(log_lik))
    if bad.size:
        raise NonFiniteLogDensity(int(bad[0]))
    log_w = -log_lik
    weights = (
        psis_smooth(log_w, tail_fraction)
        if smooth
        else ImportanceWeights.from_log_weights(log_w)
    )
    if log_w.size > 1 and weights.ess < 2:
        raise DegenerateWeights(weights.ess)
    return weights


def iis_c(
    draws: PosteriorDraws,
    spec: ModelSpec,
    fold: np.ndarray,
    integration: IisIntegration = IisIntegration.ANALYTIC,
    smooth: bool = True,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    seed: int = 0,
) -> tuple[ImportanceWeights, np.ndarray]:
    """
    Reweight draws by 1 / f(Y_j | mu, theta_-j, Sigma, tau), the held-out
    effects integrated out either analytically or with Monte Carlo draws.
    """
    fold = np.asarray(fold, dtype=int)
    held = held_out_columns(spec, fold)
    rest = np.setdiff1d(np.arange(spec.P2), held)
    X_rest, Z = _split_fold_design(spec, fold, held)
    y = spec.working_response[fold]
    rng = np.random.default_rng(seed)

    log_lik = np.empty(draws.S)
    means = np.empty((draws.S, fold.size))
    for s in range(draws.S):
        beta = draws.beta[s]
        a, M = conditional_normal(draws.sigma[s], held, beta[spec.P1 + rest])
        p = spec.observation_variance(float(np.sqrt(draws.tau2[s])))[fold]
        means[s] = X_rest @ beta + Z @ a
        match integration:
            case IisIntegration.ANALYTIC:
                log_lik[s] = normal_logpdf(y, means[s], np.diag(p) + Z @ M @ Z.T)
            case IisIntegration.MONTE_CARLO:
                factor = covariance_factor(M, "conditional Sigma_jj")
                thetas = a + rng.standard_normal((MC_INTEGRATION_DRAWS, a.size)) @ factor.T
                mu = X_rest @ beta
                residuals = y[None, :] - mu[None, :] - thetas @ Z.T
                terms = -0.5 * (np.log(2 * np.pi * p).sum() + np.sum(residuals**2 / p, axis=1))
                log_lik[s] = logsumexp(terms) - np.log(MC_INTEGRATION_DRAWS)

    weights = _weights(log_lik, smooth, tail_fraction)
    return weights, weights.normalized @ means


def iis_a(
    draws: PosteriorDraws,
    spec: ModelSpec,
    fold: np.ndarray,
    smooth: bool = True,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
) -> tuple[ImportanceWeights, np.ndarray]:
    """
    Reweight draws by 1 / f(Y_j | Sigma, tau, Y_-j), the fold being
    N(X_j V_-j X_-j' P_-j^-1 Y_-j, P_j + X_j V_-j X_j') for each draw.
    """
    fold = np.asarray(fold, dtype=int)
    X, y = spec.X, spec.working_response
    X_f, y_f = X[fold], y[fold]
    scales = draws.sigma.scales
    cache: dict[tuple[float, float], tuple[float, np.ndarray]] = {}

    log_lik = np.empty(draws.S)
    means = np.empty((draws.S, fold.size))
    for s in range(draws.S):
        key = None if scales is None else (float(scales[s]), float(draws.tau2[s]))
        if key is not None and key in cache:
            log_lik[s], means[s] = cache[key]
            continue
        p = spec.observation_variance(float(np.sqrt(draws.tau2[s])))
        try:
            precision = X.T @ (X / p[:, None]) + spec.prior_precision(draws.sigma[s])
            V = Cholesky(precision, "V^-1").inverse()
        except NotPositiveDefinite as error:
            raise NotPositiveDefinite("V^-1", culprit_draw=s) from error
        if identical_rows(X_f, p[fold]):
            V_minus = rank_one_downdate(V, X_f[0], float(np.sum(1 / p[fold])))
        else:
            V_minus = woodbury_downdate(V, X_f, p[fold])
        b_minus = X.T @ (y / p) - X_f.T @ (y_f / p[fold])
        means[s] = X_f @ V_minus @ b_minus
        log_lik[s] = normal_logpdf(y_f, means[s], np.diag(p[fold]) + X_f @ V_minus @ X_f.T)
        if key is not None:
            cache[key] = (log_lik[s], means[s].copy())

    weights = _weights(log_lik, smooth, tail_fraction)
    return weights, weights.normalized @ means


# --- Plan drivers


def ghost_run(
    draws: PosteriorDraws,
    spec: ModelSpec,
    plan: FoldPlan,
    seed: int = 0,
    threads: int | None = 1,
) -> CvResult:
    started = time.perf_counter()

    def run_fold(fold_id: int, fold: np.ndarray) -> FoldRecord:
        fold, _ = check_fold(plan, fold_id)
        eta = ghost_estimate(draws, spec, fold, seed=seed + fold_id)
        return FoldRecord(
            fold_id=fold_id, indices=fold, predicted=spec.to_response_scale(eta, fold)
        )

    records = map_folds(run_fold, plan, threads)
    return CvResult(
        method=CvMethod.GHOST,
        per_fold=tuple(records),
        meta={"seed": str(seed), "seconds": f"{time.perf_counter() - started:.6f}"},
    )


def iis_run(
    draws: PosteriorDraws,
    spec: ModelSpec,
    plan: FoldPlan,
    method: CvMethod,
    integration: IisIntegration = IisIntegration.ANALYTIC,
    smooth: bool = True,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    seed: int = 0,
    threads: int | None = 1,
) -> CvResult:
    """Integrated importance sampling over every fold of the plan"""
    started = time.perf_counter()

    def run_fold(fold_id: int, fold: np.ndarray) -> FoldRecord:
        fold, _ = check_fold(plan, fold_id)
        match method:
            case CvMethod.IIS_C:
                weights, eta = iis_c(
                    draws,
                    spec,
                    fold,
                    integration=integration,
                    smooth=smooth,
                    tail_fraction=tail_fraction,
                    seed=seed + fold_id,
                )
            case CvMethod.IIS_A:
                weights, eta = iis_a(
                    draws, spec, fold, smooth=smooth, tail_fraction=tail_fraction
                )
            case _:
                raise ValueError(f"Not an importance sampling method: {method}")
        if weights.smoothed and weights.khat > 0.7:
            logger.warning("Fold %d has a large Pareto k-hat (%.2f)", fold_id, weights.khat)
        return FoldRecord(
            fold_id=fold_id,
            indices=fold,
            predicted=spec.to_response_scale(eta, fold),
            weights=weights.normalized,
            khat=weights.khat,
        )

    records = map_folds(run_fold, plan, threads)
    return CvResult(
        method=method,
        per_fold=tuple(records),
        meta={
            "integration": str(integration),
            "smoothed": str(smooth),
            "seconds": f"{time.perf_counter() - started:.6f}",
        },
    )


def naive_run(
    draws: PosteriorDraws, spec: ModelSpec, plan: FoldPlan, threads: int | None = 1
) -> CvResult:
    """Full-data posterior mean of X beta at each fold, without any refitting"""
    started = time.perf_counter()

    def run_fold(fold_id: int, fold: np.ndarray) -> FoldRecord:
        fold, _ = check_fold(plan, fold_id)
        eta = draws.fitted(spec.X[fold]).mean(axis=0)
        return FoldRecord(
            fold_id=fold_id, indices=fold, predicted=spec.to_response_scale(eta, fold)
        )

    records = map_folds(run_fold, plan, threads)
    return CvResult(
        method=CvMethod.NAIVE,
        per_fold=tuple(records),
        meta={"seconds": f"{time.perf_counter() - started:.6f}"},
    )
