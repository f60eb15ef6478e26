"""
Plug-in cross-validated mean estimates.

Each fold is predicted by the conditional posterior mean of X_j beta given the
training rows only, with the variance parameters held at their full-data
plug-in values. Non-gaussian models go through a normal pseudo-response on the
link scale first.
"""

import logging
import time

import numpy as np

from axe_cv.main.cholesky import Cholesky
from axe_cv.main.cv_result import CvResult, FoldRecord
from axe_cv.main.folds import FoldPlan, check_fold, map_folds
from axe_cv.main.linalg import (
    conditional_posterior,
    identical_rows,
    rank_one_downdate,
    training_precision,
)
from axe_cv.main.model import ModelSpec, PseudoResponse, VarianceEstimates
from axe_cv.main.types.cv_method import CvMethod
from axe_cv.main.types.family import Family
from axe_cv.main.types.mistakes import (
    EmptyFold,
    EmptyTrainingSet,
    NonpositiveRate,
)
from axe_cv.main.types.pseudo_variance import PseudoVariance

logger = logging.getLogger(__name__)


def axe_fold(spec: ModelSpec, var: VarianceEstimates, fold: np.ndarray) -> np.ndarray:
    """Link-scale estimate of X_j beta given the training rows, by direct factorization"""
    fold = np.asarray(fold, dtype=int)
    if fold.size == 0:
        raise EmptyFold()
    mask = np.ones(spec.N, dtype=bool)
    mask[fold] = False
    training = np.flatnonzero(mask)
    if training.size == 0:
        raise EmptyTrainingSet()
    precision, b = training_precision(spec, var, training)
    beta = Cholesky(precision, "training precision").solve(b)
    return spec.X[fold] @ beta


def axe_run(
    spec: ModelSpec,
    var: VarianceEstimates,
    plan: FoldPlan,
    threads: int | None = 1,
    fast: bool = True,
) -> CvResult:
    """
    Plug-in estimates for every fold of the plan.

    Folds made of identical rows are removed from the full-data V with a
    rank-one downdate, other folds refactor their training precision.
    """
    started = time.perf_counter()
    y = spec.working_response
    p = spec.observation_variance(var.tau)
    full = conditional_posterior(spec, var) if fast else None

    def run_fold(fold_id: int, fold: np.ndarray) -> FoldRecord:
        fold, _ = check_fold(plan, fold_id)
        X_f = spec.X[fold]
        if full is not None and identical_rows(X_f, p[fold]):
            x = X_f[0]
            V_minus = rank_one_downdate(full.V, x, float(np.sum(1 / p[fold])))
            b_minus = full.b - x * float(np.sum(y[fold] / p[fold]))
            eta = np.full(fold.size, x @ V_minus @ b_minus)
        else:
            eta = axe_fold(spec, var, fold)
        return FoldRecord(
            fold_id=fold_id,
            indices=fold,
            predicted=spec.to_response_scale(eta, fold),
        )

    records = map_folds(run_fold, plan, threads)
    return CvResult(
        method=CvMethod.AXE,
        per_fold=tuple(records),
        meta={
            "plugin_source": str(var.source),
            "seconds": f"{time.perf_counter() - started:.6f}",
        },
    )


def glmm_pseudo_response(
    spec: ModelSpec,
    beta_hat: np.ndarray,
    draws_mean_fit: np.ndarray,
    variant: PseudoVariance = PseudoVariance.DELTA,
) -> PseudoResponse:
    """
    Normal approximation of a Poisson-log response.

    `draws_mean_fit` are the fitted count means E * lambda. The offset is divided
    out before taking logs, so yg = log(lambda).
    """
    fit = np.asarray(draws_mean_fit, dtype=float)
    bad = np.flatnonzero(~(fit > 0))
    if bad.size:
        raise NonpositiveRate(int(bad[0]))
    exposure = spec.exposure
    rate = fit / exposure
    match PseudoVariance(variant):
        case PseudoVariance.DELTA:
            # var(log(Y / E)) ~ 1 / (E * lambda)
            pvar = 1 / (exposure * rate)
        case PseudoVariance.RAW:
            # v / g'(g^-1(X beta))^2 with v = mu and g' = 1 / mu
            mu = exposure * np.exp(spec.X @ np.asarray(beta_hat, dtype=float))
            pvar = mu**3
    return PseudoResponse(yg=np.log(rate), pvar=pvar)


def poisson_objective(
    spec: ModelSpec, precision: np.ndarray, beta: np.ndarray
) -> float:
    eta = spec.X @ beta + np.log(spec.exposure)
    return float(spec.response @ eta - np.sum(np.exp(eta)) - 0.5 * beta @ precision @ beta)


def poisson_mode(
    spec: ModelSpec,
    sigma: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-10,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Posterior mode of beta in the Poisson-log model by penalized Newton steps.

    Returns the mode and the fitted count means E * exp(X beta).
    """
    if spec.family != Family.POISSON_LOG:
        raise ValueError(f"poisson_mode needs a poisson-log model, got {spec.family}")
    precision = spec.prior_precision(sigma)
    log_exposure = np.log(spec.exposure)
    beta = np.zeros(spec.P)
    objective = poisson_objective(spec, precision, beta)
    for iteration in range(max_iter):
        mu = np.exp(spec.X @ beta + log_exposure)
        gradient = spec.X.T @ (spec.response - mu) - precision @ beta
        hessian = spec.X.T @ (spec.X * mu[:, None]) + precision
        step = Cholesky(hessian, "Poisson Hessian").solve(gradient)
        # Step halving keeps the objective non-decreasing
        scale = 1.0
        while scale > 1e-10:
            candidate = beta + scale * step
            candidate_objective = poisson_objective(spec, precision, candidate)
            if candidate_objective >= objective - 1e-12 * abs(objective):
                break
            scale /= 2
        else:
            logger.debug("Poisson mode stalled after %d iterations", iteration + 1)
            break
        beta, objective = candidate, candidate_objective
        if np.max(np.abs(scale * step)) < tol:
            logger.debug("Poisson mode converged after %d iterations", iteration + 1)
            break
    else:
        logger.warning("Poisson mode did not converge in %d iterations", max_iter)
    fitted = np.exp(spec.X @ beta + log_exposure)
    return beta, fitted
