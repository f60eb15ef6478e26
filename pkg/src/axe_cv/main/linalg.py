"""
Closed-form conditional posterior of the regression coefficients.

Given the variance parameters, beta | Y ~ N(V X' P^-1 Y, V) with
V = (X' P^-1 X + blockdiag(C^-1, Sigma^-1))^-1, where P is the diagonal
observation covariance (tau^2 I in the homoscedastic case).
"""

from dataclasses import dataclass

import numpy as np

from axe_cv.main.cholesky import Cholesky, symmetrize
from axe_cv.main.model import ModelSpec, VarianceEstimates
from axe_cv.main.types.mistakes import (
    DimensionMismatch,
    HeterogeneousFoldRows,
    NotPositiveDefinite,
    SingularDowndate,
)

DOWNDATE_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class ConditionalPosterior:
    """
    Conditional posterior of beta on a set of rows.

    The smoother X V X' P^-1 is kept factored as V and X.
    """

    V: np.ndarray
    X: np.ndarray
    precision_weights: np.ndarray
    b: np.ndarray
    tau: float

    @property
    def beta(self) -> np.ndarray:
        """Posterior mean V X' P^-1 Y"""
        return self.V @ self.b

    def fitted(self) -> np.ndarray:
        return self.X @ self.beta

    def smoother(self) -> np.ndarray:
        """The N x N operator X V X' P^-1 mapping Y to the fitted mean"""
        return (self.X @ self.V @ self.X.T) * self.precision_weights[None, :]


@dataclass(frozen=True)
class FoldStatistics:
    """Scalar summaries of a fold whose design rows are all equal to x_j"""

    nu: float
    ybar: float
    ytilde: float
    ebar: float
    weight: float
    """Total observation precision of the fold, n_j / tau^2 when homoscedastic"""


def training_precision(
    spec: ModelSpec, var: VarianceEstimates, rows: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """X_r' P_r^-1 X_r + prior precision, and X_r' P_r^-1 Y_r"""
    X = spec.X if rows is None else spec.X[rows]
    y = spec.working_response if rows is None else spec.working_response[rows]
    p = spec.observation_variance(var.tau)
    p = p if rows is None else p[rows]
    weighted = X / p[:, None]
    precision = X.T @ weighted + spec.prior_precision(var.sigma)
    return symmetrize(precision), weighted.T @ y


def conditional_posterior(
    spec: ModelSpec, var: VarianceEstimates, rows: np.ndarray | None = None
) -> ConditionalPosterior:
    precision, b = training_precision(spec, var, rows)
    V = Cholesky(precision, "V^-1").inverse()
    X = spec.X if rows is None else spec.X[rows]
    p = spec.observation_variance(var.tau)
    p = p if rows is None else p[rows]
    return ConditionalPosterior(V=V, X=X, precision_weights=1 / p, b=b, tau=var.tau)


def conditional_posterior_mean(spec: ModelSpec, var: VarianceEstimates) -> np.ndarray:
    """E[X beta | Sigma, tau, Y] on the full data"""
    precision, b = training_precision(spec, var)
    return spec.X @ Cholesky(precision, "V^-1").solve(b)


def rank_one_downdate(V: np.ndarray, x: np.ndarray, weight: float) -> np.ndarray:
    """(V^-1 - weight * x x')^-1 by Sherman-Morrison"""
    if weight == 0 or not np.any(x):
        return V.copy()
    Vx = V @ x
    denominator = 1 - weight * float(x @ Vx)
    if denominator <= DOWNDATE_TOLERANCE:
        raise SingularDowndate(denominator)
    return symmetrize(V + (weight / denominator) * np.outer(Vx, Vx))


def downdate_v(V: np.ndarray, x_j: np.ndarray, n_j: int, tau: float) -> np.ndarray:
    """V_-j from V after removing n_j identical rows x_j with variance tau^2"""
    return rank_one_downdate(V, x_j, n_j / tau**2)


def woodbury_downdate(V: np.ndarray, X_j: np.ndarray, P_j: np.ndarray) -> np.ndarray:
    """(V^-1 - X_j' P_j^-1 X_j)^-1 for an arbitrary block of rows"""
    X_j = np.atleast_2d(X_j)
    if X_j.shape[0] == 0:
        return V.copy()
    XV = X_j @ V
    capacitance = np.diag(P_j) - XV @ X_j.T
    try:
        solver = Cholesky(symmetrize(capacitance), "fold capacitance")
    except NotPositiveDefinite as error:
        raise SingularDowndate(float(np.linalg.eigvalsh(capacitance).min())) from error
    return symmetrize(V + XV.T @ solver.solve(XV))


def identical_rows(X_f: np.ndarray, p_f: np.ndarray) -> bool:
    return bool(np.all(X_f == X_f[0]) and np.all(p_f == p_f[0]))


def fold_statistics(
    spec: ModelSpec,
    var: VarianceEstimates,
    fold: np.ndarray,
    posterior: ConditionalPosterior | None = None,
) -> FoldStatistics:
    """nu_j, ybar_j, ytilde_j and ebar_j for a fold of identical rows"""
    fold = np.asarray(fold, dtype=int)
    if fold.size == 0:
        raise DimensionMismatch("Fold statistics need at least one row")
    p = spec.observation_variance(var.tau)[fold]
    X_f = spec.X[fold]
    if not identical_rows(X_f, p):
        raise HeterogeneousFoldRows()
    if posterior is None:
        posterior = conditional_posterior(spec, var)
    x = X_f[0]
    ybar = float(np.mean(spec.working_response[fold]))
    ytilde = float(x @ posterior.beta)
    return FoldStatistics(
        nu=float(x @ posterior.V @ x),
        ybar=ybar,
        ytilde=ytilde,
        ebar=ybar - ytilde,
        weight=float(np.sum(1 / p)),
    )


def log_marginal_likelihood(spec: ModelSpec, var: VarianceEstimates) -> float:
    """
    log p(Y | Sigma, tau) with beta integrated out.

    With an infinite C the fixed-effect block enters through a flat prior and
    the log det C term is dropped, which gives the restricted likelihood up to
    a constant.
    """
    p = spec.observation_variance(var.tau)
    y = spec.working_response
    precision, b = training_precision(spec, var)
    solver = Cholesky(precision, "V^-1")
    logdet_prior = Cholesky(var.sigma, "Sigma").logdet()
    if spec.C is not None:
        logdet_prior += Cholesky(spec.C, "C").logdet()
    return float(
        -0.5 * spec.N * np.log(2 * np.pi)
        - 0.5 * np.sum(np.log(p))
        - 0.5 * logdet_prior
        - 0.5 * solver.logdet()
        - 0.5 * np.sum(y**2 / p)
        + 0.5 * b @ solver.solve(b)
    )
