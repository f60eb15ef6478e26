"""
Pareto smoothing of importance weights.

The largest weights are replaced by quantiles of a generalized Pareto
distribution fitted to their exceedances, which stabilizes self-normalized
estimates when the raw weights are heavy-tailed.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import genpareto

from axe_cv.main.types.mistakes import NonFiniteLogDensity, TailFitFailure

logger = logging.getLogger(__name__)

DEFAULT_TAIL_FRACTION = 0.2
MIN_TAIL_SIZE = 5


@dataclass(frozen=True, eq=False)
class ImportanceWeights:
    log_w: np.ndarray
    normalized: np.ndarray
    # NaN unless a tail was fitted
    khat: float
    smoothed: bool

    @property
    def ess(self) -> float:
        """Effective sample size 1 / sum(w^2) of the normalized weights"""
        return float(1 / np.sum(self.normalized**2))

    @classmethod
    def from_log_weights(
        cls, log_w: np.ndarray, khat: float = math.nan, smoothed: bool = False
    ) -> "ImportanceWeights":
        log_w = np.asarray(log_w, dtype=float)
        normalized = np.exp(log_w - logsumexp(log_w))
        return cls(log_w=log_w, normalized=normalized, khat=khat, smoothed=smoothed)


def gpdfit(x: np.ndarray) -> tuple[float, float]:
    """
    Empirical Bayes estimate of the generalized Pareto (k, sigma) of exceedances x.

    Profile posterior over a grid of m = 30 + sqrt(n) values of
    b = -k / sigma, quadrature weights from the profile likelihood, then a
    weakly informative prior pulling k towards 0.5 with weight 10.
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n <= 1:
        raise TailFitFailure("Need at least two exceedances to fit a tail")
    prior = 3
    m = 30 + int(np.sqrt(n))

    bs = 1 - np.sqrt(m / (np.arange(1, m + 1) - 0.5))
    quartile = x[int(n / 4 + 0.5) - 1]
    if not (quartile > 0 and x[-1] > 0):
        raise TailFitFailure("Exceedances are degenerate")
    bs = bs / (prior * quartile) + 1 / x[-1]

    ks = np.mean(np.log1p(-bs[:, None] * x), axis=1)
    profile = n * (np.log(-bs / ks) - ks - 1)
    weights = 1 / np.sum(np.exp(profile[None, :] - profile[:, None]), axis=1)
    weights = weights / weights.sum()

    b = float(np.sum(bs * weights))
    k = float(np.mean(np.log1p(-b * x)))
    sigma = -k / b
    k = (k * n + 10 * 0.5) / (n + 10)
    if not (np.isfinite(k) and np.isfinite(sigma) and sigma > 0):
        raise TailFitFailure(f"Tail fit did not converge (k={k}, sigma={sigma})")
    return k, sigma


def gpd_quantile(p: np.ndarray, k: float, sigma: float) -> np.ndarray:
    return genpareto.ppf(p, c=k, scale=sigma)


def psis_smooth(
    log_w: np.ndarray, tail_fraction: float = DEFAULT_TAIL_FRACTION
) -> ImportanceWeights:
    """
    Smooth the ceil(tail_fraction * S) largest weights.

    Tail weights become GPD quantiles at (r - 0.5) / M assigned by rank, capped
    at the largest raw weight. When the tail cannot be fitted the raw weights
    are returned normalized with smoothed=False and an undefined (NaN) khat.
    """
    log_w = np.asarray(log_w, dtype=float)
    bad = np.flatnonzero(~np.isfinite(log_w))
    if bad.size:
        raise NonFiniteLogDensity(int(bad[0]))
    try:
        return _smooth(log_w, tail_fraction)
    except TailFitFailure as failure:
        logger.warning("Pareto smoothing skipped: %s", failure.message)
        return ImportanceWeights.from_log_weights(log_w)


def _smooth(log_w: np.ndarray, tail_fraction: float) -> ImportanceWeights:
    S = log_w.size
    M = math.ceil(tail_fraction * S)
    if M < MIN_TAIL_SIZE or M >= S:
        raise TailFitFailure(f"Tail of {M} weights out of {S} is too small to fit")

    top = float(log_w.max())
    order = np.argsort(log_w, kind="stable")
    tail = order[-M:]
    cutoff = math.exp(log_w[order[-M - 1]] - top)
    scaled_tail = np.exp(log_w[tail] - top)
    exceedances = scaled_tail - cutoff
    if np.ptp(scaled_tail) == 0 or not np.any(exceedances > 0):
        raise TailFitFailure("All tail weights are equal")

    k, sigma = gpdfit(exceedances)
    quantiles = cutoff + gpd_quantile((np.arange(1, M + 1) - 0.5) / M, k, sigma)
    smoothed = log_w.copy()
    smoothed[tail] = np.log(np.minimum(quantiles, 1.0)) + top
    return ImportanceWeights.from_log_weights(smoothed, khat=k, smoothed=True)
