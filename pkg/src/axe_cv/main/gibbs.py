"""
Conjugate Gibbs sampler for the gaussian hierarchical regression, and manual
cross-validation built on refitting it per fold.

Full conditionals:

- beta | Sigma, tau ~ N(V X' P^-1 Y, V)
- Sigma | beta ~ IW(nu + 1, Psi + b2 b2') for an unstructured Sigma, or
  sigma^2 | beta ~ IG((nu + P2) / 2, (psi + b2' T^-1 b2) / 2) when
  Sigma = sigma^2 T with a fixed template T
- tau^2 | beta ~ IG(a + N / 2, b + |Y - X beta|^2 / 2)
"""

import logging
import time
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import invwishart

from axe_cv.main.cholesky import Cholesky, check_spd, symmetrize
from axe_cv.main.cv_result import CvResult, FoldRecord
from axe_cv.main.folds import FoldPlan, map_folds
from axe_cv.main.model import ModelSpec
from axe_cv.main.types.covariance_kind import CovarianceKind
from axe_cv.main.types.cv_method import CvMethod
from axe_cv.main.types.family import Family
from axe_cv.main.types.mistakes import (
    BadPriors,
    DimensionMismatch,
    EmptyTrainingSet,
    MissingPseudoResponse,
    NotPositiveDefinite,
)
from axe_cv.main.types.sigma_prior import SigmaPrior

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GibbsConfig:
    """
    Sampler settings.

    `nu` and `Psi` default per prior: nu = P2 + 1 and Psi = I for the
    inverse-Wishart, nu = 1 and psi = 1 for the pooled scale.<br/>
    `fixed_variances` skips the Sigma and tau updates, holding them at the
    model's Sigma and `tau2_init`.
    """

    draws: int = 4000
    burn_in: int = 1000
    nu: float | None = None
    Psi: np.ndarray | None = field(default=None, repr=False)
    a: float = 1.0
    b: float = 1.0
    seed: int = 0
    sigma_prior: SigmaPrior | None = None
    fixed_variances: bool = False
    tau2_init: float = 1.0

    def __post_init__(self):
        if self.draws < 1:
            raise BadPriors(f"The number of draws must be at least 1, got {self.draws}")
        if self.burn_in < 0:
            raise BadPriors(f"Burn-in must be non-negative, got {self.burn_in}")
        if not (self.a > 0 and self.b > 0):
            raise BadPriors(f"Inverse-gamma a and b must be positive, got {self.a}, {self.b}")
        if not self.tau2_init > 0:
            raise BadPriors(f"tau2_init must be positive, got {self.tau2_init}")
        if self.sigma_prior is not None:
            object.__setattr__(self, "sigma_prior", SigmaPrior(self.sigma_prior))

    def resolved_prior(self, kind: CovarianceKind) -> SigmaPrior:
        if self.sigma_prior is not None:
            return self.sigma_prior
        return SigmaPrior.POOLED if kind == CovarianceKind.DIAGONAL else SigmaPrior.INVERSE_WISHART

    def resolved_hyperparameters(self, prior: SigmaPrior, P2: int) -> tuple[float, np.ndarray]:
        """(nu, Psi) checked against the random-effect dimension"""
        Psi = np.eye(P2) if self.Psi is None else np.asarray(self.Psi, dtype=float)
        if Psi.shape != (P2, P2):
            raise BadPriors(f"Psi has shape {Psi.shape}, expected {P2}x{P2}")
        try:
            check_spd(Psi, "Psi")
        except NotPositiveDefinite as error:
            raise BadPriors(error.message) from error
        match prior:
            case SigmaPrior.INVERSE_WISHART:
                nu = P2 + 1.0 if self.nu is None else float(self.nu)
                if not nu > P2 - 1:
                    raise BadPriors(f"nu must exceed P2 - 1 = {P2 - 1}, got {nu}")
            case SigmaPrior.POOLED:
                nu = 1.0 if self.nu is None else float(self.nu)
                if not nu > 0:
                    raise BadPriors(f"nu must be positive, got {nu}")
        return nu, Psi


class SigmaDraws(Sequence[np.ndarray]):
    """
    Sequence of Sigma draws.

    Draws of a scaled template Sigma = s * T are stored as the scales only.
    """

    __dense: np.ndarray | None
    __scales: np.ndarray | None
    __template: np.ndarray | None

    def __init__(
        self,
        dense: np.ndarray | None = None,
        scales: np.ndarray | None = None,
        template: np.ndarray | None = None,
    ):
        if (dense is None) == (scales is None):
            raise ValueError("Give either dense draws or scales with a template")
        if scales is not None and template is None:
            raise ValueError("Scaled draws need a template")
        self.__dense = None if dense is None else np.asarray(dense, dtype=float)
        self.__scales = None if scales is None else np.asarray(scales, dtype=float)
        self.__template = None if template is None else np.asarray(template, dtype=float)

    @classmethod
    def scaled(cls, scales: np.ndarray, template: np.ndarray) -> "SigmaDraws":
        return cls(scales=scales, template=template)

    @property
    def scales(self) -> np.ndarray | None:
        return self.__scales

    @property
    def template(self) -> np.ndarray | None:
        return self.__template

    @property
    def dimension(self) -> int:
        source = self.__template if self.__dense is None else self.__dense[0]
        return source.shape[0]

    def __len__(self) -> int:
        return len(self.__scales) if self.__dense is None else self.__dense.shape[0]

    def __getitem__(self, s):
        if isinstance(s, slice):
            if self.__dense is None:
                return SigmaDraws.scaled(self.__scales[s], self.__template)
            return SigmaDraws(dense=self.__dense[s])
        if self.__dense is None:
            return self.__scales[s] * self.__template
        return self.__dense[s]

    def __iter__(self) -> Iterator[np.ndarray]:
        return (self[s] for s in range(len(self)))

    def mean(self) -> np.ndarray:
        if self.__dense is None:
            return float(np.mean(self.__scales)) * self.__template
        return symmetrize(self.__dense.mean(axis=0))

    def stack(self) -> np.ndarray:
        """All draws as an S x P2 x P2 array"""
        if self.__dense is None:
            return self.__scales[:, None, None] * self.__template[None, :, :]
        return self.__dense


@dataclass(frozen=True, eq=False)
class PosteriorDraws:
    beta: np.ndarray
    sigma: SigmaDraws
    tau2: np.ndarray
    burn_in: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_2d(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "tau2", np.asarray(self.tau2, dtype=float).ravel())
        if not isinstance(self.sigma, SigmaDraws):
            object.__setattr__(self, "sigma", SigmaDraws(dense=self.sigma))
        S = self.beta.shape[0]
        if S < 1:
            raise BadPriors("Posterior draws need at least one sample")
        if len(self.sigma) != S or self.tau2.shape[0] != S:
            raise DimensionMismatch(
                f"Draw counts disagree: beta {S}, sigma {len(self.sigma)}, "
                f"tau2 {self.tau2.shape[0]}"
            )

    @property
    def S(self) -> int:
        return self.beta.shape[0]

    @property
    def P(self) -> int:
        return self.beta.shape[1]

    @property
    def P2(self) -> int:
        return self.sigma.dimension

    def validate(self) -> None:
        """Check every Sigma draw is SPD and every tau2 draw positive"""
        for s, sigma in enumerate(self.sigma):
            try:
                check_spd(sigma, "Sigma draw")
            except NotPositiveDefinite as error:
                raise NotPositiveDefinite("Sigma draw", culprit_draw=s) from error
        bad = np.flatnonzero(~(self.tau2 > 0))
        if bad.size:
            raise NotPositiveDefinite("tau2 draw", culprit_draw=int(bad[0]))

    def fitted(self, X: np.ndarray) -> np.ndarray:
        """S x n matrix of X beta per draw"""
        return self.beta @ X.T


def _check_gaussian(spec: ModelSpec) -> None:
    if spec.family != Family.GAUSSIAN and spec.pseudo is None:
        raise MissingPseudoResponse()


def gibbs_run(spec: ModelSpec, cfg: GibbsConfig) -> PosteriorDraws:
    """
    Sample the posterior of (beta, Sigma, tau^2).

    Models with known observation variances (or a pseudo-response) keep them
    fixed and report tau^2 = 1.
    """
    _check_gaussian(spec)
    prior = cfg.resolved_prior(spec.cov.kind)
    nu, Psi = cfg.resolved_hyperparameters(prior, spec.P2)
    rng = np.random.default_rng(cfg.seed)
    started = time.perf_counter()

    X, P1, P2 = spec.X, spec.P1, spec.P2
    y = spec.working_response
    fixed_obs = spec.has_fixed_variances
    p = spec.observation_variance(1.0)
    XtPX = X.T @ (X / p[:, None])
    XtPy = X.T @ (y / p)
    fixed_precision = np.zeros((spec.P, spec.P))
    if spec.C is not None:
        fixed_precision[:P1, :P1] = Cholesky(spec.C, "C").inverse()

    template = spec.cov.template(P2)
    template_inverse = Cholesky(template, "Sigma template").inverse()
    psi = float(np.trace(Psi)) / P2 if P2 else 1.0

    # Chain state
    sigma2 = spec.cov.sigma2
    sigma = spec.sigma()
    sigma_inverse = template_inverse / sigma2
    tau2 = 1.0 if fixed_obs else cfg.tau2_init

    total = cfg.burn_in + cfg.draws
    beta_draws = np.empty((cfg.draws, spec.P))
    tau2_draws = np.empty(cfg.draws)
    scaled = prior == SigmaPrior.POOLED or cfg.fixed_variances
    scale_draws = np.empty(cfg.draws) if scaled else None
    dense_draws = None if scaled else np.empty((cfg.draws, P2, P2))

    for it in range(total):
        # beta | Sigma, tau
        precision = XtPX / tau2 + fixed_precision
        precision[P1:, P1:] += sigma_inverse
        try:
            solver = Cholesky(symmetrize(precision), "conditional V^-1")
        except NotPositiveDefinite as error:
            raise NotPositiveDefinite("conditional V^-1", culprit_draw=it) from error
        beta = solver.solve(XtPy / tau2) + solver.sample(rng)
        b2 = beta[P1:]

        if not cfg.fixed_variances:
            # Sigma | beta
            match prior:
                case SigmaPrior.POOLED:
                    rate = 0.5 * (psi + b2 @ template_inverse @ b2)
                    sigma2 = 1 / rng.gamma(0.5 * (nu + P2), 1 / rate)
                    sigma_inverse = template_inverse / sigma2
                case SigmaPrior.INVERSE_WISHART:
                    scale = symmetrize(Psi + np.outer(b2, b2))
                    sigma = np.atleast_2d(
                        invwishart.rvs(df=nu + 1, scale=scale, random_state=rng)
                    )
                    sigma_inverse = Cholesky(sigma, "Sigma draw").inverse()

            # tau^2 | beta
            if not fixed_obs:
                residual = y - X @ beta
                rate = cfg.b + 0.5 * float(residual @ residual)
                tau2 = 1 / rng.gamma(cfg.a + 0.5 * spec.N, 1 / rate)

        if it >= cfg.burn_in:
            s = it - cfg.burn_in
            beta_draws[s] = beta
            tau2_draws[s] = tau2
            if scaled:
                scale_draws[s] = sigma2
            else:
                dense_draws[s] = sigma

    sigma_draws = (
        SigmaDraws.scaled(scale_draws, template)
        if scaled
        else SigmaDraws(dense=dense_draws)
    )
    logger.debug(
        "Gibbs chain of %d draws (+%d burn-in) took %.3fs",
        cfg.draws,
        cfg.burn_in,
        time.perf_counter() - started,
    )
    return PosteriorDraws(
        beta=beta_draws,
        sigma=sigma_draws,
        tau2=tau2_draws,
        burn_in=cfg.burn_in,
        seed=cfg.seed,
    )


def unobserved_columns(X2_train: np.ndarray) -> np.ndarray:
    """Random-effect columns with no nonzero entry among the training rows"""
    return np.flatnonzero(~np.any(X2_train != 0, axis=0))


def conditional_effect_mean(
    b2: np.ndarray, sigma: np.ndarray, missing: np.ndarray
) -> np.ndarray:
    """E[b2_missing | b2_rest, Sigma], zero when the blocks are independent"""
    if missing.size == 0:
        return np.zeros(0)
    rest = np.setdiff1d(np.arange(b2.shape[0]), missing)
    if rest.size == 0:
        return np.zeros(missing.size)
    cross = sigma[np.ix_(missing, rest)]
    if not np.any(cross):
        return np.zeros(missing.size)
    return cross @ Cholesky(sigma[np.ix_(rest, rest)], "Sigma_-j,-j").solve(b2[rest])


def mcv_fold(
    spec: ModelSpec, cfg: GibbsConfig, fold: np.ndarray, fold_id: int = 0
) -> tuple[np.ndarray, PosteriorDraws]:
    """
    Refit the sampler without the fold and predict its link-scale means.

    Coefficients of random effects that only occur in the fold are replaced
    by their conditional mean given the others.
    """
    fold = np.asarray(fold, dtype=int)
    mask = np.ones(spec.N, dtype=bool)
    mask[fold] = False
    training = np.flatnonzero(mask)
    if training.size == 0:
        raise EmptyTrainingSet()
    draws = gibbs_run(spec.take(training), replace(cfg, seed=cfg.seed + fold_id))
    if fold.size == 0:
        return np.zeros(0), draws

    missing = unobserved_columns(spec.X2[training])
    beta = draws.beta
    if missing.size:
        P1 = spec.P1
        beta = beta.copy()
        for s in range(draws.S):
            beta[s, P1 + missing] = conditional_effect_mean(
                beta[s, P1:], draws.sigma[s], missing
            )
    predicted = (beta @ spec.X[fold].T).mean(axis=0)
    return predicted, draws


def mcv_run(
    spec: ModelSpec, cfg: GibbsConfig, plan: FoldPlan, threads: int | None = 1
) -> CvResult:
    """Manual cross-validation: one independent chain per training fold"""
    _check_gaussian(spec)
    started = time.perf_counter()

    def run_fold(fold_id: int, fold: np.ndarray) -> FoldRecord:
        predicted, _ = mcv_fold(spec, cfg, fold, fold_id)
        return FoldRecord(
            fold_id=fold_id,
            indices=fold,
            predicted=spec.to_response_scale(predicted, fold),
        )

    records = map_folds(run_fold, plan, threads)
    return CvResult(
        method=CvMethod.MCV,
        per_fold=tuple(records),
        meta={
            "seed": str(cfg.seed),
            "draws": str(cfg.draws),
            "burn_in": str(cfg.burn_in),
            "seconds": f"{time.perf_counter() - started:.6f}",
        },
    )


def mc_standard_error(values: np.ndarray) -> np.ndarray:
    """Naive Monte Carlo standard error of the mean of each column of an S x n array"""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    S = values.shape[0]
    if S < 2:
        return np.zeros(values.shape[1])
    return values.std(axis=0, ddof=1) / np.sqrt(S)
