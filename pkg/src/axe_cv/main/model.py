from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from axe_cv.main.cholesky import Cholesky, check_spd
from axe_cv.main.covariance import CovarianceStructure
from axe_cv.main.types.family import Family
from axe_cv.main.types.mistakes import (
    DimensionMismatch,
    MissingPseudoResponse,
    NoInterceptSpan,
    NotPositiveDefinite,
    RoleError,
)
from axe_cv.main.types.variance_source import VarianceSource

SPAN_TOLERANCE = 1e-8


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    a = np.array(a, dtype=float, ndmin=ndim)
    if a.ndim != ndim:
        raise DimensionMismatch(f"{name} must have {ndim} dimension(s), got {a.ndim}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PseudoResponse:
    """
    Normal approximation of a non-gaussian response on the link scale.

    `yg` is the transformed response g(Y) and `pvar` the per-observation
    variances that replace tau^2 I in the observation covariance.
    """

    yg: np.ndarray
    pvar: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "yg", _frozen(self.yg, 1, "yg"))
        object.__setattr__(self, "pvar", _frozen(self.pvar, 1, "pvar"))
        if self.yg.shape != self.pvar.shape:
            raise DimensionMismatch(
                f"yg has {self.yg.size} entries but pvar has {self.pvar.size}"
            )
        if not np.all(np.isfinite(self.yg)):
            raise DimensionMismatch("yg must be finite")
        if not np.all(self.pvar > 0) or not np.all(np.isfinite(self.pvar)):
            raise NotPositiveDefinite("pseudo-response variance")

    def take(self, rows: np.ndarray) -> "PseudoResponse":
        return PseudoResponse(self.yg[rows], self.pvar[rows])


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """
    Hierarchical regression Y ~ N(X1 b1 + X2 b2, P) with b1 ~ N(0, C), b2 ~ N(0, Sigma).

    `C = None` flags an infinite-variance fixed-effect prior (C^-1 = 0).<br/>
    P is tau^2 I unless known observation variances or a pseudo-response
    provide it per observation.
    """

    X1: np.ndarray
    X2: np.ndarray
    response: np.ndarray
    C: np.ndarray | None = None
    cov: CovarianceStructure = field(default_factory=CovarianceStructure)
    family: Family = Family.GAUSSIAN
    offset: np.ndarray | None = None
    known_variance: np.ndarray | None = None
    pseudo: PseudoResponse | None = None

    def __post_init__(self):
        object.__setattr__(self, "X1", _frozen(self.X1, 2, "X1"))
        object.__setattr__(self, "X2", _frozen(self.X2, 2, "X2"))
        object.__setattr__(self, "response", _frozen(self.response, 1, "response"))
        if self.C is not None:
            object.__setattr__(self, "C", _frozen(self.C, 2, "C"))
        if self.offset is not None:
            object.__setattr__(self, "offset", _frozen(self.offset, 1, "offset"))
        if self.known_variance is not None:
            object.__setattr__(
                self, "known_variance", _frozen(self.known_variance, 1, "known_variance")
            )
        object.__setattr__(self, "family", Family(self.family))

    # --- Shapes

    @property
    def N(self) -> int:
        return self.response.shape[0]

    @property
    def P1(self) -> int:
        return self.X1.shape[1]

    @property
    def P2(self) -> int:
        return self.X2.shape[1]

    @property
    def P(self) -> int:
        return self.P1 + self.P2

    @cached_property
    def X(self) -> np.ndarray:
        X = np.hstack([self.X1, self.X2])
        X.setflags(write=False)
        return X

    # --- Observation model

    @property
    def has_fixed_variances(self) -> bool:
        """Whether the observation variances are known rather than tau^2"""
        return self.pseudo is not None or self.known_variance is not None

    @property
    def working_response(self) -> np.ndarray:
        """Response fed to the gaussian machinery (link scale for GLMMs)"""
        if self.pseudo is not None:
            return self.pseudo.yg
        if self.family != Family.GAUSSIAN:
            raise MissingPseudoResponse()
        return self.response

    def observation_variance(self, tau: float = 1.0) -> np.ndarray:
        """Diagonal of the observation covariance P"""
        if self.pseudo is not None:
            return self.pseudo.pvar
        if self.known_variance is not None:
            return self.known_variance
        return np.full(self.N, tau**2)

    @property
    def exposure(self) -> np.ndarray:
        return np.ones(self.N) if self.offset is None else self.offset

    def to_response_scale(self, eta: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Map a link-scale estimate at `rows` to the response scale"""
        match self.family:
            case Family.GAUSSIAN:
                return eta
            case Family.POISSON_LOG:
                return self.exposure[rows] * np.exp(eta)
            case _:
                raise ValueError(f"Unknown family: {self.family}")

    # --- Priors

    def sigma(self) -> np.ndarray:
        return self.cov.matrix(self.P2)

    def prior_precision(self, sigma: np.ndarray) -> np.ndarray:
        """blockdiag(C^-1 or 0, Sigma^-1)"""
        precision = np.zeros((self.P, self.P))
        if self.C is not None:
            precision[: self.P1, : self.P1] = Cholesky(self.C, "C").inverse()
        precision[self.P1 :, self.P1 :] = Cholesky(sigma, "Sigma").inverse()
        return precision

    # --- Derived models

    def take(self, rows: np.ndarray) -> "ModelSpec":
        """Model restricted to the given observation rows"""
        rows = np.asarray(rows, dtype=int)
        return replace(
            self,
            X1=self.X1[rows],
            X2=self.X2[rows],
            response=self.response[rows],
            offset=None if self.offset is None else self.offset[rows],
            known_variance=(
                None if self.known_variance is None else self.known_variance[rows]
            ),
            pseudo=None if self.pseudo is None else self.pseudo.take(rows),
        )

    def with_pseudo_response(self, pseudo: PseudoResponse) -> "ModelSpec":
        if pseudo.yg.shape[0] != self.N:
            raise DimensionMismatch(
                f"Pseudo-response has {pseudo.yg.shape[0]} entries for N={self.N}"
            )
        return replace(self, pseudo=pseudo)

    def with_cov(self, cov: CovarianceStructure) -> "ModelSpec":
        return replace(self, cov=cov)


@dataclass(frozen=True, eq=False)
class VarianceEstimates:
    """Plug-in values of the variance parameters"""

    sigma: np.ndarray
    tau: float
    source: VarianceSource = VarianceSource.EXTERNAL

    def __post_init__(self):
        object.__setattr__(self, "sigma", _frozen(self.sigma, 2, "sigma"))
        object.__setattr__(self, "source", VarianceSource(self.source))
        check_spd(self.sigma, "Sigma plug-in")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise NotPositiveDefinite(f"tau plug-in ({self.tau})")

    @classmethod
    def from_spec(
        cls,
        spec: ModelSpec,
        tau: float = 1.0,
        source: VarianceSource = VarianceSource.EXTERNAL,
    ) -> "VarianceEstimates":
        """Plug-ins taken from the model's own covariance structure"""
        return cls(sigma=spec.sigma(), tau=tau, source=source)


def intercept_residual(X1: np.ndarray) -> float:
    """Normalized least-squares residual of the ones vector on the columns of X1"""
    n = X1.shape[0]
    ones = np.ones(n)
    if X1.shape[1] == 0:
        return 1.0
    coef, *_ = np.linalg.lstsq(X1, ones, rcond=None)
    return float(np.linalg.norm(ones - X1 @ coef) / np.sqrt(n))


def validate_model(spec: ModelSpec) -> None:
    """Raise the first mistake found in the model, return silently otherwise"""

    # Dimensions
    n = spec.N
    for name, rows in (("X1", spec.X1.shape[0]), ("X2", spec.X2.shape[0])):
        if rows != n:
            raise DimensionMismatch(f"{name} has {rows} rows but response has {n}")
    for name, vector in (
        ("offset", spec.offset),
        ("known_variance", spec.known_variance),
        ("pseudo-response", None if spec.pseudo is None else spec.pseudo.yg),
    ):
        if vector is not None and vector.shape[0] != n:
            raise DimensionMismatch(f"{name} has {vector.shape[0]} entries for N={n}")
    if spec.C is not None and spec.C.shape != (spec.P1, spec.P1):
        raise DimensionMismatch(f"C has shape {spec.C.shape}, expected {spec.P1}x{spec.P1}")
    for name, a in (("X1", spec.X1), ("X2", spec.X2), ("response", spec.response)):
        if not np.all(np.isfinite(a)):
            raise DimensionMismatch(f"{name} contains non-finite values")

    # Intercept span
    if n > 0:
        residual = intercept_residual(spec.X1)
        if residual >= SPAN_TOLERANCE:
            raise NoInterceptSpan(residual)

    # Priors
    if spec.C is not None:
        check_spd(spec.C, "C")
    check_spd(spec.sigma(), "Sigma")

    # Observation model
    if spec.offset is not None and not np.all(spec.offset > 0):
        raise RoleError("Offsets must be strictly positive")
    if spec.known_variance is not None and not np.all(spec.known_variance > 0):
        raise RoleError("Known observation variances must be strictly positive")
    if spec.family == Family.POISSON_LOG:
        y = spec.response
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise RoleError("Poisson-log responses must be non-negative counts")
