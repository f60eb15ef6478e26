import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular

from axe_cv.main.types.mistakes import DimensionMismatch, NotPositiveDefinite

SYMMETRY_TOLERANCE = 1e-12


def symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2


class Cholesky:
    """
    Inverse of a symmetric positive-definite matrix as its Cholesky factorization.

    All SPD solves in the package go through this class, so a loss of
    definiteness always surfaces as a `NotPositiveDefinite` mistake.
    """

    __factor: tuple[np.ndarray, bool]
    size: int

    def __init__(self, a: np.ndarray, what: str = "matrix"):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"{what} must be square, got shape {a.shape}")
        self.size = a.shape[0]
        if self.size == 0:
            self.__factor = (np.zeros((0, 0)), True)
            return
        if not np.all(np.isfinite(a)):
            raise NotPositiveDefinite(what)
        try:
            self.__factor = cho_factor(a, lower=True, check_finite=False)
        except LinAlgError as error:
            raise NotPositiveDefinite(what) from error
        if np.any(np.diag(self.__factor[0]) <= 0):
            raise NotPositiveDefinite(what)

    @property
    def lower(self) -> np.ndarray:
        """Lower triangular factor L with A = LL'"""
        return np.tril(self.__factor[0])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.size == 0:
            return np.zeros_like(rhs, dtype=float)
        return cho_solve(self.__factor, rhs, check_finite=False)

    def inverse(self) -> np.ndarray:
        return symmetrize(self.solve(np.eye(self.size)))

    def logdet(self) -> float:
        if self.size == 0:
            return 0.0
        return float(2 * np.sum(np.log(np.diag(self.__factor[0]))))

    def sample(self, rng: np.random.Generator, count: int | None = None) -> np.ndarray:
        """Draw zero-mean normals with covariance A^-1"""
        shape = (self.size,) if count is None else (self.size, count)
        z = rng.standard_normal(shape)
        if self.size == 0:
            return z.T if count is not None else z
        draws = solve_triangular(
            self.__factor[0], z, lower=True, trans="T", check_finite=False
        )
        return draws.T if count is not None else draws


def spd_inverse(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    return Cholesky(a, what).inverse()


def check_spd(a: np.ndarray, what: str = "matrix") -> None:
    """Raise unless the matrix is symmetric and passes Cholesky"""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{what} must be square, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    if not np.allclose(a, a.T, rtol=0, atol=SYMMETRY_TOLERANCE * scale):
        raise NotPositiveDefinite(f"{what} (not symmetric)")
    Cholesky(a, what)


def covariance_factor(cov: np.ndarray, what: str = "covariance") -> np.ndarray:
    """Lower factor L with cov = LL', for drawing normals with the given covariance"""
    if cov.shape[0] == 0:
        return np.zeros((0, 0))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as error:
        raise NotPositiveDefinite(what) from error
