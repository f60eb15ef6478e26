"""
Generators for the random-effect covariance Sigma.

The spatio-temporal builder reads the Leroux expression
``alpha * (diag(W1) - W) + (1 - alpha) * I`` as the *precision* Q(alpha, W),
even where it is printed as an inverse, and uses the symmetric quadratic form
``(I - rho H)' blockdiag(Q) (I - rho H)`` for the joint precision.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import block_diag

from axe_cv.main.cholesky import Cholesky, symmetrize
from axe_cv.main.types.covariance_kind import CovarianceKind
from axe_cv.main.types.mistakes import DimensionMismatch, InvalidStructure


def validate_adjacency(W: np.ndarray) -> np.ndarray:
    """Check that W is a symmetric, binary, hollow adjacency matrix without islands"""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1] or W.shape[0] == 0:
        raise InvalidStructure(f"Adjacency must be a non-empty square matrix, got {W.shape}")
    if not np.all((W == 0) | (W == 1)):
        raise InvalidStructure("Adjacency must be binary")
    if not np.array_equal(W, W.T):
        raise InvalidStructure("Adjacency must be symmetric")
    if np.any(np.diag(W) != 0):
        raise InvalidStructure("Adjacency must have a zero diagonal")
    islands = np.flatnonzero(W.sum(axis=1) == 0)
    if islands.size:
        raise InvalidStructure(
            f"Adjacency has isolated nodes (0-based): {islands.tolist()}"
        )
    return W


def diagonal_sigma(sigma2: float, P2: int) -> np.ndarray:
    if not sigma2 > 0:
        raise InvalidStructure(f"sigma2 must be positive, got {sigma2}")
    return sigma2 * np.eye(P2)


def car_sigma(W: np.ndarray, alpha: float, sigma2: float) -> np.ndarray:
    """Proper CAR covariance sigma2 * (diag(W1) - alpha W)^-1"""
    W = validate_adjacency(W)
    _check_alpha(alpha)
    _check_sigma2(sigma2)
    precision = np.diag(W.sum(axis=1)) - alpha * W
    return sigma2 * Cholesky(precision, "CAR precision").inverse()


def leroux_precision(W: np.ndarray, alpha: float) -> np.ndarray:
    """Q(alpha, W) = alpha (diag(W1) - W) + (1 - alpha) I"""
    W = validate_adjacency(W)
    _check_alpha(alpha)
    return alpha * (np.diag(W.sum(axis=1)) - W) + (1 - alpha) * np.eye(W.shape[0])


def temporal_shift(J: int, T: int) -> np.ndarray:
    """JT x JT matrix with identity blocks on the first block subdiagonal"""
    return np.kron(np.eye(T, k=-1), np.eye(J))


def st_car_sigma(
    W: np.ndarray, alpha: float, rho: float, sigma2: float, T: int
) -> np.ndarray:
    """Joint covariance of (s_1', ..., s_T')' under the AR(1)-in-time Leroux CAR"""
    _check_sigma2(sigma2)
    if not -1 < rho < 1:
        raise InvalidStructure(f"rho must lie in (-1, 1), got {rho}")
    if T < 1:
        raise InvalidStructure(f"T must be at least 1, got {T}")
    Q = leroux_precision(W, alpha)
    J = Q.shape[0]
    lag = np.eye(J * T) - rho * temporal_shift(J, T)
    precision = symmetrize(lag.T @ block_diag(*[Q] * T) @ lag)
    return sigma2 * Cholesky(precision, "spatio-temporal precision").inverse()


def _check_alpha(alpha: float) -> None:
    if not 0 <= alpha < 1:
        raise InvalidStructure(f"alpha must lie in [0, 1), got {alpha}")


def _check_sigma2(sigma2: float) -> None:
    if not sigma2 > 0:
        raise InvalidStructure(f"sigma2 must be positive, got {sigma2}")


@dataclass(frozen=True, eq=False)
class CovarianceStructure:
    """Generator of the random-effect covariance Sigma (P2 x P2)"""

    kind: CovarianceKind = CovarianceKind.DIAGONAL
    sigma2: float = 1.0
    alpha: float = 0.0
    rho: float = 0.0
    W: np.ndarray | None = field(default=None, repr=False)
    T: int = 1

    def __post_init__(self):
        _check_sigma2(self.sigma2)
        match self.kind:
            case CovarianceKind.DIAGONAL:
                pass
            case CovarianceKind.CAR | CovarianceKind.ST_CAR:
                if self.W is None:
                    raise InvalidStructure(f"{self.kind} structure needs an adjacency W")
                W = validate_adjacency(np.array(self.W, dtype=float))
                W.setflags(write=False)
                object.__setattr__(self, "W", W)
                _check_alpha(self.alpha)
                if self.kind == CovarianceKind.ST_CAR:
                    if not -1 < self.rho < 1:
                        raise InvalidStructure(f"rho must lie in (-1, 1), got {self.rho}")
                    if self.T < 1:
                        raise InvalidStructure(f"T must be at least 1, got {self.T}")
            case _:
                raise InvalidStructure(f"Unknown covariance kind: {self.kind}")

    @property
    def dimension(self) -> int | None:
        """Size of the generated Sigma, None when it follows the design"""
        match self.kind:
            case CovarianceKind.DIAGONAL:
                return None
            case CovarianceKind.CAR:
                return self.W.shape[0]
            case CovarianceKind.ST_CAR:
                return self.W.shape[0] * self.T

    def matrix(self, P2: int) -> np.ndarray:
        """Generate Sigma for a random-effect design with P2 columns"""
        expected = self.dimension
        if expected is not None and expected != P2:
            raise DimensionMismatch(
                f"{self.kind} structure generates a {expected}x{expected} Sigma, "
                f"but X2 has {P2} columns"
            )
        match self.kind:
            case CovarianceKind.DIAGONAL:
                return diagonal_sigma(self.sigma2, P2)
            case CovarianceKind.CAR:
                return car_sigma(self.W, self.alpha, self.sigma2)
            case CovarianceKind.ST_CAR:
                return st_car_sigma(self.W, self.alpha, self.rho, self.sigma2, self.T)

    def template(self, P2: int) -> np.ndarray:
        """Sigma at unit scale, so that Sigma = sigma2 * template"""
        return self.with_sigma2(1.0).matrix(P2)

    def with_sigma2(self, sigma2: float) -> "CovarianceStructure":
        return replace(self, sigma2=sigma2)
