import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from axe_cv.main.covariance import CovarianceStructure
from axe_cv.main.model import ModelSpec

settings.register_profile(
    "ci",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    print_blob=True,
)
settings.load_profile("ci")


def one_way_model(
    J: int = 6,
    n: int | list[int] = 4,
    sigma2: float = 1.0,
    tau2: float = 1.0,
    beta0: float = 0.0,
    seed: int = 0,
    C: np.ndarray | None = None,
) -> tuple[ModelSpec, np.ndarray]:
    """Random-intercept model y = beta0 + theta_g + e with one-hot cluster columns"""
    rng = np.random.default_rng(seed)
    sizes = np.full(J, n) if isinstance(n, int) else np.asarray(n)
    labels = np.repeat(np.arange(J), sizes)
    theta = rng.normal(0.0, np.sqrt(sigma2), size=J)
    y = beta0 + theta[labels] + rng.normal(0.0, np.sqrt(tau2), size=labels.size)
    spec = ModelSpec(
        X1=np.ones((labels.size, 1)),
        X2=(labels[:, None] == np.arange(J)[None, :]).astype(float),
        response=y,
        C=C,
        cov=CovarianceStructure(sigma2=sigma2),
    )
    return spec, labels


@pytest.fixture
def one_way():
    return one_way_model


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


def random_spd(rng: np.random.Generator, size: int, ridge: float = 0.5) -> np.ndarray:
    a = rng.standard_normal((size, size))
    return a @ a.T + ridge * np.eye(size)


@pytest.fixture
def spd():
    return random_spd
