"""
Seed-deterministic synthetic datasets shaped like the standard benchmark designs.

Every generator draws from a single `numpy.random.Generator` seeded with the
config seed, so the same config always yields the same columns.
"""

import logging
from collections import Counter
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np

from axe_cv.main.cholesky import Cholesky
from axe_cv.main.covariance import validate_adjacency
from axe_cv.main.ingest import DatasetFile
from axe_cv.main.types.mistakes import SyntheticConfigError
from axe_cv.main.types.role import Role
from axe_cv.main.types.synthetic_design import SyntheticDesign

logger = logging.getLogger(__name__)

SUBSET_COLUMN = "subset"
SUBSET_TOLERANCE = 0.1


@dataclass(frozen=True)
class SyntheticConfig:
    """
    Parameters of a synthetic dataset.

    `beta` holds the intercept followed by the slopes of standard normal
    covariates (one_way) or the log-rate intercept (car_lattice). For
    eight_schools_scaled its first entry is the grand mean.<br/>
    For cluster_subset, J counts the test cluster, `n_per_cluster` is either
    the size of every pool cluster or the sizes of the pool with the test
    cluster first.
    """

    design: SyntheticDesign = SyntheticDesign.ONE_WAY
    J: int = 8
    n_per_cluster: int | tuple[int, ...] = 5
    alpha_scale: float = 1.0
    rho_test: float = 0.3
    sigma2: float = 1.0
    tau2: float = 1.0
    beta: tuple[float, ...] = (0.0,)
    seed: int = 0
    iterations: int = 60
    pool_clusters: int = 40
    car_alpha: float = 0.9
    t_range: tuple[float, float] = (9.0, 18.0)
    exposure_range: tuple[float, float] = (5.0, 50.0)

    def __post_init__(self):
        object.__setattr__(self, "design", SyntheticDesign(self.design))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if not isinstance(self.n_per_cluster, int):
            object.__setattr__(
                self, "n_per_cluster", tuple(int(n) for n in self.n_per_cluster)
            )
        if self.J < 2:
            raise SyntheticConfigError(f"J must be at least 2, got {self.J}")
        if self.sigma2 < 0 or not np.isfinite(self.sigma2):
            raise SyntheticConfigError(f"sigma2 must be non-negative, got {self.sigma2}")
        if not self.tau2 > 0:
            raise SyntheticConfigError(f"tau2 must be positive, got {self.tau2}")
        if not self.alpha_scale > 0:
            raise SyntheticConfigError(f"alpha_scale must be positive, got {self.alpha_scale}")
        if not self.beta:
            raise SyntheticConfigError("beta needs at least an intercept")
        if min(self.sizes) < 1:
            raise SyntheticConfigError(f"Cluster sizes must be positive, got {self.sizes}")
        if not 0 < self.rho_test < 1:
            raise SyntheticConfigError(f"rho_test must lie in (0, 1), got {self.rho_test}")
        if self.iterations < 1:
            raise SyntheticConfigError(f"iterations must be positive, got {self.iterations}")
        low, high = self.t_range
        if not 0 < low <= high:
            raise SyntheticConfigError(f"Invalid t_j range {self.t_range}")
        low, high = self.exposure_range
        if not 0 < low <= high:
            raise SyntheticConfigError(f"Invalid exposure range {self.exposure_range}")

    @property
    def sizes(self) -> tuple[int, ...]:
        if isinstance(self.n_per_cluster, int):
            return (self.n_per_cluster,)
        return self.n_per_cluster

    def cluster_sizes(self, count: int) -> np.ndarray:
        """Sizes of `count` clusters, broadcasting a single size"""
        if isinstance(self.n_per_cluster, int):
            return np.full(count, self.n_per_cluster)
        if len(self.n_per_cluster) != count:
            raise SyntheticConfigError(
                f"Got {len(self.n_per_cluster)} cluster sizes for {count} clusters"
            )
        return np.array(self.n_per_cluster)


def generate_synthetic(cfg: SyntheticConfig) -> DatasetFile:
    rng = np.random.default_rng(cfg.seed)
    match cfg.design:
        case SyntheticDesign.EIGHT_SCHOOLS_SCALED:
            dataset = _eight_schools(cfg, rng)
        case SyntheticDesign.ONE_WAY:
            dataset = _one_way(cfg, rng)
        case SyntheticDesign.CLUSTER_SUBSET:
            dataset = _cluster_subset(cfg, rng)
        case SyntheticDesign.CAR_LATTICE:
            dataset = _car_lattice(cfg, rng)
        case _:
            raise SyntheticConfigError(f"Unknown design: {cfg.design}")
    logger.info("Generated %s dataset with %d rows (seed %d)", cfg.design, dataset.n, cfg.seed)
    return dataset


# --- Designs


def _eight_schools(cfg: SyntheticConfig, rng: np.random.Generator) -> DatasetFile:
    """
    One observed mean per school with known standard error t_j.

    Response and school effects are scaled by alpha while t_j stays fixed, so
    alpha moves the data from strong to weak pooling.
    """
    t = rng.uniform(*cfg.t_range, size=cfg.J)
    theta = rng.normal(0.0, np.sqrt(cfg.sigma2), size=cfg.J)
    y = cfg.beta[0] + theta + t * rng.standard_normal(cfg.J)
    return DatasetFile(
        columns={
            "y": cfg.alpha_scale * y,
            "school": np.arange(1, cfg.J + 1, dtype=float),
            "t2": t**2,
        },
        roles={"y": Role.RESPONSE, "school": Role.CLUSTER, "t2": Role.KNOWN_VARIANCE},
    )


def _one_way(cfg: SyntheticConfig, rng: np.random.Generator) -> DatasetFile:
    sizes = cfg.cluster_sizes(cfg.J)
    labels = np.repeat(np.arange(1, cfg.J + 1), sizes)
    theta = rng.normal(0.0, np.sqrt(cfg.sigma2), size=cfg.J)
    slopes = np.array(cfg.beta[1:])
    covariates = rng.standard_normal((labels.size, slopes.size))
    noise = rng.normal(0.0, np.sqrt(cfg.tau2), size=labels.size)
    y = cfg.beta[0] + covariates @ slopes + theta[labels - 1] + noise

    columns = {"y": y}
    roles = {"y": Role.RESPONSE}
    for k in range(slopes.size):
        columns[f"x{k + 1}"] = covariates[:, k]
        roles[f"x{k + 1}"] = Role.FIXED
    columns["g"] = labels.astype(float)
    roles["g"] = Role.CLUSTER
    return DatasetFile(columns=columns, roles=roles)


def ring_adjacency(J: int) -> np.ndarray:
    """Adjacency of J regions on a ring, each touching its two neighbours"""
    W = np.zeros((J, J))
    for j in range(J):
        W[j, (j + 1) % J] = W[(j + 1) % J, j] = 1
    return validate_adjacency(W)


def _car_lattice(cfg: SyntheticConfig, rng: np.random.Generator) -> DatasetFile:
    if not 0 <= cfg.car_alpha < 1:
        raise SyntheticConfigError(f"car_alpha must lie in [0, 1), got {cfg.car_alpha}")
    if not cfg.sigma2 > 0:
        raise SyntheticConfigError("car_lattice needs a positive sigma2")
    W = ring_adjacency(cfg.J)
    precision = (np.diag(W.sum(axis=1)) - cfg.car_alpha * W) / cfg.sigma2
    phi = Cholesky(precision, "CAR precision").sample(rng)

    sizes = cfg.cluster_sizes(cfg.J)
    labels = np.repeat(np.arange(1, cfg.J + 1), sizes)
    exposure = rng.uniform(*cfg.exposure_range, size=labels.size)
    rate = exposure * np.exp(cfg.beta[0] + phi[labels - 1])
    counts = rng.poisson(rate)
    return DatasetFile(
        columns={
            "y": counts.astype(float),
            "g": labels.astype(float),
            "offset": exposure,
        },
        roles={"y": Role.RESPONSE, "g": Role.CLUSTER, "offset": Role.OFFSET},
    )


# --- Cluster subsets


def subset_target(cfg: SyntheticConfig) -> float:
    """Target training size phi = n_test (1 - rho)"""
    return cfg.sizes[0] * (1 - cfg.rho_test)


def _pool_sizes(cfg: SyntheticConfig, rng: np.random.Generator) -> np.ndarray:
    if isinstance(cfg.n_per_cluster, int):
        pool = rng.integers(1, cfg.n_per_cluster + 1, size=cfg.pool_clusters)
        return np.concatenate([[cfg.n_per_cluster], pool])
    return np.array(cfg.n_per_cluster)


def size_combinations(
    available: Counter[int], count: int, low: float, high: float
) -> Iterator[tuple[int, ...]]:
    """
    Non-decreasing tuples of `count` cluster sizes with a total in [low, high],
    using each size at most as often as it is available.
    """
    sizes = sorted(available)

    def extend(start: int, chosen: list[int], total: int) -> Iterator[tuple[int, ...]]:
        remaining = count - len(chosen)
        if remaining == 0:
            if low <= total <= high:
                yield tuple(chosen)
            return
        for i in range(start, len(sizes)):
            size = sizes[i]
            if total + remaining * size > high:
                break
            if chosen.count(size) >= available[size]:
                continue
            chosen.append(size)
            yield from extend(i, chosen, total + size)
            chosen.pop()

    yield from extend(0, [], 0)


def _cluster_subset(cfg: SyntheticConfig, rng: np.random.Generator) -> DatasetFile:
    """
    Fixed test cluster plus resampled training clusters.

    The pool (test cluster first) is generated once. Each iteration picks a
    distinct combination of J - 1 training cluster sizes whose total lies
    within 10% of the target, sampled with weight 1 / (1 + |total - target|),
    then draws matching pool clusters at random. Iterations are stacked with
    a `subset` column numbering them from 1.
    """
    sizes = _pool_sizes(cfg, rng)
    if sizes.size < cfg.J:
        raise SyntheticConfigError(f"Pool of {sizes.size} clusters cannot supply J={cfg.J}")
    theta = rng.normal(0.0, np.sqrt(cfg.sigma2), size=sizes.size)
    pool_y = [
        cfg.beta[0] + theta[c] + rng.normal(0.0, np.sqrt(cfg.tau2), size=n)
        for c, n in enumerate(sizes)
    ]

    target = subset_target(cfg)
    low, high = (1 - SUBSET_TOLERANCE) * target, (1 + SUBSET_TOLERANCE) * target
    combinations = list(
        size_combinations(Counter(sizes[1:].tolist()), cfg.J - 1, low, high)
    )
    if not combinations:
        raise SyntheticConfigError(
            f"No {cfg.J - 1} pool clusters have a total size within "
            f"[{low:.4g}, {high:.4g}]"
        )
    weights = np.array([1 / (1 + abs(sum(c) - target)) for c in combinations])
    count = min(cfg.iterations, len(combinations))
    if count < cfg.iterations:
        logger.warning(
            "Only %d distinct size combinations are available, wanted %d",
            count,
            cfg.iterations,
        )
    chosen = rng.choice(len(combinations), size=count, replace=False, p=weights / weights.sum())

    columns: dict[str, list[np.ndarray]] = {"y": [], "g": [], SUBSET_COLUMN: []}
    for iteration, index in enumerate(chosen, start=1):
        clusters = [0]
        for size, needed in sorted(Counter(combinations[index]).items()):
            matching = np.flatnonzero(sizes[1:] == size) + 1
            clusters.extend(rng.choice(matching, size=needed, replace=False).tolist())
        for c in clusters:
            columns["y"].append(pool_y[c])
            columns["g"].append(np.full(sizes[c], c + 1.0))
            columns[SUBSET_COLUMN].append(np.full(sizes[c], float(iteration)))
    return DatasetFile(
        columns={name: np.concatenate(parts) for name, parts in columns.items()},
        roles={"y": Role.RESPONSE, "g": Role.CLUSTER},
    )


def split_subsets(dataset: DatasetFile) -> list[DatasetFile]:
    """Separate the stacked iterations of a cluster_subset dataset"""
    if SUBSET_COLUMN not in dataset.columns:
        return [dataset]
    subset = np.asarray(dataset.columns[SUBSET_COLUMN])
    parts = []
    for value in np.unique(subset):
        rows = subset == value
        parts.append(
            DatasetFile(
                columns={
                    name: np.asarray(values)[rows]
                    for name, values in dataset.columns.items()
                    if name != SUBSET_COLUMN
                },
                roles={
                    name: role
                    for name, role in dataset.roles.items()
                    if name != SUBSET_COLUMN
                },
            )
        )
    return parts
