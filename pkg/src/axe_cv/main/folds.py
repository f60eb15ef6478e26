import logging
import os
from collections import defaultdict
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TypeVar

import numpy as np

from axe_cv.main.types.fold_scheme import FoldScheme
from axe_cv.main.types.mistakes import (
    BadK,
    DimensionMismatch,
    EmptyFold,
    EmptyTrainingSet,
    MissingLabels,
    Mistake,
    RoleError,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Partition of the observation indices {0..N-1} into cross-validation folds"""

    folds: tuple[np.ndarray, ...]
    scheme: FoldScheme
    n: int
    cluster_labels: np.ndarray | None = None

    def __post_init__(self):
        folds = []
        for fold in self.folds:
            fold = np.array(fold, dtype=int, ndmin=1)
            fold.setflags(write=False)
            folds.append(fold)
        object.__setattr__(self, "folds", tuple(folds))
        if self.cluster_labels is not None:
            labels = np.array(self.cluster_labels, dtype=int, ndmin=1)
            labels.setflags(write=False)
            object.__setattr__(self, "cluster_labels", labels)

        # Disjoint and covering
        seen = np.zeros(self.n, dtype=int)
        for fold in self.folds:
            if fold.size and (fold.min() < 0 or fold.max() >= self.n):
                raise DimensionMismatch(f"Fold indices must lie in [0, {self.n})")
            np.add.at(seen, fold, 1)
        if np.any(seen > 1):
            raise DimensionMismatch("Folds must be pairwise disjoint")

    @property
    def J(self) -> int:
        return len(self.folds)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([fold.size for fold in self.folds], dtype=int)

    @property
    def covers(self) -> bool:
        return int(self.sizes.sum()) == self.n

    def training(self, fold_id: int) -> np.ndarray:
        """Indices of the observations kept when the fold is held out"""
        mask = np.ones(self.n, dtype=bool)
        mask[self.folds[fold_id]] = False
        return np.flatnonzero(mask)

    def __iter__(self):
        return iter(self.folds)

    def __len__(self) -> int:
        return self.J


def lco_folds(labels: np.ndarray) -> tuple[np.ndarray, ...]:
    """One fold per unique label, ordered by label value"""
    buckets: defaultdict[int, list[int]] = defaultdict(list)
    for i, label in enumerate(labels.tolist()):
        buckets[label].append(i)
    return tuple(np.array(buckets[label], dtype=int) for label in sorted(buckets))


def build_fold_plan(
    scheme: FoldScheme,
    n: int | None = None,
    labels: Sequence[int] | np.ndarray | None = None,
    k: int | None = None,
    seed: int | None = None,
) -> FoldPlan:
    """
    Build a fold plan.

    `n` defaults to the number of labels when they are given.<br/>
    K-fold plans shuffle with `seed` and cut into k near-equal folds; no
    stratification by cluster is attempted.
    """
    scheme = FoldScheme(scheme)
    if labels is not None:
        labels = np.asarray(labels)
        if labels.ndim != 1:
            raise DimensionMismatch("Cluster labels must be a vector")
        if labels.size and not np.all(labels == np.round(labels)):
            raise RoleError("Cluster labels must be integers")
        labels = labels.astype(int)
        if n is None:
            n = labels.size
        elif labels.size != n:
            raise DimensionMismatch(f"Got {labels.size} cluster labels for N={n}")
    if n is None:
        if scheme == FoldScheme.LCO:
            raise MissingLabels()
        raise DimensionMismatch("The number of observations is required")

    match scheme:
        case FoldScheme.LOO:
            folds = tuple(np.array([i]) for i in range(n))
        case FoldScheme.LCO:
            if labels is None:
                raise MissingLabels()
            folds = lco_folds(labels)
        case FoldScheme.KFOLD:
            if k is None or k < 2 or k > n:
                raise BadK(k, n)
            order = np.random.default_rng(seed).permutation(n)
            folds = tuple(np.sort(part) for part in np.array_split(order, k))
        case _:
            raise ValueError(f"Unknown fold scheme: {scheme}")

    logger.debug("Built %s plan with %d folds over %d observations", scheme, len(folds), n)
    return FoldPlan(folds=folds, scheme=scheme, n=n, cluster_labels=labels)


def check_fold(plan: FoldPlan, fold_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Test and training indices of a fold, rejecting degenerate removals"""
    fold = plan.folds[fold_id]
    if fold.size == 0:
        raise EmptyFold()
    training = plan.training(fold_id)
    if training.size == 0:
        raise EmptyTrainingSet()
    return fold, training


def default_threads() -> int:
    return os.cpu_count() or 1


def map_folds(
    fn: Callable[[int, np.ndarray], T],
    plan: FoldPlan,
    threads: int | None = 1,
) -> list[T]:
    """
    Apply `fn(fold_id, fold)` to every fold, returning results in fold order.

    Mistakes raised by `fn` are tagged with the culprit fold.
    """

    def run(fold_id: int) -> T:
        logger.debug("Processing fold %d/%d", fold_id + 1, plan.J)
        try:
            return fn(fold_id, plan.folds[fold_id])
        except Mistake as mistake:
            raise mistake.with_fold(fold_id)

    threads = default_threads() if threads is None else threads
    if threads <= 1 or plan.J <= 1:
        return [run(fold_id) for fold_id in range(plan.J)]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(run, range(plan.J)))
