from dataclasses import dataclass, field

import numpy as np

from axe_cv.main.types.cv_method import CvMethod
from axe_cv.main.types.mistakes import DimensionMismatch


@dataclass(frozen=True, eq=False)
class FoldRecord:
    fold_id: int
    indices: np.ndarray
    predicted: np.ndarray
    weights: np.ndarray | None = None
    khat: float | None = None

    def __post_init__(self):
        if self.indices.shape != self.predicted.shape:
            raise DimensionMismatch(
                f"Fold {self.fold_id} has {self.indices.size} rows "
                f"but {self.predicted.size} predictions"
            )
        if self.weights is not None and (
            np.any(self.weights < 0) or not np.all(np.isfinite(self.weights))
        ):
            raise DimensionMismatch(f"Fold {self.fold_id} has invalid weights")


@dataclass(frozen=True, eq=False)
class CvResult:
    """Cross-validated mean estimates of one method, one record per fold"""

    method: CvMethod
    per_fold: tuple[FoldRecord, ...]
    meta: dict[str, str] = field(default_factory=dict)

    def predictions(self, n: int) -> np.ndarray:
        """Per-observation predictions, NaN where no fold covers the row"""
        out = np.full(n, np.nan)
        for record in self.per_fold:
            out[record.indices] = record.predicted
        return out

    def record(self, fold_id: int) -> FoldRecord:
        return self.per_fold[fold_id]
