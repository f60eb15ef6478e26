import logging
from dataclasses import dataclass, field

import numpy as np

from axe_cv.main.cv_result import CvResult
from axe_cv.main.folds import FoldPlan
from axe_cv.main.model import ModelSpec
from axe_cv.main.types.cv_method import CvMethod
from axe_cv.main.types.lrr_variant import LrrVariant
from axe_cv.main.types.mistakes import DimensionMismatch, ZeroDenominator

logger = logging.getLogger(__name__)

UNSTABLE_SD = 1.0


@dataclass(frozen=True, eq=False)
class LrrReport:
    """
    Per-fold log ratios of approximate to ground-truth squared errors.

    Folds where a ground-truth prediction equals its observation hold NaN and
    are listed in `excluded`; mean and SD ignore them.
    """

    method: CvMethod
    per_fold: np.ndarray
    excluded: tuple[int, ...] = ()
    variant: LrrVariant = LrrVariant.DISPLAY

    @property
    def valid(self) -> np.ndarray:
        return self.per_fold[np.isfinite(self.per_fold)]

    @property
    def mean(self) -> float:
        valid = self.valid
        return float(valid.mean()) if valid.size else float("nan")

    @property
    def sd(self) -> float:
        return sample_sd(self.valid)

    @property
    def outliers(self) -> list[int]:
        """Folds with |LRR| > 1"""
        return [int(j) for j in np.flatnonzero(np.abs(self.per_fold) > 1)]


def sample_sd(values: np.ndarray) -> float:
    """Standard deviation with an n - 1 denominator, 0 for a single value"""
    if values.size == 0:
        return float("nan")
    if values.size == 1:
        return 0.0
    return float(np.std(values, ddof=1))


def fold_lrr(
    approx: np.ndarray,
    truth: np.ndarray,
    y: np.ndarray,
    variant: LrrVariant = LrrVariant.DISPLAY,
    rows: np.ndarray | None = None,
) -> float:
    """LRR of one fold, raising ZeroDenominator on an exact ground-truth fit"""
    approx_error = (approx - y) ** 2
    truth_error = (truth - y) ** 2
    zero = np.flatnonzero(truth_error == 0)
    if zero.size:
        culprit = zero[0] if rows is None else rows[zero[0]]
        raise ZeroDenominator(int(culprit))
    match variant:
        case LrrVariant.DISPLAY:
            return float(np.log(np.sum(approx_error / truth_error)))
        case LrrVariant.RMSE_RATIO:
            return float(np.log(np.sum(approx_error) / np.sum(truth_error)))
        case _:
            raise ValueError(f"Unknown LRR variant: {variant}")


def lrr(
    approx: CvResult,
    mcv: CvResult,
    spec: ModelSpec,
    plan: FoldPlan,
    variant: LrrVariant = LrrVariant.DISPLAY,
) -> LrrReport:
    """Compare an approximation to manual cross-validation fold by fold"""
    if len(approx.per_fold) != plan.J or len(mcv.per_fold) != plan.J:
        raise DimensionMismatch(
            f"Results have {len(approx.per_fold)} and {len(mcv.per_fold)} folds, "
            f"plan has {plan.J}"
        )
    per_fold = np.empty(plan.J)
    excluded: list[int] = []
    for j, fold in enumerate(plan.folds):
        a, m = approx.per_fold[j], mcv.per_fold[j]
        if not (np.array_equal(a.indices, fold) and np.array_equal(m.indices, fold)):
            raise DimensionMismatch(f"Fold {j} rows differ between results and plan")
        try:
            per_fold[j] = fold_lrr(a.predicted, m.predicted, spec.response[fold], variant, fold)
        except ZeroDenominator as error:
            logger.warning("Excluding fold %d from LRR: %s", j, error.message)
            per_fold[j] = np.nan
            excluded.append(j)
    return LrrReport(
        method=approx.method,
        per_fold=per_fold,
        excluded=tuple(excluded),
        variant=variant,
    )


def sigma_distance(sigma_mcv_j: np.ndarray, sigma_axe: np.ndarray) -> float:
    """Frobenius norm of the difference of two covariance estimates"""
    a = np.atleast_2d(np.asarray(sigma_mcv_j, dtype=float))
    b = np.atleast_2d(np.asarray(sigma_axe, dtype=float))
    if a.shape != b.shape:
        raise DimensionMismatch(f"Cannot compare {a.shape} with {b.shape}")
    return float(np.linalg.norm(a - b, ord="fro"))


@dataclass(frozen=True)
class LrrSummaryRow:
    method: str
    folds: int
    mean: float
    sd: float
    excluded: int
    unstable: bool


@dataclass(frozen=True)
class LrrSummary:
    rows: list[LrrSummaryRow] = field(default_factory=list)

    def render_text(self) -> str:
        """Aligned table of per-method mean and SD"""
        header = ("method", "folds", "mean", "sd", "excluded", "note")
        lines = [
            (
                row.method,
                str(row.folds),
                f"{row.mean:.4f}",
                f"{row.sd:.4f}",
                str(row.excluded),
                "unstable" if row.unstable else "",
            )
            for row in self.rows
        ]
        widths = [max(len(cell) for cell in column) for column in zip(header, *lines)]
        return (
            "\n".join(
                "  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip()
                for line in (header, *lines)
            )
            + "\n"
        )


def summarize_lrr(reports: list[LrrReport]) -> LrrSummary:
    """Pool the per-fold LRRs of each method, in order of first appearance"""
    pooled: dict[str, list[np.ndarray]] = {}
    excluded: dict[str, int] = {}
    for report in reports:
        pooled.setdefault(str(report.method), []).append(report.valid)
        excluded[str(report.method)] = excluded.get(str(report.method), 0) + len(report.excluded)
    rows = []
    for method, chunks in pooled.items():
        values = np.concatenate(chunks)
        sd = sample_sd(values)
        rows.append(
            LrrSummaryRow(
                method=method,
                folds=int(values.size),
                mean=float(values.mean()) if values.size else float("nan"),
                sd=sd,
                excluded=excluded[method],
                unstable=bool(sd > UNSTABLE_SD),
            )
        )
    return LrrSummary(rows=rows)
