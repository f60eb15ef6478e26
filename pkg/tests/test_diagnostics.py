import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from pytest import approx

from axe_cv.main.cv_result import CvResult, FoldRecord
from axe_cv.main.diagnostics import (
    LrrReport,
    fold_lrr,
    lrr,
    sample_sd,
    sigma_distance,
    summarize_lrr,
)
from axe_cv.main.folds import build_fold_plan
from axe_cv.main.model import ModelSpec
from axe_cv.main.types.cv_method import CvMethod
from axe_cv.main.types.fold_scheme import FoldScheme
from axe_cv.main.types.lrr_variant import LrrVariant
from axe_cv.main.types.mistakes import DimensionMismatch, ZeroDenominator


def result_for(method: CvMethod, plan, predictions: np.ndarray) -> CvResult:
    return CvResult(
        method=method,
        per_fold=tuple(
            FoldRecord(fold_id=j, indices=fold, predicted=predictions[fold])
            for j, fold in enumerate(plan)
        ),
    )


def test_fold_lrr_examples():
    assert fold_lrr(np.array([2.0]), np.array([1.0]), np.array([0.0])) == approx(np.log(4))
    assert fold_lrr(
        np.array([1.0, 3.0]), np.array([1.0, 1.0]), np.array([0.0, 0.0])
    ) == approx(np.log(1 + 9))
    # Error ratios 1 and 3 in squared terms
    assert fold_lrr(
        np.array([1.0, np.sqrt(3.0)]), np.array([1.0, 1.0]), np.array([0.0, 0.0])
    ) == approx(np.log(4))
    assert fold_lrr(np.array([0.5]), np.array([0.5]), np.array([1.5])) == approx(0.0)


def test_rmse_ratio_variant():
    value = fold_lrr(
        np.array([1.0, 3.0]),
        np.array([1.0, 1.0]),
        np.array([0.0, 0.0]),
        LrrVariant.RMSE_RATIO,
    )
    assert value == approx(np.log(10 / 2))
    same = np.array([0.3, -0.2])
    assert fold_lrr(same, same, np.zeros(2), LrrVariant.RMSE_RATIO) == 0.0


@given(scale=st.floats(0.01, 100.0))
def test_fold_lrr_is_scale_free(scale):
    approx_error = np.array([0.7, -1.3])
    truth_error = np.array([0.4, 0.9])
    y = np.zeros(2)
    base = fold_lrr(approx_error, truth_error, y)
    assert fold_lrr(scale * approx_error, scale * truth_error, y) == approx(base, abs=1e-9)


def test_zero_denominator():
    with pytest.raises(ZeroDenominator) as info:
        fold_lrr(
            np.array([1.0, 2.0]),
            np.array([0.5, 2.0]),
            np.array([0.0, 2.0]),
            rows=np.array([4, 7]),
        )
    assert info.value.culprit_index == 7


def identity_spec(y: np.ndarray) -> ModelSpec:
    return ModelSpec(X1=np.ones((y.size, 1)), X2=np.zeros((y.size, 0)), response=y)


def test_lrr_of_identical_results_is_zero():
    y = np.array([1.0, 2.0, 3.0])
    plan = build_fold_plan(FoldScheme.LOO, n=3)
    predictions = np.array([1.5, 1.0, 2.0])
    report = lrr(
        result_for(CvMethod.AXE, plan, predictions),
        result_for(CvMethod.MCV, plan, predictions),
        identity_spec(y),
        plan,
    )
    assert report.per_fold == approx(np.zeros(3))
    assert report.mean == 0.0
    assert report.sd == 0.0
    assert report.outliers == []


def test_lrr_excludes_exact_ground_truth_folds():
    y = np.array([1.0, 2.0, 3.0])
    plan = build_fold_plan(FoldScheme.LOO, n=3)
    report = lrr(
        result_for(CvMethod.GHOST, plan, np.array([0.0, 0.0, 0.0])),
        result_for(CvMethod.MCV, plan, np.array([2.0, 2.0, 2.0])),
        identity_spec(y),
        plan,
    )
    assert report.excluded == (1,)
    assert np.isnan(report.per_fold[1])
    assert report.valid.size == 2
    assert report.mean == approx(np.mean([np.log(1.0), np.log(9.0)]))
    assert report.outliers == [2]


def test_lrr_needs_matching_folds():
    plan = build_fold_plan(FoldScheme.LOO, n=3)
    other = build_fold_plan(FoldScheme.LOO, n=2)
    with pytest.raises(DimensionMismatch):
        lrr(
            result_for(CvMethod.AXE, other, np.zeros(2)),
            result_for(CvMethod.MCV, plan, np.ones(3)),
            identity_spec(np.zeros(3)),
            plan,
        )


def test_sigma_distance_examples():
    assert sigma_distance(np.eye(2), np.eye(2)) == 0.0
    assert sigma_distance(np.diag([3.0, 4.0]), np.zeros((2, 2))) == approx(5.0)
    assert sigma_distance(np.array([[2.0]]), np.array([[5.0]])) == approx(3.0)
    with pytest.raises(DimensionMismatch):
        sigma_distance(np.eye(2), np.eye(3))


@given(seed=st.integers(0, 2**31 - 1))
def test_sigma_distance_is_a_metric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (m @ m.T for m in rng.standard_normal((3, 3, 3)))
    assert sigma_distance(a, b) == approx(sigma_distance(b, a))
    assert sigma_distance(a, c) <= sigma_distance(a, b) + sigma_distance(b, c) + 1e-12


def test_sample_sd():
    assert sample_sd(np.array([0.0, 0.0, 0.0])) == 0.0
    assert sample_sd(np.array([-1.0, 1.0])) == approx(np.sqrt(2))
    assert sample_sd(np.array([2.0])) == 0.0
    assert np.isnan(sample_sd(np.array([])))


def test_summary_pools_methods_in_order():
    reports = [
        LrrReport(CvMethod.GHOST, np.array([-3.0, 3.0])),
        LrrReport(CvMethod.AXE, np.array([0.0, 0.0])),
        LrrReport(CvMethod.GHOST, np.array([0.0, np.nan]), excluded=(1,)),
    ]
    summary = summarize_lrr(reports)
    assert [row.method for row in summary.rows] == ["ghost", "axe"]
    ghost = summary.rows[0]
    assert ghost.folds == 3
    assert ghost.excluded == 1
    assert ghost.unstable
    assert not summary.rows[1].unstable
    text = summary.render_text()
    lines = text.splitlines()
    assert lines[0].split() == ["method", "folds", "mean", "sd", "excluded", "note"]
    assert lines[1].split()[-1] == "unstable"
    assert len(lines) == 3
