"""Tests for the confusion counts and the support-weighted metrics."""

import csv

import numpy as np
import pytest

from coronary_agmn.core.errors import DimensionMismatchError, LabelingError
from coronary_agmn.evaluation.metrics import (
    confusion,
    evaluate_labels,
    summarize,
    write_metrics_csv,
    write_summary_csv,
)
from coronary_agmn.graph.labels import UNASSIGNED

TRUTH = ["LMA", "LAD1", "LAD2", "LCX1", "D1"]
PREDICTED = ["LMA", "LAD3", "D1", "LCX2", UNASSIGNED]


def test_confusion_groups_subclasses():
    """Test that sub-indices are ignored and UNASSIGNED only costs the true class."""
    cs = confusion(TRUTH, PREDICTED)
    assert cs.tp == {"LMA": 1, "LAD": 1, "LCX": 1, "D": 0, "OM": 0}
    assert cs.fn["LAD"] == 1 and cs.fn["D"] == 1
    assert cs.fp == {"LMA": 0, "LAD": 0, "LCX": 0, "D": 1, "OM": 0}
    assert cs.tn["OM"] == 5
    assert cs.support("LAD") == 2
    assert cs.correct == 3


def test_weighted_metrics_with_mixed_errors():
    report = evaluate_labels(TRUTH, PREDICTED, fold="0")
    assert report.accuracy == pytest.approx(0.84)
    assert report.precision == pytest.approx(0.8)
    assert report.recall == pytest.approx(0.6)
    assert report.f1 == pytest.approx(2 / 3)
    assert report.plain_accuracy == pytest.approx(0.6)
    assert report.class_metrics("LAD").f1 == pytest.approx(2 / 3)
    assert report.class_metrics("OM").precision == 0.0
    assert report.fold == "0"


def test_perfect_labels():
    report = evaluate_labels(TRUTH, TRUTH)
    assert report.accuracy == report.precision == report.recall == report.f1 == 1.0


def test_weighted_recall_is_plain_accuracy():
    """Test that support-weighted recall reduces to the fraction labeled correctly."""
    rng = np.random.default_rng(2)
    pool = ["LMA", "LAD1", "LAD2", "LCX1", "D1", "D2", "OM1"]
    truth = rng.choice(pool, 40).tolist()
    predicted = rng.choice(pool + [UNASSIGNED], 40).tolist()
    report = evaluate_labels(truth, predicted)
    assert report.recall == pytest.approx(report.plain_accuracy)


def test_confusion_errors():
    with pytest.raises(DimensionMismatchError):
        confusion(["LMA"], [])
    with pytest.raises(LabelingError):
        confusion([UNASSIGNED], ["LMA"])
    with pytest.raises(LabelingError):
        confusion(["RCA"], ["LMA"])


def test_summarize():
    reports = [evaluate_labels(TRUTH, TRUTH), evaluate_labels(TRUTH, PREDICTED)]
    summary = summarize(reports)
    assert summary["plain_accuracy"].mean == pytest.approx(0.8)
    assert summary["plain_accuracy"].std == pytest.approx(0.2)
    with pytest.raises(DimensionMismatchError):
        summarize([])


def test_metric_csvs(tmp_path):
    reports = [evaluate_labels(TRUTH, PREDICTED, fold=str(k)) for k in range(2)]
    with write_metrics_csv(tmp_path / "m.csv", reports).open() as f:
        rows = list(csv.reader(f))
    # header, then five classes and a weighted row per fold
    assert len(rows) == 1 + 2 * 6
    assert rows[6][1] == "weighted"

    with write_summary_csv(tmp_path / "s.csv", [({"level": 0.1}, summarize(reports))]).open() as f:
        rows = list(csv.reader(f))
    assert rows[0][:3] == ["level", "accuracy_mean", "accuracy_std"]
    assert float(rows[1][1]) == pytest.approx(0.84)
