"""One-vs-rest confusion counts per base class and the support-weighted metrics."""

from __future__ import annotations

import csv
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from coronary_agmn.core.errors import DimensionMismatchError, LabelingError
from coronary_agmn.graph.labels import BASE_CLASSES, UNASSIGNED, group_label_text
from coronary_agmn.schemas.reports import ClassMetrics, MetricsReport, MetricSummary

SUMMARY_METRICS = ("accuracy", "precision", "recall", "f1", "plain_accuracy")


@dataclass(frozen=True)
class ConfusionStats:
    classes: tuple[str, ...]
    tp: dict[str, int]
    tn: dict[str, int]
    fp: dict[str, int]
    fn: dict[str, int]
    n: int
    correct: int

    def support(self, c: str) -> int:
        return self.tp[c] + self.fn[c]


def confusion(truth: Sequence[str], predicted: Sequence[str]) -> ConfusionStats:
    """Counts on base classes; an UNASSIGNED prediction is a false negative of the true class only."""
    if len(truth) != len(predicted):
        raise DimensionMismatchError(f"{len(truth)} true labels but {len(predicted)} predictions")
    classes = tuple(c.value for c in BASE_CLASSES)
    true_groups = [group_label_text(t) for t in truth]
    if UNASSIGNED in true_groups:
        raise LabelingError("Ground truth cannot contain UNASSIGNED")
    predicted_groups = [group_label_text(p) for p in predicted]

    tp = {c: 0 for c in classes}
    fp = {c: 0 for c in classes}
    fn = {c: 0 for c in classes}
    for t, p in zip(true_groups, predicted_groups):
        if t == p:
            tp[t] += 1
            continue
        fn[t] += 1
        if p != UNASSIGNED:
            fp[p] += 1
    n = len(true_groups)
    tn = {c: n - tp[c] - fp[c] - fn[c] for c in classes}
    return ConfusionStats(classes, tp, tn, fp, fn, n, sum(tp.values()))


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


def weighted_metrics(cs: ConfusionStats, fold: Optional[str] = None) -> MetricsReport:
    """Per-class ACC/PRE/REC/F1 and their averages weighted by class support n_c / n.

    Recall is TP / (TP + FN). A metric whose denominator is zero is 0.
    """
    per_class = []
    for c in cs.classes:
        tp, tn, fp, fn = cs.tp[c], cs.tn[c], cs.fp[c], cs.fn[c]
        per_class.append(
            ClassMetrics(
                label=c,
                support=tp + fn,
                tp=tp,
                tn=tn,
                fp=fp,
                fn=fn,
                accuracy=_ratio(tp + tn, tp + tn + fp + fn),
                precision=_ratio(tp, tp + fp),
                recall=_ratio(tp, tp + fn),
                f1=_ratio(tp, tp + 0.5 * (fp + fn)),
            )
        )

    def weighted(metric: str) -> float:
        value = sum(getattr(m, metric) * m.support for m in per_class) / cs.n if cs.n else 0.0
        return min(max(value, 0.0), 1.0)

    return MetricsReport(
        fold=fold,
        n=cs.n,
        classes=per_class,
        accuracy=weighted("accuracy"),
        precision=weighted("precision"),
        recall=weighted("recall"),
        f1=weighted("f1"),
        plain_accuracy=_ratio(cs.correct, cs.n),
    )


def evaluate_labels(truth: Sequence[str], predicted: Sequence[str], fold: Optional[str] = None) -> MetricsReport:
    return weighted_metrics(confusion(truth, predicted), fold)


def summarize(reports: Sequence[MetricsReport]) -> dict[str, MetricSummary]:
    """Mean and population std of each weighted metric across folds or seeds."""
    if not reports:
        raise DimensionMismatchError("Cannot summarize an empty list of reports")
    summary = {}
    for metric in SUMMARY_METRICS:
        values = np.array([getattr(r, metric) for r in reports], dtype=np.float64)
        summary[metric] = MetricSummary(mean=float(values.mean()), std=float(values.std()))
    return summary


def write_metrics_csv(path: Path | str, reports: Sequence[MetricsReport]) -> Path:
    """One row per class and one `weighted` row per report."""
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["fold", "label", "support", "accuracy", "precision", "recall", "f1"])
        for report in reports:
            for c in report.classes:
                writer.writerow([report.fold, c.label, c.support, c.accuracy, c.precision, c.recall, c.f1])
            writer.writerow(
                [report.fold, "weighted", report.n, report.accuracy, report.precision, report.recall, report.f1]
            )
    return path


def write_summary_csv(path: Path | str, rows: Sequence[tuple[dict[str, object], dict[str, MetricSummary]]]) -> Path:
    """Rows of (key columns, summary); every metric becomes a `<name>_mean` and `<name>_std` column."""
    path = Path(path)
    keys = list(rows[0][0]) if rows else []
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(keys + [f"{m}_{s}" for m in SUMMARY_METRICS for s in ("mean", "std")])
        for key_values, summary in rows:
            writer.writerow(
                [key_values[k] for k in keys]
                + [v for m in SUMMARY_METRICS for v in (summary[m].mean, summary[m].std)]
            )
    return path
