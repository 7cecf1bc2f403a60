"""Template hold-out, view-stratified k-fold cross-validation and the hyperparameter grid."""

from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from typing import Optional

import numpy as np

from coronary_agmn.core.errors import DatasetError
from coronary_agmn.core.logging_config import get_logger
from coronary_agmn.evaluation.metrics import evaluate_labels, summarize
from coronary_agmn.features.extractor import NormalizationStats
from coronary_agmn.graph.artery_graph import IndividualGraph
from coronary_agmn.matching.checkpoint import TrainedMatcher
from coronary_agmn.matching.dataset import Dataset
from coronary_agmn.matching.runtime import LabelAssignment, label_graph, prepare_graphs, train
from coronary_agmn.schemas.reports import CrossValidationReport, MetricsReport
from coronary_agmn.schemas.run_config import RunConfig

logger = get_logger(__name__)


def template_count(total: int, fraction: float) -> int:
    # rounding first keeps 0.15 * 120 from landing a hair above 18
    return math.ceil(round(fraction * total, 9))


def allocate_templates(view_counts: dict[Optional[str], int], fraction: float) -> dict[Optional[str], int]:
    """Largest-remainder split of ceil(fraction * N) templates across views, proportional to view size."""
    total = sum(view_counts.values())
    wanted = template_count(total, fraction)
    quotas = {view: wanted * count / total for view, count in view_counts.items()}
    allocation = {view: math.floor(q) for view, q in quotas.items()}
    leftovers = sorted(quotas, key=lambda view: (-(quotas[view] - allocation[view]), str(view)))
    for view in leftovers[: wanted - sum(allocation.values())]:
        allocation[view] += 1
    return allocation


def split_templates(dataset: Dataset, fraction: float) -> tuple[list[int], list[int]]:
    """The first k samples of each view become templates; returns (templates, remainder)."""
    views = dataset.by_view()
    allocation = allocate_templates({view: len(members) for view, members in views.items()}, fraction)
    templates: list[int] = []
    for view, members in views.items():
        k = allocation[view]
        if k == 0 or k >= len(members):
            raise DatasetError(
                f"View {view!r} has {len(members)} samples; a template fraction of {fraction} leaves it {k} templates"
            )
        templates.extend(members[:k])
    chosen = set(templates)
    remainder = [i for i in range(len(dataset)) if i not in chosen]
    return sorted(templates), remainder


def stratified_folds(
    dataset: Dataset, indices: Sequence[int], k: int, rng: np.random.Generator
) -> list[list[int]]:
    """Shuffles each view, then deals round-robin into k folds, continuing the deal across views."""
    if len(indices) < k:
        raise DatasetError(f"{len(indices)} samples cannot fill {k} folds")
    by_view: dict[Optional[str], list[int]] = {}
    for index in indices:
        by_view.setdefault(dataset.samples[index].view_tag, []).append(index)
    folds: list[list[int]] = [[] for _ in range(k)]
    dealt = 0
    for view in sorted(by_view, key=str):
        for index in rng.permutation(by_view[view]).tolist():
            folds[dealt % k].append(int(index))
            dealt += 1
    return [sorted(fold) for fold in folds]


def label_with_matcher(
    matcher: TrainedMatcher,
    tests: Sequence[IndividualGraph],
    templates: Sequence[IndividualGraph],
    threads: int = 1,
) -> list[LabelAssignment]:
    """Normalizes raw graphs with the matcher's statistics and labels every test graph."""
    normalized_templates = prepare_graphs(templates, matcher.stats)
    return [label_graph(matcher.model, test, normalized_templates, threads) for test in prepare_graphs(tests, matcher.stats)]


def score_assignments(
    tests: Sequence[IndividualGraph], assignments: Sequence[LabelAssignment], fold: Optional[str] = None
) -> MetricsReport:
    truth = [str(node.label) for graph in tests for node in graph.nodes]
    predicted = [label for assignment in assignments for label in assignment.labels]
    return evaluate_labels(truth, predicted, fold)


def run_fold(
    dataset: Dataset,
    train_indices: Sequence[int],
    test_indices: Sequence[int],
    template_indices: Sequence[int],
    config: RunConfig,
    fold: Optional[str] = None,
) -> MetricsReport:
    """Fits normalization on the training part, trains, then labels the test part against the templates."""
    train_graphs = [dataset.samples[i].graph for i in train_indices]
    stats = NormalizationStats.fit(train_graphs)
    matcher, _ = train(
        prepare_graphs(train_graphs, stats), config.train, config.model, stats, config.features, config.threads
    )
    tests = [dataset.samples[i].graph for i in test_indices]
    templates = [dataset.samples[i].graph for i in template_indices]
    report = score_assignments(tests, label_with_matcher(matcher, tests, templates, config.threads), fold)
    logger.info(f"fold {fold}: n={report.n} ACC={report.accuracy:.4f} F1={report.f1:.4f}")
    return report


def cross_validate(dataset: Dataset, config: RunConfig) -> CrossValidationReport:
    dataset.require_labels()
    template_indices, remainder = split_templates(dataset, config.template_fraction)
    folds = stratified_folds(dataset, remainder, config.folds, np.random.default_rng(config.seed))
    logger.info(
        f"Cross-validating on {len(dataset)} samples: {len(template_indices)} templates, "
        f"{config.folds} folds of {[len(f) for f in folds]}"
    )
    reports = []
    for fold_index, test_indices in enumerate(folds):
        held_out = set(test_indices)
        train_indices = [i for i in remainder if i not in held_out]
        reports.append(run_fold(dataset, train_indices, test_indices, template_indices, config, str(fold_index)))
    return CrossValidationReport(
        template_fraction=config.template_fraction,
        hidden=config.model.hidden,
        depth=config.model.depth,
        n_mp=config.model.n_mp,
        seed=config.seed,
        folds=reports,
        summary=summarize(reports),
    )


def grid_search(
    dataset: Dataset,
    config: RunConfig,
    hidden: Sequence[int] = (),
    depth: Sequence[int] = (),
    n_mp: Sequence[int] = (),
    template_fractions: Sequence[float] = (),
) -> list[CrossValidationReport]:
    """Cross-validates every point of the Cartesian grid; an empty axis keeps the configured value."""
    axes = (
        list(hidden) or [config.model.hidden],
        list(depth) or [config.model.depth],
        list(n_mp) or [config.model.n_mp],
        list(template_fractions) or [config.template_fraction],
    )
    reports = []
    for h, d, m, fraction in itertools.product(*axes):
        point = config.with_overrides(**{"model.hidden": h, "model.depth": d, "model.n_mp": m, "template_fraction": fraction})
        logger.info(f"Grid point H={h} depth={d} n_mp={m} template_fraction={fraction}")
        reports.append(cross_validate(dataset, point))
    return reports
