"""Leave-one-feature-out importance and the leaf-removal robustness sweep."""

from __future__ import annotations

from collections.abc import Sequence
from typing import Optional, Union

import numpy as np
from scipy import stats as sps

from coronary_agmn.core.config import FeatureSpec
from coronary_agmn.core.errors import FeatureLayoutError
from coronary_agmn.core.logging_config import get_logger
from coronary_agmn.evaluation.crossval import label_with_matcher, score_assignments
from coronary_agmn.evaluation.metrics import summarize
from coronary_agmn.features.extractor import family_slices, feature_layout
from coronary_agmn.graph.artery_graph import IndividualGraph
from coronary_agmn.graph.attack import corrupt
from coronary_agmn.matching.agmn import AgmnModel
from coronary_agmn.matching.checkpoint import TrainedMatcher
from coronary_agmn.matching.runtime import label_graph, ordered_map
from coronary_agmn.schemas.reports import (
    AttackLevelResult,
    AttackReport,
    FeatureImportanceEntry,
    FeatureImportanceReport,
    MetricsReport,
)

logger = get_logger(__name__)

FeatureSelection = Union[int, Sequence[int]]


def zero_features(graphs: Sequence[IndividualGraph], indices: FeatureSelection) -> list[IndividualGraph]:
    """Copies with the selected slots set to zero on every node (expects normalized features)."""
    selected = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    out = []
    for graph in graphs:
        width = graph.feature_matrix().shape[1]
        if selected.size and (selected.min() < 0 or selected.max() >= width):
            raise FeatureLayoutError(f"Feature index out of range for {width}-dim layout: {selected.tolist()}")
        copy = graph.copy()
        for node in copy.nodes:
            values = node.features.copy()
            values[selected] = 0.0
            node.features = values
        out.append(copy)
    return out


def _accuracy(
    model: AgmnModel, tests: Sequence[IndividualGraph], templates: Sequence[IndividualGraph], threads: int
) -> MetricsReport:
    assignments = [label_graph(model, test, templates, threads) for test in tests]
    return score_assignments(tests, assignments)


def feature_importance(
    model: AgmnModel,
    tests: Sequence[IndividualGraph],
    templates: Sequence[IndividualGraph],
    feature_index: FeatureSelection,
    threads: int = 1,
    baseline: Optional[float] = None,
) -> float:
    """Weighted ACC with all features minus weighted ACC with `feature_index` zeroed in tests and templates."""
    if baseline is None:
        baseline = _accuracy(model, tests, templates, threads).accuracy
    corrupted = _accuracy(model, zero_features(tests, feature_index), zero_features(templates, feature_index), threads)
    return baseline - corrupted.accuracy


def importance_report(
    model: AgmnModel,
    tests: Sequence[IndividualGraph],
    templates: Sequence[IndividualGraph],
    spec: FeatureSpec,
    threads: int = 1,
) -> FeatureImportanceReport:
    """Ranks every single slot and every whole family by the accuracy lost when it is zeroed."""
    baseline = _accuracy(model, tests, templates, threads).accuracy
    candidates = [(name, [index]) for index, name in enumerate(feature_layout(spec))]
    candidates += [(family, list(range(s.start, s.stop))) for family, s in family_slices(spec).items()]

    def evaluate(candidate: tuple[str, list[int]]) -> FeatureImportanceEntry:
        name, indices = candidate
        delta = feature_importance(model, tests, templates, indices, 1, baseline)
        logger.debug(f"importance {name}: delta={delta:.4f}")
        return FeatureImportanceEntry(name=name, indices=indices, accuracy=baseline - delta, delta=delta)

    entries = ordered_map(evaluate, candidates, threads)
    entries.sort(key=lambda e: (-e.delta, e.name))
    logger.info(f"Feature importance over {len(candidates)} candidates, baseline ACC {baseline:.4f}")
    return FeatureImportanceReport(baseline_accuracy=baseline, entries=entries)


def refresh_topology(graph: IndividualGraph, spec: FeatureSpec) -> IndividualGraph:
    """Rewrites the raw terminal-degree slots from the graph's current terminal degrees."""
    slices = family_slices(spec)
    if "topology" not in slices:
        return graph
    out = graph.copy()
    for node in out.nodes:
        values = node.features.copy()
        values[slices["topology"]] = node.terminal_degrees
        node.features = values
    return out


def attack_sweep(
    matcher: TrainedMatcher,
    tests: Sequence[IndividualGraph],
    templates: Sequence[IndividualGraph],
    levels: Sequence[float],
    seeds: Sequence[int],
    threads: int = 1,
) -> AttackReport:
    """Labels leaf-corrupted copies of the raw test graphs at every level, averaging over seeds.

    Each (seed, level) pair draws from its own generator, so a level's outcome
    does not depend on which other levels are swept.
    """
    baseline = score_assignments(tests, label_with_matcher(matcher, tests, templates, threads))

    def run(job: tuple[int, int]) -> tuple[MetricsReport, float]:
        seed, level_index = job
        rng = np.random.default_rng([seed, level_index])
        corrupted = [refresh_topology(corrupt(g, levels[level_index], rng), matcher.feature_spec) for g in tests]
        removed = float(np.mean([g.provenance["attack"]["removed"] for g in corrupted]))
        return score_assignments(corrupted, label_with_matcher(matcher, corrupted, templates)), removed

    jobs = [(seed, level_index) for level_index in range(len(levels)) for seed in seeds]
    results = dict(zip(jobs, ordered_map(run, jobs, threads)))

    rows = []
    for level_index, level in enumerate(levels):
        reports = [results[(seed, level_index)][0] for seed in seeds]
        summary = summarize(reports)
        rows.append(
            AttackLevelResult(
                level=level,
                accuracy=summary["accuracy"],
                precision=summary["precision"],
                recall=summary["recall"],
                f1=summary["f1"],
                removed_segments=float(np.mean([results[(seed, level_index)][1] for seed in seeds])),
            )
        )
        logger.info(f"attack level {level}: ACC={summary['accuracy'].mean:.4f}±{summary['accuracy'].std:.4f}")

    rho = _trend([r.level for r in rows], [r.accuracy.mean for r in rows])
    return AttackReport(seeds=list(seeds), baseline=baseline, levels=rows, spearman_rho=rho)


def _trend(levels: Sequence[float], accuracies: Sequence[float]) -> Optional[float]:
    if len(levels) < 2:
        return None
    rho = sps.spearmanr(levels, accuracies).statistic
    return None if np.isnan(rho) else float(rho)
