"""Tests for the template hold-out, fold construction and a tiny end-to-end cross-validation."""

import numpy as np
import pytest
from conftest import DiagonalModel, labeled_tree

from coronary_agmn.core.config import ModelConfig, TrainConfig
from coronary_agmn.core.errors import DatasetError
from coronary_agmn.evaluation.crossval import (
    allocate_templates,
    cross_validate,
    grid_search,
    score_assignments,
    split_templates,
    stratified_folds,
    template_count,
)
from coronary_agmn.matching.dataset import Dataset, Sample
from coronary_agmn.matching.runtime import label_graph
from coronary_agmn.schemas.run_config import RunConfig


def _dataset(views: list[str]) -> Dataset:
    return Dataset([Sample(f"s{k}", labeled_tree(seed=k, view_tag=view)) for k, view in enumerate(views)])


TINY_RUN = RunConfig(
    template_fraction=0.25,
    folds=2,
    train=TrainConfig(steps=2, batch_size=2),
    model=ModelConfig(hidden=4, depth=1, n_mp=1),
)


@pytest.mark.parametrize("total, fraction, expected", [(263, 0.15, 40), (120, 0.15, 18), (20, 0.15, 3), (10, 0.5, 5)])
def test_template_count(total, fraction, expected):
    assert template_count(total, fraction) == expected


def test_allocate_templates_by_largest_remainder():
    assert allocate_templates({"LAO": 79, "RAO": 184}, 0.15) == {"LAO": 12, "RAO": 28}
    assert allocate_templates({None: 10}, 0.15) == {None: 2}


def test_split_templates_takes_first_of_each_view():
    dataset = _dataset(["LAO"] * 8 + ["RAO"] * 12)
    templates, remainder = split_templates(dataset, 0.15)
    assert templates == [0, 8, 9]
    assert len(remainder) == 17
    assert not set(templates) & set(remainder)


def test_split_templates_rejects_views_without_templates():
    """Test that a view too small to receive a template is an error."""
    with pytest.raises(DatasetError):
        split_templates(_dataset(["LAO"] + ["RAO"] * 12), 0.15)


def test_stratified_folds():
    """Test that folds partition the indices, balance the views and depend only on the generator."""
    dataset = _dataset(["LAO"] * 7 + ["RAO"] * 11)
    indices = list(range(18))
    folds = stratified_folds(dataset, indices, 3, np.random.default_rng(5))
    assert sorted(i for fold in folds for i in fold) == indices
    assert [len(fold) for fold in folds] == [6, 6, 6]
    for fold in folds:
        lao = sum(dataset.samples[i].view_tag == "LAO" for i in fold)
        assert lao in (2, 3)
    assert folds == stratified_folds(dataset, indices, 3, np.random.default_rng(5))
    with pytest.raises(DatasetError):
        stratified_folds(dataset, [0, 1], 3, np.random.default_rng(0))


def test_score_assignments():
    tests = [labeled_tree(seed=1), labeled_tree(seed=2)]
    templates = [labeled_tree(seed=3)]
    assignments = [label_graph(DiagonalModel(), test, templates) for test in tests]
    report = score_assignments(tests, assignments)
    assert report.n == 10
    assert report.accuracy == 1.0


def test_cross_validate_tiny_dataset():
    dataset = _dataset(["RAO"] * 8 + ["LAO"] * 4)
    report = cross_validate(dataset, TINY_RUN)
    assert len(report.folds) == 2
    assert [f.fold for f in report.folds] == ["0", "1"]
    # 3 templates held out, 9 graphs of 5 segments tested across the folds
    assert sum(f.n for f in report.folds) == 45
    assert 0.0 <= report.summary["accuracy"].mean <= 1.0
    assert report.hidden == 4 and report.template_fraction == 0.25


def test_cross_validate_needs_labels():
    dataset = _dataset(["RAO"] * 8)
    dataset.samples[3].graph = labeled_tree(seed=3, labeled=False)
    with pytest.raises(DatasetError):
        cross_validate(dataset, TINY_RUN)


@pytest.mark.slow
def test_grid_search_covers_the_grid():
    dataset = _dataset(["RAO"] * 8 + ["LAO"] * 4)
    reports = grid_search(dataset, TINY_RUN, hidden=[2, 3], n_mp=[0, 1])
    assert [(r.hidden, r.n_mp) for r in reports] == [(2, 0), (2, 1), (3, 0), (3, 1)]
    assert all(r.depth == 1 for r in reports)
