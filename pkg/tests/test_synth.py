"""Tests for the synthetic tree generator and the benchmark it builds."""

from collections import Counter

import numpy as np
import pytest
from conftest import TREE_NODES, labeled_tree

from coronary_agmn.core.config import FeatureSpec, PipelineConfig, SynthConfig
from coronary_agmn.core.errors import DatasetError
from coronary_agmn.graph.labels import BaseClass
from coronary_agmn.matching.dataset import load_dataset
from coronary_agmn.schemas.dataset import BranchTruth, TruthDocument
from coronary_agmn.synth.generator import (
    expected_node_count,
    generate,
    labeled_sample,
    make_benchmark,
    topology_matches,
    transfer_labels,
    write_benchmark,
)


def _polyline(*corners: tuple[int, int]) -> list[tuple[float, float]]:
    points = []
    for start, end in zip(corners[:-1], corners[1:]):
        steps = int(np.hypot(end[0] - start[0], end[1] - start[1]))
        for t in np.linspace(0.0, 1.0, steps, endpoint=False):
            points.append((start[0] + t * (end[0] - start[0]), start[1] + t * (end[1] - start[1])))
    points.append(tuple(float(v) for v in corners[-1]))
    return points


def _tree_truth() -> TruthDocument:
    """Ground truth drawn over the fixture tree: one diagonal, no marginal."""
    corners = {label: (proximal, distal) for label, proximal, distal, _, _ in TREE_NODES}
    branches = [
        ("LMA", _polyline(*corners["LMA"]), None),
        ("LAD", _polyline(corners["LAD1"][0], corners["LAD1"][1], corners["LAD2"][1]), 0),
        ("LCX", _polyline(*corners["LCX1"]), 0),
        ("D", _polyline(*corners["D1"]), 1),
    ]
    return TruthDocument(
        seed=0,
        view_tag="RAO",
        pixel_spacing=0.3,
        root=(10, 10),
        branches=[BranchTruth(label=label, points=points, radii=[3.0] * len(points), parent=parent)
                  for label, points, parent in branches],
        expected_nodes=expected_node_count(1, 0),
    )


@pytest.mark.parametrize("n_d, n_om, expected", [(1, 1, 7), (3, 3, 15), (0, 0, 3), (2, 1, 9)])
def test_expected_node_count(n_d, n_om, expected):
    assert expected_node_count(n_d, n_om) == expected


def test_generate_is_deterministic():
    first, second = generate(11, "RAO"), generate(11, "RAO")
    np.testing.assert_array_equal(first.gray.intensities, second.gray.intensities)
    np.testing.assert_array_equal(first.mask.foreground, second.mask.foreground)
    assert first.truth == second.truth


def test_generated_tree_shape():
    """Test the rendered images and the recorded branch structure."""
    sample = generate(3, "LAO")
    assert sample.gray.intensities.shape == (512, 512)
    assert sample.mask.foreground.any()
    truth = sample.truth
    counts = Counter(b.label for b in truth.branches)
    assert counts["LMA"] == counts["LAD"] == counts["LCX"] == 1
    assert 1 <= counts["D"] <= 3 and 1 <= counts["OM"] <= 3
    assert truth.expected_nodes == expected_node_count(counts["D"], counts["OM"])
    assert truth.branches[0].parent is None
    assert all(b.parent == 1 for b in truth.branches if b.label == "D")
    assert all(b.parent == 2 for b in truth.branches if b.label == "OM")
    x, y = truth.root
    assert sample.mask.foreground[y, x]


def test_generate_rejects_unknown_view():
    with pytest.raises(DatasetError):
        generate(0, "AP")


def test_transfer_labels_follows_nearest_branch():
    graph = transfer_labels(labeled_tree(labeled=False), _tree_truth())
    assert [str(node.label) for node in graph.nodes] == ["LMA", "LAD1", "LCX1", "D1", "LAD2"]


def test_topology_matches():
    truth = _tree_truth()
    assert topology_matches(labeled_tree(), truth)
    smaller = labeled_tree()
    smaller.nodes = smaller.nodes[:3]
    smaller.edges = [(0, 1), (0, 2)]
    assert not topology_matches(smaller, truth)


def test_labeled_sample():
    """Test that one generated sample comes out fully labeled with raw features."""
    sample, synth = labeled_sample("one", 5, "RAO", SynthConfig(), PipelineConfig(), FeatureSpec())
    graph = sample.graph
    assert graph.n > 0
    assert all(node.label is not None for node in graph.nodes)
    assert sum(node.label.base_class == BaseClass.LMA for node in graph.nodes) == 1
    assert graph.feature_matrix().shape == (graph.n, 70)
    assert graph.provenance["synth"]["seed"] == sample.seed
    assert sample.truth == synth.truth
    assert sample.topology_ok == topology_matches(graph, synth.truth)


def test_benchmark_size_floor():
    with pytest.raises(DatasetError):
        make_benchmark(19, seed=0)


@pytest.mark.slow
def test_benchmark_roundtrip(tmp_path):
    dataset = make_benchmark(20, seed=1)
    assert len(dataset) == 20
    assert [len(members) for members in dataset.by_view().values()] == [6, 14]
    write_benchmark(dataset, tmp_path, seed=1)
    loaded = load_dataset(tmp_path)
    assert [s.name for s in loaded.samples] == [s.name for s in dataset.samples]
    for before, after in zip(dataset.samples, loaded.samples):
        assert after.graph.n == before.graph.n
        assert after.topology_ok == before.topology_ok
        np.testing.assert_array_equal(after.mask.foreground, before.mask.foreground)
        np.testing.assert_allclose(after.graph.feature_matrix(), before.graph.feature_matrix())
