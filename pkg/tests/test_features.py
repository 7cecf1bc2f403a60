"""Tests for the segment feature families, the layout and normalization."""

import math
from collections import Counter

import numpy as np
import pytest
from conftest import TEST_LAYOUT, Y_ROOT, labeled_tree

from coronary_agmn.core.config import FeatureSpec, PipelineConfig
from coronary_agmn.core.errors import FeatureLayoutError
from coronary_agmn.features.extractor import (
    NormalizationStats,
    extract_features,
    family_slices,
    feature_layout,
    get_feature_family,
    layout_version,
    normalize,
    normalize_graph,
    segment_regions,
)
from coronary_agmn.features.families.basic import centerline_length
from coronary_agmn.features.families.first_order import FIRST_ORDER_SLOTS, first_order_features, quantize
from coronary_agmn.features.families.glcm import (
    GLCM_SLOTS,
    cooccurrence,
    glcm_features,
    glcm_statistics,
    quantized_levels,
)
from coronary_agmn.features.families.position import position_features, tree_reference
from coronary_agmn.graph.artery_graph import build_individual_graph


def test_default_layout():
    """Test the 70-slot layout and its version string."""
    spec = FeatureSpec()
    assert len(feature_layout(spec)) == 70
    assert layout_version(spec) == "seg-v1/basic+first_order+glcm+position+topology/70d/g32"
    slices = family_slices(spec)
    assert slices["basic"] == slice(0, 6)
    assert slices["first_order"] == slice(6, 24)
    assert slices["glcm"] == slice(24, 48)
    assert slices["position"] == slice(48, 68)
    assert slices["topology"] == slice(68, 70)
    assert feature_layout(spec)[68] == "topology.proximal_degree"


def test_family_order_is_canonical():
    """Test that families are laid out in fixed order whatever order they are listed in."""
    spec = FeatureSpec(enabled_families=["topology", "basic"])
    assert spec.enabled_families == ["basic", "topology"]
    assert layout_version(spec) == "seg-v1/basic+topology/8d/g32"


def test_unknown_family():
    with pytest.raises(FeatureLayoutError):
        get_feature_family("shape")


def test_spec_validation():
    with pytest.raises(ValueError):
        FeatureSpec(glcm_offsets=[(0, 0)])
    with pytest.raises(ValueError):
        FeatureSpec(enabled_families=[])


def test_centerline_length():
    assert centerline_length(np.array([(0, 0), (1, 0), (2, 1)])) == pytest.approx(1 + np.sqrt(2))
    assert centerline_length(np.array([(3, 3)])) == 0.0


def test_quantize():
    """Test range-relative binning into 1..levels."""
    np.testing.assert_array_equal(quantize(np.array([7, 7, 7]), 32), [1, 1, 1])
    np.testing.assert_array_equal(quantize(np.array([0, 255]), 32), [1, 32])
    np.testing.assert_array_equal(quantize(np.array([0, 50, 100]), 4), [1, 3, 4])


def test_first_order_constant_region():
    """Test the statistics of a region with a single intensity."""
    values = dict(zip(FIRST_ORDER_SLOTS, first_order_features(np.full(10, 5.0), 32, pixel_area=0.09)))
    assert values["energy"] == 250.0
    assert values["total_energy"] == pytest.approx(22.5)
    assert values["entropy"] == 0.0
    assert values["uniformity"] == 1.0
    assert values["minimum"] == values["maximum"] == values["mean"] == 5.0
    assert values["range"] == values["variance"] == 0.0
    assert values["skewness"] == values["kurtosis"] == 0.0


def test_first_order_small_region():
    values = dict(zip(FIRST_ORDER_SLOTS, first_order_features(np.array([1.0, 2.0, 3.0, 4.0]), 4)))
    assert values["mean"] == 2.5
    assert values["variance"] == pytest.approx(1.25)
    assert values["mean_absolute_deviation"] == pytest.approx(1.0)
    assert values["root_mean_squared"] == pytest.approx(np.sqrt(7.5))
    assert values["entropy"] == pytest.approx(2.0)
    assert values["uniformity"] == pytest.approx(0.25)
    assert values["skewness"] == pytest.approx(0.0)
    assert values["kurtosis"] == pytest.approx(1.64)


def test_cooccurrence_matches_enumeration():
    """Test the vectorized co-occurrence counts against a direct loop over pixel pairs."""
    rng = np.random.default_rng(3)
    levels = rng.integers(0, 5, size=(6, 7))
    for offset in [(1, 0), (1, -1), (0, 1), (1, 1)]:
        dx, dy = offset
        expected = np.zeros((4, 4))
        for y in range(6):
            for x in range(7):
                y2, x2 = y + dy, x + dx
                if 0 <= y2 < 6 and 0 <= x2 < 7 and levels[y, x] > 0 and levels[y2, x2] > 0:
                    expected[levels[y, x] - 1, levels[y2, x2] - 1] += 1
                    expected[levels[y2, x2] - 1, levels[y, x] - 1] += 1
        np.testing.assert_array_equal(cooccurrence(levels, offset, 4), expected)


def test_quantized_levels_outside_region_are_zero():
    gray = np.arange(16, dtype=np.uint8).reshape(4, 4)
    region = np.zeros((4, 4), dtype=bool)
    region[1:3, 1:3] = True
    levels = quantized_levels(gray, region, 2)
    assert levels[~region].sum() == 0
    assert set(levels[region].tolist()) == {1, 2}


def test_glcm_statistics_of_diagonal_matrix():
    """Test a few statistics of a co-occurrence with every pair on the diagonal."""
    values = dict(zip(GLCM_SLOTS, glcm_statistics(np.eye(4) / 4)))
    assert values["contrast"] == pytest.approx(0.0)
    assert values["idm"] == pytest.approx(1.0)
    assert values["joint_energy"] == pytest.approx(0.25)
    assert values["joint_entropy"] == pytest.approx(2.0)
    assert values["joint_average"] == pytest.approx(2.5)
    assert values["correlation"] == pytest.approx(1.0)
    assert values["maximum_probability"] == pytest.approx(0.25)


def test_glcm_single_pixel_region_is_zero():
    region = np.zeros((5, 5), dtype=bool)
    region[2, 2] = True
    features = glcm_features(np.full((5, 5), 100, dtype=np.uint8), region, FeatureSpec())
    np.testing.assert_array_equal(features, np.zeros(len(GLCM_SLOTS)))


def test_position_features_are_image_relative():
    """Test that offsets are divided by image width and height."""
    tree = tree_reference(np.array([(0, 0), (100, 50)]), np.array([1.0, 1.0]), 100, 50)
    values = position_features(np.array([(50, 25)]), np.array([2.0]), ((40, 25), (60, 25)), tree)
    assert len(values) == 20
    np.testing.assert_allclose(values[:4], [0.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(values[4:6], [-0.1, 0.0])
    np.testing.assert_allclose(values[12:14], [-0.1, 0.0])


def test_extract_features_on_y_mask(y_mask, y_gray):
    """Test that every segment of a real graph gets a finite 70-slot vector."""
    graph = build_individual_graph(y_mask, y_gray, PipelineConfig(), "RAO", Y_ROOT)
    spec = FeatureSpec()
    featured = extract_features(graph, y_mask, y_gray, spec)
    matrix = featured.feature_matrix()
    assert matrix.shape == (graph.n, 70)
    assert np.all(np.isfinite(matrix))
    assert featured.layout_version == layout_version(spec)
    topology = family_slices(spec)["topology"]
    for node in featured.nodes:
        np.testing.assert_array_equal(node.features[topology], node.terminal_degrees)
    # the regions partition the mask
    assert matrix[:, 0].sum() == y_mask.foreground.sum()
    assert graph.nodes[0].features is None


def test_segment_regions_cover_the_mask(y_mask, y_gray):
    graph = build_individual_graph(y_mask, y_gray, PipelineConfig(), "RAO", Y_ROOT)
    regions = segment_regions(graph, y_mask)
    assert np.all(regions[y_mask.foreground] > 0)
    assert np.all(regions[~y_mask.foreground] == 0)
    assert set(np.unique(regions[y_mask.foreground]).tolist()) == {1, 2, 3}


def test_normalization_statistics():
    """Test the per-slot z-score with zero spread mapped to a unit divisor."""
    graphs = [labeled_tree(seed=s) for s in range(3)]
    for graph in graphs:
        for node in graph.nodes:
            node.features[3] = 2.0
    stats = NormalizationStats.fit(graphs)
    assert stats.layout_version == TEST_LAYOUT
    assert stats.std[3] == 1.0
    normalized = np.vstack([normalize_graph(g, stats).feature_matrix() for g in graphs])
    np.testing.assert_allclose(normalized.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(normalized[:, :3].std(axis=0), 1.0)
    np.testing.assert_array_equal(normalized[:, 3], 0.0)


def test_normalization_layout_checks():
    graphs = [labeled_tree(seed=0), labeled_tree(seed=1, layout="other/4d")]
    with pytest.raises(FeatureLayoutError):
        NormalizationStats.fit(graphs)
    with pytest.raises(FeatureLayoutError):
        NormalizationStats.fit([])
    stats = NormalizationStats.fit(graphs[:1])
    with pytest.raises(FeatureLayoutError):
        normalize(np.zeros(4), stats, "other/4d")
    with pytest.raises(FeatureLayoutError):
        normalize(np.zeros(3), stats, TEST_LAYOUT)


def _loop_levels(gray: np.ndarray, region: np.ndarray, levels: int) -> dict[tuple[int, int], int]:
    values = [float(gray[y, x]) for y, x in zip(*np.nonzero(region))]
    low, high = min(values), max(values)
    out = {}
    for y, x in zip(*np.nonzero(region)):
        if high == low:
            out[(int(y), int(x))] = 1
        else:
            out[(int(y), int(x))] = min(math.floor((float(gray[y, x]) - low) / (high - low) * levels), levels - 1) + 1
    return out


def _loop_statistics(p: dict[tuple[int, int], float], levels: int) -> list[float]:
    eps = np.spacing(1)
    grid = range(1, levels + 1)
    px = {i: sum(v for (a, _), v in p.items() if a == i) for i in grid}
    py = {j: sum(v for (_, b), v in p.items() if b == j) for j in grid}
    mu_x, mu_y = sum(i * px[i] for i in grid), sum(j * py[j] for j in grid)
    sigma_x = math.sqrt(sum((i - mu_x) ** 2 * px[i] for i in grid))
    sigma_y = math.sqrt(sum((j - mu_y) ** 2 * py[j] for j in grid))
    p_diff, p_sum = Counter(), Counter()
    for (i, j), v in p.items():
        p_diff[abs(i - j)] += v
        p_sum[i + j] += v
    diff_average = sum(k * v for k, v in p_diff.items())

    def entropy(values):
        return -sum(v * math.log2(v + eps) for v in values if v > 0)

    hx, hy, hxy = entropy(px.values()), entropy(py.values()), entropy(p.values())
    hxy1 = -sum(v * math.log2(px[i] * py[j] + eps) for (i, j), v in p.items())
    hxy2 = entropy(px[i] * py[j] for i in grid for j in grid)
    autocorrelation = sum(v * i * j for (i, j), v in p.items())

    rows = [i for i in grid if px[i] > 0]
    cols = [j for j in grid if py[j] > 0]
    if len(rows) < 2 or len(cols) < 2:
        mcc = 1.0
    else:
        q = np.zeros((len(rows), len(rows)))
        for r, i in enumerate(rows):
            for s, k in enumerate(rows):
                q[r, s] = sum(p.get((i, j), 0.0) * p.get((k, j), 0.0) / (px[i] * py[j]) for j in cols)
        second = sorted(np.real(np.linalg.eigvals(q)), reverse=True)[1]
        mcc = math.sqrt(max(second, 0.0))

    def over(weight):
        return sum(v * weight(i, j) for (i, j), v in p.items())

    spread = lambda i, j: i + j - mu_x - mu_y  # noqa: E731
    return [
        autocorrelation,
        mu_x,
        over(lambda i, j: spread(i, j) ** 4),
        over(lambda i, j: spread(i, j) ** 3),
        over(lambda i, j: spread(i, j) ** 2),
        over(lambda i, j: (i - j) ** 2),
        1.0 if sigma_x * sigma_y == 0 else (autocorrelation - mu_x * mu_y) / (sigma_x * sigma_y),
        diff_average,
        entropy(p_diff.values()),
        sum((k - diff_average) ** 2 * v for k, v in p_diff.items()),
        sum(v * v for v in p.values()),
        hxy,
        0.0 if max(hx, hy) == 0 else (hxy - hxy1) / max(hx, hy),
        math.sqrt(1.0 - math.exp(-2.0 * max(hxy2 - hxy, 0.0))),
        over(lambda i, j: 1.0 / (1.0 + (i - j) ** 2)),
        over(lambda i, j: 1.0 / (1.0 + (i - j) ** 2 / levels**2)),
        over(lambda i, j: 1.0 / (1.0 + abs(i - j))),
        over(lambda i, j: 1.0 / (1.0 + abs(i - j) / levels)),
        sum(v / k**2 for k, v in p_diff.items() if k > 0),
        max(p.values()),
        sum(k * v for k, v in p_sum.items()),
        entropy(p_sum.values()),
        over(lambda i, j: (i - mu_x) ** 2),
        mcc,
    ]


def _loop_glcm(gray: np.ndarray, region: np.ndarray, spec: FeatureSpec) -> np.ndarray:
    """Pair-by-pair co-occurrence texture, averaged over the offsets that yield pairs."""
    levels = _loop_levels(gray, region, spec.gray_levels)
    blocks = []
    for dx, dy in spec.glcm_offsets:
        counts = Counter()
        for (y, x), first in levels.items():
            second = levels.get((y + dy, x + dx))
            if second is not None:
                counts[(first, second)] += 1
                counts[(second, first)] += 1
        total = sum(counts.values())
        if total:
            blocks.append(_loop_statistics({k: v / total for k, v in counts.items()}, spec.gray_levels))
    if not blocks:
        return np.zeros(len(GLCM_SLOTS))
    return np.array([sum(column) / len(blocks) for column in zip(*blocks)])


def test_glcm_features_agree_with_pair_enumeration():
    """Test all texture statistics against a pair-by-pair computation on random patches."""
    rng = np.random.default_rng(17)
    spec = FeatureSpec()
    for _ in range(25):
        height, width = (int(v) for v in rng.integers(3, 17, size=2))
        gray = rng.integers(0, 256, size=(height, width)).astype(np.uint8)
        region = rng.random((height, width)) < 0.8
        region[height // 2, width // 2] = True
        expected = _loop_glcm(gray, region, spec)
        actual = glcm_features(gray, region, spec)
        # maximal correlation is a square root of an eigenvalue; compare the eigenvalue
        expected[-1], actual[-1] = expected[-1] ** 2, actual[-1] ** 2
        for slot, got, want in zip(GLCM_SLOTS, actual, expected):
            assert got == pytest.approx(want, rel=1e-9, abs=1e-9), slot
