"""Shared builders for masks, segments and small labeled graphs."""

from typing import Optional

import numpy as np
import pytest
from skimage import draw

from coronary_agmn.graph.artery_graph import IndividualGraph, SegmentNode
from coronary_agmn.graph.labels import ArteryLabel
from coronary_agmn.imaging.pgm import BinaryMask, GrayImage
from coronary_agmn.imaging.skeleton import CenterlineSegment

TEST_LAYOUT = "test/4d"

# (label, proximal, distal, terminal degrees, radius) of a small left tree
TREE_NODES = [
    ("LMA", (10, 10), (20, 20), (1, 3), 4.5),
    ("LAD1", (20, 20), (30, 40), (3, 3), 4.0),
    ("LCX1", (20, 20), (40, 25), (3, 1), 3.5),
    ("D1", (30, 40), (20, 60), (3, 1), 2.5),
    ("LAD2", (30, 40), (35, 70), (3, 1), 3.0),
]
TREE_EDGES = [(0, 1), (0, 2), (1, 3), (1, 4)]


def line_pixels(start: tuple[int, int], end: tuple[int, int]) -> np.ndarray:
    """Pixels strictly between two (x, y) points, start side first."""
    rr, cc = draw.line(start[1], start[0], end[1], end[0])
    return np.column_stack([cc, rr])[1:-1]


def make_segment(
    start: tuple[int, int], end: tuple[int, int], radius: float = 4.0, segment_id: int = 0
) -> CenterlineSegment:
    pixels = line_pixels(start, end)
    return CenterlineSegment(pixels, np.full(len(pixels), radius), (start, end), id=segment_id)


def stamp_tubes(shape: tuple[int, int], polylines: list[list[tuple[int, int]]], radius: float) -> BinaryMask:
    """Mask of disks stamped along every polyline."""
    foreground = np.zeros(shape, dtype=bool)
    for polyline in polylines:
        for start, end in zip(polyline[:-1], polyline[1:]):
            rr, cc = draw.line(start[1], start[0], end[1], end[0])
            for y, x in zip(rr, cc):
                disk_rr, disk_cc = draw.disk((y, x), radius, shape=shape)
                foreground[disk_rr, disk_cc] = True
    return BinaryMask(foreground)


def gray_from_mask(mask: BinaryMask, vessel: int = 80, background: int = 200) -> GrayImage:
    ramp = np.linspace(0, 20, mask.width)[None, :]
    values = np.where(mask.foreground, vessel, background) + ramp
    return GrayImage(np.clip(values, 0, 255).astype(np.uint8), 0.3)


def labeled_tree(
    feature_dim: int = 4,
    seed: int = 0,
    view_tag: Optional[str] = "RAO",
    layout: Optional[str] = TEST_LAYOUT,
    labeled: bool = True,
) -> IndividualGraph:
    rng = np.random.default_rng(seed)
    nodes = []
    for node_id, (label, proximal, distal, degrees, radius) in enumerate(TREE_NODES):
        pixels = line_pixels(proximal, distal)
        nodes.append(
            SegmentNode(
                id=node_id,
                pixels=pixels,
                radii=np.full(len(pixels), radius),
                terminals=(proximal, distal),
                terminal_degrees=degrees,
                label=ArteryLabel.parse(label) if labeled else None,
                features=rng.normal(size=feature_dim) if feature_dim else None,
            )
        )
    return IndividualGraph(nodes, list(TREE_EDGES), (80, 80), view_tag, {}, layout)


def random_tree(rng: np.random.Generator, n: int, feature_dim: int = 2, view_tag: Optional[str] = "RAO") -> IndividualGraph:
    """Unlabeled random tree of `n` pixel-less segments with normal features."""
    edges = [(int(rng.integers(k)), k) for k in range(1, n)]
    nodes = [
        SegmentNode(
            id=k,
            pixels=np.empty((0, 2), dtype=np.int64),
            radii=np.empty(0),
            terminals=((k, 0), (k, 1)),
            terminal_degrees=(1, 1),
            features=rng.normal(size=feature_dim),
        )
        for k in range(n)
    ]
    return IndividualGraph(nodes, edges, (80, 80), view_tag, {}, TEST_LAYOUT)


Y_ROOT = (128, 30)


@pytest.fixture
def y_mask() -> BinaryMask:
    """Trunk from the top splitting into two arms."""
    return stamp_tubes((256, 256), [[Y_ROOT, (128, 120), (70, 220)], [(128, 120), (186, 220)]], 6)


@pytest.fixture
def y_gray(y_mask: BinaryMask) -> GrayImage:
    return gray_from_mask(y_mask)


@pytest.fixture
def tree() -> IndividualGraph:
    return labeled_tree()


class DiagonalModel:
    """Stands in for a trained network: node i of the first graph matches node i of the second."""

    def predict(self, ag):
        return np.eye(ag.n1, ag.n2) * 0.8 + 0.1
