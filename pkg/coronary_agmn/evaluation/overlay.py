"""Colour overlay of labeled centerlines on the grayscale image."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path
from typing import Optional

import numpy as np
from skimage.morphology import dilation, disk

from coronary_agmn.core.errors import DimensionMismatchError
from coronary_agmn.graph.artery_graph import IndividualGraph
from coronary_agmn.graph.labels import UNASSIGNED, BaseClass, group_label_text
from coronary_agmn.imaging.pgm import GrayImage, write_ppm

CLASS_COLORS: dict[str, tuple[int, int, int]] = {
    BaseClass.LMA.value: (230, 25, 75),
    BaseClass.LAD.value: (60, 180, 75),
    BaseClass.LCX.value: (0, 130, 200),
    BaseClass.D.value: (255, 225, 25),
    BaseClass.OM.value: (240, 50, 230),
    UNASSIGNED: (255, 255, 255),
}


def render_overlay(
    gray: GrayImage, graph: IndividualGraph, labels: Optional[Sequence[str]] = None, thickness: int = 1
) -> np.ndarray:
    """RGB image; each segment's centerline is painted in its base-class colour.

    Without `labels` the graph's own labels are drawn.
    """
    if (gray.height, gray.width) != tuple(graph.image_shape):
        raise DimensionMismatchError(f"Image {(gray.height, gray.width)} does not match graph {graph.image_shape}")
    if labels is None:
        labels = [str(node.label) if node.label is not None else UNASSIGNED for node in graph.nodes]
    if len(labels) != graph.n:
        raise DimensionMismatchError(f"{len(labels)} labels for {graph.n} segments")

    rgb = np.repeat(gray.intensities[:, :, None], 3, axis=2).copy()
    footprint = disk(max(thickness - 1, 0))
    for node, label in zip(graph.nodes, labels):
        stroke = np.zeros(graph.image_shape, dtype=bool)
        points = np.vstack([node.pixels.reshape(-1, 2), np.array(node.terminals)])
        stroke[points[:, 1], points[:, 0]] = True
        if thickness > 1:
            stroke = dilation(stroke, footprint)
        rgb[stroke] = CLASS_COLORS[group_label_text(label)]
    return rgb


def write_overlay(
    path: Path | str, gray: GrayImage, graph: IndividualGraph, labels: Optional[Sequence[str]] = None
) -> Path:
    return write_ppm(path, render_overlay(gray, graph, labels))
