"""Assembles per-segment feature vectors and the z-score normalization around them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from coronary_agmn.core.config import FeatureSpec
from coronary_agmn.core.errors import FeatureLayoutError, StructuralError
from coronary_agmn.core.logging_config import get_logger
from coronary_agmn.features.families.basic import BasicPixelFamily
from coronary_agmn.features.families.first_order import FirstOrderFamily
from coronary_agmn.features.families.glcm import GlcmFamily
from coronary_agmn.features.families.position import PositionFamily, tree_reference
from coronary_agmn.features.families.topology import TopologyFamily
from coronary_agmn.features.family_abc import AbstractFeatureFamily, SegmentContext
from coronary_agmn.graph.artery_graph import IndividualGraph
from coronary_agmn.imaging.pgm import BinaryMask, GrayImage

logger = get_logger(__name__)


def get_feature_family(name: str) -> AbstractFeatureFamily:
    if name == "basic":
        return BasicPixelFamily()
    elif name == "first_order":
        return FirstOrderFamily()
    elif name == "glcm":
        return GlcmFamily()
    elif name == "position":
        return PositionFamily()
    elif name == "topology":
        return TopologyFamily()
    else:
        logger.error(f"Unsupported feature family: {name}")
        raise FeatureLayoutError(f"Unsupported feature family: {name}")


def feature_layout(spec: FeatureSpec) -> list[str]:
    """Slot names of the full vector, family by family."""
    return [f"{family}.{slot}" for family in spec.enabled_families for slot in get_feature_family(family).slot_names]


def layout_version(spec: FeatureSpec) -> str:
    """E.g. `seg-v1/basic+first_order+glcm+position+topology/70d/g32`."""
    width = len(feature_layout(spec))
    return f"seg-v1/{'+'.join(spec.enabled_families)}/{width}d/g{spec.gray_levels}"


def family_slices(spec: FeatureSpec) -> dict[str, slice]:
    slices, start = {}, 0
    for family in spec.enabled_families:
        width = get_feature_family(family).width
        slices[family] = slice(start, start + width)
        start += width
    return slices


def segment_regions(graph: IndividualGraph, mask: BinaryMask) -> np.ndarray:
    """Label image: every mask pixel gets 1 + the id of the segment with the nearest centerline pixel."""
    if (mask.height, mask.width) != tuple(graph.image_shape):
        raise StructuralError(f"Mask {(mask.height, mask.width)} does not match graph image {graph.image_shape}")
    seeds = np.zeros(graph.image_shape, dtype=np.int64)
    for node in graph.nodes:
        for x, y in node.pixels.reshape(-1, 2).tolist():
            seeds[y, x] = node.id + 1
    for node in graph.nodes:
        # zero-interior segments only own their terminals when nobody else does
        if node.pixel_count == 0:
            for x, y in node.terminals:
                if seeds[y, x] == 0:
                    seeds[y, x] = node.id + 1
    if not seeds.any():
        raise StructuralError("Graph has no centerline pixels to grow regions from")
    indices = ndi.distance_transform_edt(seeds == 0, return_distances=False, return_indices=True)
    nearest = seeds[indices[0], indices[1]]
    return np.where(mask.foreground, nearest, 0)


def extract_features(graph: IndividualGraph, mask: BinaryMask, gray: GrayImage, spec: FeatureSpec) -> IndividualGraph:
    """Returns a copy of the graph with a raw (unnormalized) feature vector on every node."""
    mask.check_companion(gray)
    families = [get_feature_family(name) for name in spec.enabled_families]
    regions = segment_regions(graph, mask)

    pixels = [node.pixels.reshape(-1, 2) for node in graph.nodes]
    radii = [node.radii for node in graph.nodes]
    if sum(len(p) for p in pixels):
        tree = tree_reference(np.vstack(pixels), np.concatenate(radii), gray.width, gray.height)
    else:
        terminals = np.array([t for node in graph.nodes for t in node.terminals], dtype=np.float64)
        tree = tree_reference(terminals, np.ones(len(terminals)), gray.width, gray.height)

    out = graph.copy()
    for node in out.nodes:
        region = regions == node.id + 1
        if not region.any():
            raise StructuralError(f"Segment {node.id} owns no mask pixels")
        context = SegmentContext(
            node=node,
            region_intensities=gray.intensities[region],
            region_mask=region,
            gray=gray.intensities,
            tree=tree,
            spec=spec,
            pixel_spacing=gray.pixel_spacing,
        )
        values = np.concatenate([family.compute(context) for family in families])
        if not np.all(np.isfinite(values)):
            raise StructuralError(f"Non-finite feature on segment {node.id}")
        node.features = values
    out.layout_version = layout_version(spec)
    logger.debug(f"Extracted {len(feature_layout(spec))}-dim features for {out.n} segments")
    return out


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray
    layout_version: str

    @classmethod
    def fit(cls, graphs: list[IndividualGraph]) -> NormalizationStats:
        """Per-feature mean and population std over every node of the given graphs; std 0 becomes 1."""
        if not graphs:
            raise FeatureLayoutError("Cannot fit normalization statistics on an empty graph set")
        versions = {g.layout_version for g in graphs}
        if len(versions) != 1 or None in versions:
            raise FeatureLayoutError(f"Graphs mix feature layouts: {sorted(map(str, versions))}")
        matrix = np.vstack([g.feature_matrix() for g in graphs])
        std = matrix.std(axis=0)
        std[std == 0] = 1.0
        return cls(matrix.mean(axis=0), std, versions.pop())


def normalize(values: np.ndarray, stats: NormalizationStats, layout: str) -> np.ndarray:
    if layout != stats.layout_version:
        raise FeatureLayoutError(f"Feature layout '{layout}' does not match statistics layout '{stats.layout_version}'")
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != stats.mean.shape[0]:
        raise FeatureLayoutError(f"Feature width {values.shape[-1]} does not match statistics width {stats.mean.shape[0]}")
    return (values - stats.mean) / stats.std


def normalize_graph(graph: IndividualGraph, stats: NormalizationStats) -> IndividualGraph:
    out = graph.copy()
    matrix = normalize(graph.feature_matrix(), stats, graph.layout_version or "")
    for node, row in zip(out.nodes, matrix):
        node.features = row
    return out
