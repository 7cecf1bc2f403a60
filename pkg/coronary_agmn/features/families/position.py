import numpy as np

from coronary_agmn.features.family_abc import AbstractFeatureFamily, SegmentContext, TreeReference

_AXES = ("dx", "dy")
POSITION_SLOTS = (
    [f"centroid_vs_tree_{axis}" for axis in _AXES]
    + [f"weighted_centroid_vs_weighted_tree_{axis}" for axis in _AXES]
    + [
        f"{point}_vs_{ref}_{axis}"
        for point in ("proximal", "distal")
        for ref in ("tree", "weighted_tree")
        for axis in _AXES
    ]
    + [
        f"{point}_vs_{ref}_{axis}"
        for point in ("proximal", "distal")
        for ref in ("centroid", "weighted_centroid")
        for axis in _AXES
    ]
)


def weighted_centroid(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Sum(w * p) / Sum(w); falls back to the plain mean when the weights sum to zero."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size != len(points) or weights.sum() <= 0:
        return points.mean(axis=0)
    return (points * weights[:, None]).sum(axis=0) / weights.sum()


def tree_reference(all_points: np.ndarray, all_radii: np.ndarray, width: int, height: int) -> TreeReference:
    points = np.asarray(all_points, dtype=np.float64).reshape(-1, 2)
    return TreeReference(points.mean(axis=0), weighted_centroid(points, all_radii), width, height)


def position_features(
    pixels: np.ndarray, radii: np.ndarray, terminals: tuple, tree: TreeReference
) -> np.ndarray:
    """20 offsets normalized by image width (x) and height (y).

    4 segment centroid vs tree center (plain/plain, weighted/weighted),
    8 terminal key points vs both tree centers, 8 terminal key points vs both
    segment centroids. Weights are the centerline radii.
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    key_points = np.asarray(terminals, dtype=np.float64).reshape(2, 2)
    if len(pixels) == 0:
        pixels, radii = key_points, np.ones(2)
    scale = np.array([tree.width, tree.height], dtype=np.float64)
    centroid = pixels.mean(axis=0)
    weighted = weighted_centroid(pixels, radii)

    values = [(centroid - tree.center) / scale, (weighted - tree.weighted_center) / scale]
    for point in key_points:
        values += [(point - tree.center) / scale, (point - tree.weighted_center) / scale]
    for point in key_points:
        values += [(point - centroid) / scale, (point - weighted) / scale]
    return np.concatenate(values)


class PositionFamily(AbstractFeatureFamily):
    name = "position"

    @property
    def slot_names(self) -> list[str]:
        return list(POSITION_SLOTS)

    def compute(self, context: SegmentContext) -> np.ndarray:
        node = context.node
        return position_features(node.pixels, node.radii, node.terminals, context.tree)
