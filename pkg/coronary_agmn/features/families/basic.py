import numpy as np

from coronary_agmn.features.family_abc import AbstractFeatureFamily, SegmentContext

BASIC_SLOTS = [
    "region_pixel_count",
    "centerline_length",
    "radius_std",
    "radius_mean",
    "radius_min",
    "radius_max",
]


def centerline_length(centerline: np.ndarray) -> float:
    """Sum of step lengths: 1 for orthogonal steps, sqrt(2) for diagonal ones."""
    if len(centerline) < 2:
        return 0.0
    steps = np.diff(np.asarray(centerline, dtype=np.float64), axis=0)
    return float(np.hypot(steps[:, 0], steps[:, 1]).sum())


def basic_pixel_features(centerline: np.ndarray, radii: np.ndarray, region_pixel_count: int) -> np.ndarray:
    radii = np.asarray(radii, dtype=np.float64)
    if radii.size:
        radius_stats = [radii.std(), radii.mean(), radii.min(), radii.max()]
    else:
        radius_stats = [0.0, 0.0, 0.0, 0.0]
    return np.array([float(region_pixel_count), centerline_length(centerline), *radius_stats], dtype=np.float64)


class BasicPixelFamily(AbstractFeatureFamily):
    name = "basic"

    @property
    def slot_names(self) -> list[str]:
        return list(BASIC_SLOTS)

    def compute(self, context: SegmentContext) -> np.ndarray:
        return basic_pixel_features(context.centerline, context.node.radii, int(context.region_mask.sum()))
