"""First-order intensity statistics of a segment's artery region (radiomics definitions)."""

import numpy as np
from scipy import stats

from coronary_agmn.core.errors import StructuralError
from coronary_agmn.features.family_abc import AbstractFeatureFamily, SegmentContext

FIRST_ORDER_SLOTS = [
    "energy",
    "entropy",
    "minimum",
    "percentile_10",
    "percentile_90",
    "maximum",
    "mean",
    "median",
    "interquartile_range",
    "range",
    "mean_absolute_deviation",
    "robust_mean_absolute_deviation",
    "root_mean_squared",
    "skewness",
    "kurtosis",
    "variance",
    "uniformity",
    "total_energy",
]

_EPS = np.spacing(1)


def quantize(values: np.ndarray, levels: int) -> np.ndarray:
    """Range-relative binning into 1..levels; a constant input maps to level 1."""
    values = np.asarray(values, dtype=np.float64)
    low, high = values.min(), values.max()
    if high == low:
        return np.ones(values.shape, dtype=np.int64)
    bins = np.floor((values - low) / (high - low) * levels).astype(np.int64)
    return np.clip(bins, 0, levels - 1) + 1


def first_order_features(intensities: np.ndarray, gray_levels: int = 32, pixel_area: float = 1.0) -> np.ndarray:
    """The 18 first-order statistics in FIRST_ORDER_SLOTS order.

    Entropy and uniformity use the same gray_levels binning as the texture
    features. Skewness and kurtosis (non-excess) are 0 for a constant region.
    """
    x = np.asarray(intensities, dtype=np.float64).ravel()
    if x.size == 0:
        raise StructuralError("First-order statistics need a non-empty region")

    counts = np.bincount(quantize(x, gray_levels), minlength=gray_levels + 1)[1:]
    p = counts[counts > 0] / x.size
    entropy = max(0.0, float(-(p * np.log2(p + _EPS)).sum()))
    uniformity = float((p**2).sum())

    p10, p25, p50, p75, p90 = np.percentile(x, [10, 25, 50, 75, 90])
    mean = x.mean()
    variance = x.var()
    robust = x[(x >= p10) & (x <= p90)]
    robust_mad = float(np.abs(robust - robust.mean()).mean()) if robust.size else 0.0
    if variance > 0:
        skewness = float(stats.skew(x, bias=True))
        kurtosis = float(stats.kurtosis(x, fisher=False, bias=True))
    else:
        skewness = kurtosis = 0.0
    energy = float((x**2).sum())

    return np.array(
        [
            energy,
            entropy,
            x.min(),
            p10,
            p90,
            x.max(),
            mean,
            p50,
            p75 - p25,
            x.max() - x.min(),
            np.abs(x - mean).mean(),
            robust_mad,
            np.sqrt((x**2).mean()),
            skewness,
            kurtosis,
            variance,
            uniformity,
            energy * pixel_area,
        ],
        dtype=np.float64,
    )


class FirstOrderFamily(AbstractFeatureFamily):
    name = "first_order"

    @property
    def slot_names(self) -> list[str]:
        return list(FIRST_ORDER_SLOTS)

    def compute(self, context: SegmentContext) -> np.ndarray:
        return first_order_features(context.region_intensities, context.spec.gray_levels, context.pixel_spacing**2)
