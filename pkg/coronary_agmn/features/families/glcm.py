"""Gray-level co-occurrence texture of a segment's artery region."""

import numpy as np

from coronary_agmn.core.config import FeatureSpec
from coronary_agmn.features.families.first_order import quantize
from coronary_agmn.features.family_abc import AbstractFeatureFamily, SegmentContext

GLCM_SLOTS = [
    "autocorrelation",
    "joint_average",
    "cluster_prominence",
    "cluster_shade",
    "cluster_tendency",
    "contrast",
    "correlation",
    "difference_average",
    "difference_entropy",
    "difference_variance",
    "joint_energy",
    "joint_entropy",
    "imc1",
    "imc2",
    "idm",
    "idmn",
    "id",
    "idn",
    "inverse_variance",
    "maximum_probability",
    "sum_average",
    "sum_entropy",
    "sum_squares",
    "mcc",
]

_EPS = np.spacing(1)


def quantized_levels(gray: np.ndarray, region: np.ndarray, levels: int) -> np.ndarray:
    """Level image with 1..levels inside the region (range of the region) and 0 outside."""
    out = np.zeros(gray.shape, dtype=np.int64)
    if region.any():
        out[region] = quantize(gray[region], levels)
    return out


def cooccurrence(level_image: np.ndarray, offset: tuple[int, int], levels: int) -> np.ndarray:
    """Symmetric pair counts for one (dx, dy) offset; only pairs with both pixels in the region."""
    dx, dy = offset
    height, width = level_image.shape
    counts = np.zeros((levels, levels), dtype=np.float64)
    y0, y1 = max(0, -dy), min(height, height - dy)
    x0, x1 = max(0, -dx), min(width, width - dx)
    if y0 >= y1 or x0 >= x1:
        return counts
    first = level_image[y0:y1, x0:x1]
    second = level_image[y0 + dy : y1 + dy, x0 + dx : x1 + dx]
    both = (first > 0) & (second > 0)
    np.add.at(counts, (first[both] - 1, second[both] - 1), 1.0)
    return counts + counts.T


def glcm_statistics(p: np.ndarray) -> np.ndarray:
    """The 24 statistics of one normalized co-occurrence matrix, in GLCM_SLOTS order."""
    levels = p.shape[0]
    i, j = np.meshgrid(np.arange(1, levels + 1, dtype=np.float64), np.arange(1, levels + 1, dtype=np.float64), indexing="ij")
    px, py = p.sum(axis=1), p.sum(axis=0)
    grid = np.arange(1, levels + 1, dtype=np.float64)
    mu_x, mu_y = float((grid * px).sum()), float((grid * py).sum())
    sigma_x = np.sqrt(float(((grid - mu_x) ** 2 * px).sum()))
    sigma_y = np.sqrt(float(((grid - mu_y) ** 2 * py).sum()))

    k_sum = np.arange(2, 2 * levels + 1)
    p_sum = np.bincount((i + j).astype(np.int64).ravel() - 2, weights=p.ravel(), minlength=2 * levels - 1)
    k_diff = np.arange(levels)
    p_diff = np.bincount(np.abs(i - j).astype(np.int64).ravel(), weights=p.ravel(), minlength=levels)

    hx = -float((px * np.log2(px + _EPS)).sum())
    hy = -float((py * np.log2(py + _EPS)).sum())
    hxy = -float((p * np.log2(p + _EPS)).sum())
    pxpy = np.outer(px, py)
    hxy1 = -float((p * np.log2(pxpy + _EPS)).sum())
    hxy2 = -float((pxpy * np.log2(pxpy + _EPS)).sum())

    spread = i + j - mu_x - mu_y
    diff_average = float((k_diff * p_diff).sum())
    correlation = 1.0 if sigma_x * sigma_y == 0 else float(((p * i * j).sum() - mu_x * mu_y) / (sigma_x * sigma_y))
    imc1 = 0.0 if max(hx, hy) == 0 else (hxy - hxy1) / max(hx, hy)
    imc2 = float(np.sqrt(1.0 - np.exp(-2.0 * max(hxy2 - hxy, 0.0))))

    return np.array(
        [
            (p * i * j).sum(),
            mu_x,
            (spread**4 * p).sum(),
            (spread**3 * p).sum(),
            (spread**2 * p).sum(),
            ((i - j) ** 2 * p).sum(),
            correlation,
            diff_average,
            -(p_diff * np.log2(p_diff + _EPS)).sum(),
            ((k_diff - diff_average) ** 2 * p_diff).sum(),
            (p**2).sum(),
            hxy,
            imc1,
            imc2,
            (p / (1.0 + (i - j) ** 2)).sum(),
            (p / (1.0 + (i - j) ** 2 / levels**2)).sum(),
            (p / (1.0 + np.abs(i - j))).sum(),
            (p / (1.0 + np.abs(i - j) / levels)).sum(),
            (p_diff[1:] / k_diff[1:] ** 2).sum(),
            p.max(),
            (k_sum * p_sum).sum(),
            -(p_sum * np.log2(p_sum + _EPS)).sum(),
            ((i - mu_x) ** 2 * p).sum(),
            _maximal_correlation(p, px, py),
        ],
        dtype=np.float64,
    )


def _maximal_correlation(p: np.ndarray, px: np.ndarray, py: np.ndarray) -> float:
    rows, cols = px > 0, py > 0
    if rows.sum() < 2 or cols.sum() < 2:
        return 1.0
    q_part = p[np.ix_(rows, cols)]
    q = (q_part / px[rows][:, None]) @ (q_part / py[cols][None, :]).T
    eigenvalues = np.sort(np.real(np.linalg.eigvals(q)))[::-1]
    return float(np.sqrt(max(eigenvalues[1], 0.0)))


def glcm_features(gray: np.ndarray, region: np.ndarray, spec: FeatureSpec) -> np.ndarray:
    """Mean of the per-offset statistics over the offsets that produced any pair.

    A region without any pixel pair (a single pixel) yields all zeros.
    """
    level_image = quantized_levels(gray, region, spec.gray_levels)
    blocks = []
    for offset in spec.glcm_offsets:
        counts = cooccurrence(level_image, offset, spec.gray_levels)
        total = counts.sum()
        if total > 0:
            blocks.append(glcm_statistics(counts / total))
    if not blocks:
        return np.zeros(len(GLCM_SLOTS), dtype=np.float64)
    return np.mean(blocks, axis=0)


class GlcmFamily(AbstractFeatureFamily):
    name = "glcm"

    @property
    def slot_names(self) -> list[str]:
        return list(GLCM_SLOTS)

    def compute(self, context: SegmentContext) -> np.ndarray:
        return glcm_features(context.gray, context.region_mask, context.spec)
