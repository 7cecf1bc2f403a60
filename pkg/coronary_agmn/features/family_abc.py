from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from coronary_agmn.core.config import FeatureSpec
from coronary_agmn.graph.artery_graph import SegmentNode


@dataclass(frozen=True)
class TreeReference:
    """Whole-tree quantities shared by every segment of one graph."""

    center: np.ndarray  # unweighted centroid of all centerline points, (x, y)
    weighted_center: np.ndarray  # radius-weighted centroid
    width: int
    height: int


@dataclass(frozen=True)
class SegmentContext:
    node: SegmentNode
    region_intensities: np.ndarray  # grayscale values of the segment's artery region
    region_mask: np.ndarray  # bool, full image size
    gray: np.ndarray  # full grayscale image, uint8
    tree: TreeReference
    spec: FeatureSpec
    pixel_spacing: float

    @property
    def centerline(self) -> np.ndarray:
        """Proximal terminal, interior pixels, distal terminal, as (x, y) rows."""
        proximal, distal = self.node.terminals
        return np.vstack([np.array([proximal]), self.node.pixels.reshape(-1, 2), np.array([distal])]).astype(np.float64)


class AbstractFeatureFamily(ABC):
    """
    One block of consecutive slots in the segment feature vector.
    Concrete families live in `coronary_agmn.features.families`.
    """

    name: str

    @property
    @abstractmethod
    def slot_names(self) -> list[str]:
        """Names of the slots this family fills, in vector order."""
        pass

    @property
    def width(self) -> int:
        return len(self.slot_names)

    @abstractmethod
    def compute(self, context: SegmentContext) -> np.ndarray:
        """
        Computes this family's block for one segment.

        Returns:
            A finite float vector of length `width`.
        """
        pass
