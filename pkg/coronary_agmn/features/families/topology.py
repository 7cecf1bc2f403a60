import numpy as np

from coronary_agmn.features.family_abc import AbstractFeatureFamily, SegmentContext


class TopologyFamily(AbstractFeatureFamily):
    """Degrees of the two terminal key points, proximal first."""

    name = "topology"

    @property
    def slot_names(self) -> list[str]:
        return ["proximal_degree", "distal_degree"]

    def compute(self, context: SegmentContext) -> np.ndarray:
        return np.array(context.node.terminal_degrees, dtype=np.float64)
