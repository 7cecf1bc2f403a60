"""Random removal of endpoint-bearing segments, for measuring labeling robustness."""

from __future__ import annotations

import numpy as np

from coronary_agmn.core.errors import InputError
from coronary_agmn.core.logging_config import get_logger
from coronary_agmn.graph.artery_graph import IndividualGraph, SegmentNode

logger = get_logger(__name__)

ATTACK_LEVELS: tuple[float, ...] = (0.05, 0.075, 0.10, 0.125, 0.15, 0.175, 0.20)


def _remove_node(graph: IndividualGraph, victim: int) -> None:
    neighbors = graph.neighbors(victim)
    graph.edges = [(i, j) for i, j in graph.edges if victim not in (i, j)]
    if len(neighbors) > 1:
        # victim was a star hub: the thickest former neighbour takes its place
        hub = max(neighbors, key=lambda j: (graph.nodes[j].mean_diameter, -j))
        graph.edges.extend(tuple(sorted((hub, j))) for j in neighbors if j != hub)

    removed = graph.nodes[victim]
    for coord, degree in zip(removed.terminals, removed.terminal_degrees):
        if degree == 1:
            continue
        for node in graph.nodes:
            if node.id == victim:
                continue
            node.terminal_degrees = tuple(
                max(d - 1, 1) if c == coord else d for c, d in zip(node.terminals, node.terminal_degrees)
            )


def _reindex(graph: IndividualGraph, removed: set[int]) -> IndividualGraph:
    survivors = [node for node in graph.nodes if node.id not in removed]
    new_id = {node.id: index for index, node in enumerate(survivors)}
    nodes: list[SegmentNode] = []
    for node in survivors:
        node.id = new_id[node.id]
        nodes.append(node)
    graph.nodes = nodes
    graph.edges = sorted({tuple(sorted((new_id[i], new_id[j]))) for i, j in graph.edges})
    return graph


def corrupt(graph: IndividualGraph, removal_prob: float, rng: np.random.Generator) -> IndividualGraph:
    """Removes each leaf segment independently with probability `removal_prob`.

    Leaves are segments with an endpoint terminal. One draw is made per leaf in
    node order before any removal, so the outcome only depends on the seed. The
    last remaining node is never removed and the result stays connected.
    """
    if not 0.0 <= removal_prob <= 1.0:
        raise InputError(f"removal_prob must be within [0, 1], got {removal_prob}")
    out = graph.copy()
    leaves = [node.id for node in out.nodes if node.is_leaf_segment]
    draws = rng.random(len(leaves)) < removal_prob
    chosen = [leaf for leaf, hit in zip(leaves, draws) if hit]

    removed: set[int] = set()
    for victim in chosen:
        if out.n - len(removed) <= 1:
            break
        # node ids stay stable until the final reindex; detach instead of deleting
        _remove_node(out, victim)
        removed.add(victim)
    out = _reindex(out, removed)
    out.provenance = {**out.provenance, "attack": {"removal_prob": removal_prob, "removed": len(removed)}}
    if removed:
        out.validate()
    logger.debug(f"corrupt: removed {len(removed)}/{len(leaves)} leaf segments at p={removal_prob}")
    return out
