"""Individual-graph generation: the five cleanup rules and the node/edge switch.

Key-point graph functions copy their input and return the modified copy.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import networkx as nx
import numpy as np

from coronary_agmn.core.config import PipelineConfig
from coronary_agmn.core.errors import (
    DisconnectedGraphError,
    EmptyGraphError,
    LabelingError,
    StructuralError,
)
from coronary_agmn.core.logging_config import get_logger
from coronary_agmn.graph.labels import ArteryLabel, BaseClass
from coronary_agmn.imaging.pgm import BinaryMask, GrayImage
from coronary_agmn.imaging.skeleton import (
    CenterlineSegment,
    Coord,
    KeyPointSet,
    Skeleton,
    compute_radii,
    detect_keypoints,
    row_major_key,
    skeletonize,
    split_segments,
)

logger = get_logger(__name__)

VIEW_TAGS = ("LAO", "RAO")
DIAMETER_TOLERANCE = 1e-9


@dataclass
class KeyPointNode:
    id: int
    coord: Coord
    kind: str  # "bifurcation" or "endpoint", as detected on the raw skeleton
    radius: float


@dataclass
class KeyPointEdge:
    """A centerline segment between key points u and v; pixels run from u to v."""

    id: int
    u: int
    v: int
    segment: CenterlineSegment

    def other(self, node_id: int) -> int:
        return self.v if node_id == self.u else self.u


@dataclass
class KeyPointGraph:
    nodes: dict[int, KeyPointNode]
    edges: dict[int, KeyPointEdge]
    shape: tuple[int, int]

    @classmethod
    def from_segments(
        cls, segments: list[CenterlineSegment], keypoints: KeyPointSet, skeleton: Skeleton
    ) -> KeyPointGraph:
        """Nodes are the key points, edges the segments. Key points without a segment are dropped."""
        radius_image = skeleton.radius_image()
        node_ids: dict[Coord, int] = {}
        nodes: dict[int, KeyPointNode] = {}
        for node_id, coord in enumerate(keypoints.all_points()):
            node_ids[coord] = node_id
            nodes[node_id] = KeyPointNode(node_id, coord, keypoints.kind(coord) or "endpoint", float(radius_image[coord[1], coord[0]]))

        edges: dict[int, KeyPointEdge] = {}
        dropped = 0
        for segment in segments:
            if segment.flagged or len(segment.terminal_keypoints) != 2:
                dropped += 1
                continue
            first, second = segment.terminal_keypoints
            if first not in node_ids or second not in node_ids:
                raise StructuralError(f"Segment {segment.id} ends at a point that is not a key point")
            edges[segment.id] = KeyPointEdge(segment.id, node_ids[first], node_ids[second], segment)
        if dropped:
            logger.warning(f"Dropped {dropped} isolated centerline loops with no key point")

        graph = cls(nodes, edges, skeleton.shape)
        for node_id in [n for n in nodes if graph.degree(n) == 0]:
            del graph.nodes[node_id]
        return graph

    def copy(self) -> KeyPointGraph:
        return KeyPointGraph(
            {k: replace(n) for k, n in self.nodes.items()},
            {k: replace(e) for k, e in self.edges.items()},
            self.shape,
        )

    def incident(self, node_id: int) -> list[int]:
        return sorted(e.id for e in self.edges.values() if node_id in (e.u, e.v))

    def degree(self, node_id: int) -> int:
        # A self-loop contributes two incidences
        return sum((e.u == node_id) + (e.v == node_id) for e in self.edges.values())

    def degrees(self) -> dict[int, int]:
        counts: Counter[int] = Counter()
        for edge in self.edges.values():
            counts[edge.u] += 1
            counts[edge.v] += 1
        return {node_id: counts[node_id] for node_id in self.nodes}

    def to_networkx(self) -> nx.MultiGraph:
        graph = nx.MultiGraph()
        graph.add_nodes_from(sorted(self.nodes))
        for edge_id in sorted(self.edges):
            edge = self.edges[edge_id]
            graph.add_edge(edge.u, edge.v, key=edge_id)
        return graph


@dataclass
class SegmentNode:
    """One arterial segment of the individual graph.

    `terminals` are the (proximal, distal) key-point coordinates and `pixels` run
    from the proximal to the distal end, terminals excluded.
    """

    id: int
    pixels: np.ndarray
    radii: np.ndarray
    terminals: tuple[Coord, Coord]
    terminal_degrees: tuple[int, int]
    label: Optional[ArteryLabel] = None
    features: Optional[np.ndarray] = None

    @property
    def pixel_count(self) -> int:
        return int(len(self.pixels))

    @property
    def mean_diameter(self) -> float:
        return float(2.0 * self.radii.mean()) if len(self.radii) else 0.0

    @property
    def is_leaf_segment(self) -> bool:
        """True when one of the terminals is an endpoint of the vascular tree."""
        return 1 in self.terminal_degrees


@dataclass
class IndividualGraph:
    nodes: list[SegmentNode]
    edges: list[tuple[int, int]]
    image_shape: tuple[int, int]
    view_tag: Optional[str] = None
    provenance: dict[str, Any] = field(default_factory=dict)
    layout_version: Optional[str] = None

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def n_e(self) -> int:
        return len(self.edges)

    def copy(self) -> IndividualGraph:
        return IndividualGraph(
            [replace(node) for node in self.nodes],
            list(self.edges),
            self.image_shape,
            self.view_tag,
            dict(self.provenance),
            self.layout_version,
        )

    def neighbors(self, node_id: int) -> list[int]:
        return sorted({j for i, j in self.edges if i == node_id} | {i for i, j in self.edges if j == node_id})

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(self.edges)
        return graph

    def labels(self) -> list[Optional[ArteryLabel]]:
        return [node.label for node in self.nodes]

    def feature_matrix(self) -> np.ndarray:
        if any(node.features is None for node in self.nodes):
            raise StructuralError("Graph has nodes without features; run feature extraction first")
        return np.vstack([node.features for node in self.nodes]) if self.nodes else np.empty((0, 0))

    def validate(self) -> None:
        """Raises unless the graph is simple, connected and acyclic with ids 0..n-1."""
        if [node.id for node in self.nodes] != list(range(self.n)):
            raise StructuralError("Node ids must be 0..n-1 in order")
        if any(i == j for i, j in self.edges):
            raise StructuralError("Individual graph has a self-loop")
        if len({tuple(sorted(e)) for e in self.edges}) != len(self.edges):
            raise StructuralError("Individual graph has duplicate edges")
        if any(not (0 <= i < self.n and 0 <= j < self.n) for i, j in self.edges):
            raise StructuralError("Edge refers to an unknown node")
        if self.n == 0:
            raise EmptyGraphError("Individual graph has no nodes")
        if not nx.is_tree(self.to_networkx()):
            if not nx.is_connected(self.to_networkx()):
                raise DisconnectedGraphError("Individual graph is not connected")
            raise StructuralError("Individual graph contains a cycle")


def prune_small(segments: list[CenterlineSegment], cfg: PipelineConfig) -> list[CenterlineSegment]:
    """Removes capillaries (max diameter below T_d) and segments shorter than T_c pixels."""
    # 1.8 / 0.3 is 6.000000000000001
    kept = [s for s in segments if s.max_diameter >= cfg.T_d_pixels - DIAMETER_TOLERANCE and s.pixel_count >= cfg.T_c]
    logger.debug(
        f"prune_small: kept {len(kept)}/{len(segments)} segments "
        f"(T_d={cfg.T_d} mm = {cfg.T_d_pixels:.2f} px, T_c={cfg.T_c} px)"
    )
    if not kept:
        raise EmptyGraphError("Every centerline segment fell below the diameter or length threshold")
    return kept


def merge_splitting_points(kpg: KeyPointGraph, cfg: PipelineConfig) -> KeyPointGraph:
    """Merges bifurcation pairs closer than T_sp until none is left.

    The second point of the first qualifying pair (row-major order) is folded into
    the first; segments joining the two are absorbed.
    """
    graph = kpg.copy()
    merges = 0
    while True:
        pair = _closest_qualifying_pair(graph, cfg.T_sp)
        if pair is None:
            break
        keep, absorb = pair
        for edge_id in graph.incident(absorb):
            edge = graph.edges[edge_id]
            if {edge.u, edge.v} <= {keep, absorb}:
                del graph.edges[edge_id]
                continue
            if edge.u == absorb:
                edge.u = keep
            if edge.v == absorb:
                edge.v = keep
        del graph.nodes[absorb]
        merges += 1
    logger.debug(f"merge_splitting_points: {merges} merges, {len(graph.nodes)} key points left")
    return graph


def _closest_qualifying_pair(graph: KeyPointGraph, threshold: float) -> Optional[tuple[int, int]]:
    candidates = sorted(
        (n for n in graph.nodes.values() if n.kind == "bifurcation"),
        key=lambda n: (row_major_key(n.coord), n.id),
    )
    for k, first in enumerate(candidates):
        for second in candidates[k + 1 :]:
            if np.hypot(first.coord[0] - second.coord[0], first.coord[1] - second.coord[1]) < threshold:
                return first.id, second.id
    return None


def _cycle_edge_ids(graph: KeyPointGraph) -> Optional[list[int]]:
    self_loops = [e.id for e in graph.edges.values() if e.u == e.v]
    if self_loops:
        return [min(self_loops)]
    by_pair: dict[frozenset[int], list[int]] = {}
    for edge_id in sorted(graph.edges):
        edge = graph.edges[edge_id]
        by_pair.setdefault(frozenset((edge.u, edge.v)), []).append(edge_id)
    for pair in sorted(by_pair, key=lambda p: min(by_pair[p])):
        if len(by_pair[pair]) > 1:
            return by_pair[pair]

    simple = nx.Graph()
    simple.add_nodes_from(sorted(graph.nodes))
    for edge_id in sorted(graph.edges):
        edge = graph.edges[edge_id]
        simple.add_edge(edge.u, edge.v, id=edge_id)
    try:
        cycle = nx.find_cycle(simple)
    except nx.NetworkXNoCycle:
        return None
    return [simple.edges[u, v]["id"] for u, v in cycle]


def delete_cycles(kpg: KeyPointGraph) -> KeyPointGraph:
    """Repeatedly drops the thinnest (smallest mean diameter) segment of some cycle."""
    graph = kpg.copy()
    removed = 0
    while (cycle := _cycle_edge_ids(graph)) is not None:
        victim = min(cycle, key=lambda edge_id: (graph.edges[edge_id].segment.mean_diameter, edge_id))
        del graph.edges[victim]
        removed += 1
    logger.debug(f"delete_cycles: removed {removed} segments")
    return graph


def _oriented(edge: KeyPointEdge, start: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Pixels and radii of the edge walked away from `start`, plus the far node."""
    segment = edge.segment
    if edge.u == start:
        return segment.pixels, segment.radii, edge.v
    return segment.pixels[::-1], segment.radii[::-1], edge.u


def merge_degree_two(kpg: KeyPointGraph) -> KeyPointGraph:
    """Dissolves every degree-two key point into one segment joining its neighbours."""
    graph = kpg.copy()
    merged = 0
    while True:
        degrees = graph.degrees()
        middle = next(
            (n for n in sorted(graph.nodes) if degrees[n] == 2 and len(graph.incident(n)) == 2),
            None,
        )
        if middle is None:
            break
        first_id, second_id = graph.incident(middle)
        node = graph.nodes[middle]
        pixels_in, radii_in, head = _oriented(graph.edges[first_id], middle)
        pixels_out, radii_out, tail = _oriented(graph.edges[second_id], middle)
        # first segment is read towards the middle point
        pixels = np.vstack([pixels_in[::-1], np.array([node.coord]), pixels_out])
        radii = np.concatenate([radii_in[::-1], [node.radius], radii_out])
        new_id = min(first_id, second_id)
        segment = CenterlineSegment(
            pixels, radii, (graph.nodes[head].coord, graph.nodes[tail].coord), False, new_id
        )
        del graph.edges[first_id], graph.edges[second_id]
        graph.edges[new_id] = KeyPointEdge(new_id, head, tail, segment)
        del graph.nodes[middle]
        merged += 1
    logger.debug(f"merge_degree_two: dissolved {merged} key points")
    return graph


def _root_node(kpg: KeyPointGraph, degrees: dict[int, int], root: Optional[Coord]) -> int:
    if root is not None:
        return min(
            kpg.nodes.values(),
            key=lambda n: (np.hypot(n.coord[0] - root[0], n.coord[1] - root[1]), row_major_key(n.coord)),
        ).id
    leaf_edges = [e for e in kpg.edges.values() if degrees[e.u] == 1 or degrees[e.v] == 1]
    thickest = max(leaf_edges, key=lambda e: (e.segment.mean_diameter, -e.id))
    return thickest.u if degrees[thickest.u] == 1 else thickest.v


def to_line_graph(
    kpg: KeyPointGraph, root: Optional[Coord] = None, view_tag: Optional[str] = None
) -> IndividualGraph:
    """Switches nodes and edges: every segment becomes a node.

    At a key point joining d segments, the parent segment is linked to each of the
    d-1 others (star expansion). With `root` (the LMA origin) the parent is the
    segment leading towards the root; otherwise it is the one with the largest
    mean diameter.
    """
    if not kpg.edges:
        raise EmptyGraphError("Key-point graph has no segments")
    multigraph = kpg.to_networkx()
    multigraph.remove_nodes_from([n for n, d in multigraph.degree() if d == 0])
    components = nx.number_connected_components(multigraph)
    if components > 1:
        raise DisconnectedGraphError(f"Vascular tree has {components} disconnected components")
    simple = nx.Graph(multigraph)
    if nx.number_of_selfloops(multigraph) or simple.number_of_edges() != multigraph.number_of_edges():
        raise StructuralError("Key-point graph still has self-loops or parallel segments")
    if not nx.is_tree(simple):
        raise StructuralError("Key-point graph still contains a cycle")

    degrees = kpg.degrees()
    root_node = _root_node(kpg, degrees, root)
    parent_of = {child: parent for parent, child in nx.bfs_edges(simple, root_node, sort_neighbors=sorted)}
    edge_of = {frozenset((e.u, e.v)): e for e in kpg.edges.values()}

    # line edges tagged with the key point they come from
    line_edges: list[tuple[int, int, Coord]] = []
    for node_id in sorted(kpg.nodes):
        incident = kpg.incident(node_id)
        if len(incident) < 2:
            continue
        if root is not None and node_id in parent_of:
            parent = edge_of[frozenset((node_id, parent_of[node_id]))].id
        else:
            parent = max(incident, key=lambda e: (kpg.edges[e].segment.mean_diameter, -e))
        line_edges.extend((parent, child, kpg.nodes[node_id].coord) for child in incident if child != parent)

    root_segment = max(kpg.incident(root_node), key=lambda e: (kpg.edges[e].segment.mean_diameter, -e))
    adjacency: dict[int, list[tuple[tuple[int, int], int]]] = {e: [] for e in kpg.edges}
    for a, b, coord in line_edges:
        adjacency[a].append((row_major_key(coord), b))
        adjacency[b].append((row_major_key(coord), a))
    order: list[int] = []
    seen = {root_segment}
    queue = deque([root_segment])
    while queue:
        current = queue.popleft()
        order.append(current)
        for _, neighbor in sorted(adjacency[current]):
            if neighbor not in seen:
                seen.add(neighbor)
                queue.append(neighbor)
    index_of = {edge_id: index for index, edge_id in enumerate(order)}

    nodes: list[SegmentNode] = []
    for edge_id in order:
        edge = kpg.edges[edge_id]
        proximal = edge.u if parent_of.get(edge.v) == edge.u else edge.v
        pixels, radii, distal = _oriented(edge, proximal)
        nodes.append(
            SegmentNode(
                id=index_of[edge_id],
                pixels=np.array(pixels),
                radii=np.array(radii),
                terminals=(kpg.nodes[proximal].coord, kpg.nodes[distal].coord),
                terminal_degrees=(degrees[proximal], degrees[distal]),
            )
        )
    edges = sorted(tuple(sorted((index_of[a], index_of[b]))) for a, b, _ in line_edges)
    graph = IndividualGraph(nodes, edges, kpg.shape, view_tag)
    graph.validate()
    logger.debug(f"to_line_graph: {graph.n} segment nodes, {graph.n_e} edges")
    return graph


def build_individual_graph(
    mask: BinaryMask,
    gray: GrayImage,
    cfg: PipelineConfig,
    view_tag: Optional[str] = None,
    root: Optional[Coord] = None,
) -> IndividualGraph:
    """Mask and angiogram to individual graph, applying the cleanup rules in order.

    T_d is converted to pixels with the image's own spacing, so a resized image
    is pruned against its rescaled spacing.
    """
    mask.check_companion(gray)
    cfg = cfg.model_copy(update={"pixel_spacing": gray.pixel_spacing})
    skeleton = compute_radii(mask, skeletonize(mask))
    if len(skeleton) == 0:
        raise EmptyGraphError("Mask has no foreground to skeletonize")
    keypoints = detect_keypoints(skeleton)
    segments = split_segments(skeleton, keypoints)
    logger.debug(
        f"Skeleton: {len(skeleton)} points, {len(keypoints.bifurcations)} bifurcations, "
        f"{len(keypoints.endpoints)} endpoints, {len(segments)} segments"
    )
    kept = prune_small(segments, cfg)
    kpg = KeyPointGraph.from_segments(kept, keypoints, skeleton)
    kpg = merge_splitting_points(kpg, cfg)
    kpg = delete_cycles(kpg)
    kpg = merge_degree_two(kpg)
    graph = to_line_graph(kpg, root=root, view_tag=view_tag)
    graph.provenance["pipeline"] = cfg.model_dump()
    logger.info(f"Built individual graph: {graph.n} nodes, {graph.n_e} edges (view={view_tag})")
    return graph


def _shared_coord(first: SegmentNode, second: SegmentNode) -> Coord:
    shared = set(first.terminals) & set(second.terminals)
    return min(shared, key=row_major_key) if shared else second.terminals[0]


def relabel_subclasses(graph: IndividualGraph) -> IndividualGraph:
    """Renumbers sub-classes breadth-first from the LMA node (LAD1, LAD2, D1, ...).

    Children are visited in row-major order of the bifurcation they share with
    their parent. Counters are per base class over the whole tree, so every
    label is unique. LMA itself carries no sub-index.
    """
    if any(node.label is None for node in graph.nodes):
        raise LabelingError("Every node needs a base class before relabeling")
    roots = [node.id for node in graph.nodes if node.label.base_class == BaseClass.LMA]
    if len(roots) != 1:
        raise LabelingError(f"Expected exactly one LMA node, found {len(roots)}")

    out = graph.copy()
    counters: Counter[BaseClass] = Counter()
    seen = {roots[0]}
    queue = deque([roots[0]])
    while queue:
        current = out.nodes[queue.popleft()]
        base = current.label.base_class
        if base == BaseClass.LMA:
            current.label = ArteryLabel(base)
        else:
            counters[base] += 1
            current.label = ArteryLabel(base, counters[base])
        children = [j for j in out.neighbors(current.id) if j not in seen]
        children.sort(key=lambda j: (row_major_key(_shared_coord(current, out.nodes[j])), j))
        for child in children:
            seen.add(child)
            queue.append(child)
    if len(seen) != out.n:
        raise DisconnectedGraphError("Labeled graph is not connected to its LMA node")
    return out
