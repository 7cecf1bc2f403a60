"""Association graph of two individual graphs and the ground-truth match matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from coronary_agmn.core.errors import DimensionMismatchError, LabelingError, StructuralError
from coronary_agmn.graph.artery_graph import IndividualGraph


@dataclass(frozen=True)
class AssociationGraph:
    """Vertex i*n2 + a stands for the candidate correspondence (i in G1, a in G2).

    Every pair of source edges (i, j) in E1 and (a, b) in E2 yields two
    association edges, (ia, jb) and (ib, ja). Source edges are taken with the
    lower node id first, and edge features are [x_i, x_j, x_a, x_b] in the
    order the endpoints are stored.
    """

    n1: int
    n2: int
    vertex_features: np.ndarray  # (n1*n2, 2d)
    src: np.ndarray  # (E,) vertex ids
    dst: np.ndarray
    edge_features: np.ndarray  # (E, 4d)

    @property
    def n_vertices(self) -> int:
        return self.n1 * self.n2

    @property
    def n_edges(self) -> int:
        return int(len(self.src))

    def vertex(self, i: int, a: int) -> int:
        return i * self.n2 + a

    def incident_edges(self, vertex: int) -> np.ndarray:
        return np.flatnonzero((self.src == vertex) | (self.dst == vertex))


@dataclass(frozen=True)
class AssociationBatch:
    """Disjoint union of association graphs; vertex ids are offset per pair."""

    vertex_features: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    edge_features: np.ndarray
    vertex_offsets: np.ndarray  # (pairs + 1,)
    shapes: list[tuple[int, int]]

    @property
    def n_vertices(self) -> int:
        return int(self.vertex_offsets[-1])

    def pair_slice(self, k: int) -> slice:
        return slice(int(self.vertex_offsets[k]), int(self.vertex_offsets[k + 1]))


def _sorted_edges(graph: IndividualGraph) -> np.ndarray:
    edges = np.array(sorted(tuple(sorted(e)) for e in graph.edges), dtype=np.int64)
    return edges.reshape(-1, 2)


def build_association(g1: IndividualGraph, g2: IndividualGraph) -> AssociationGraph:
    if g1.n > g2.n:
        raise StructuralError(f"First graph must be the smaller one ({g1.n} > {g2.n}); swap the pair")
    x1, x2 = g1.feature_matrix(), g2.feature_matrix()
    if x1.shape[1] != x2.shape[1]:
        raise DimensionMismatchError(f"Feature widths differ: {x1.shape[1]} vs {x2.shape[1]}")
    n1, n2, d = g1.n, g2.n, x1.shape[1]

    vertex_features = np.hstack([np.repeat(x1, n2, axis=0), np.tile(x2, (n1, 1))])

    e1, e2 = _sorted_edges(g1), _sorted_edges(g2)
    if len(e1) and len(e2):
        p, q = np.meshgrid(np.arange(len(e1)), np.arange(len(e2)), indexing="ij")
        p, q = p.ravel(), q.ravel()
        i, j = e1[p, 0], e1[p, 1]
        a, b = e2[q, 0], e2[q, 1]
        src = np.concatenate([i * n2 + a, i * n2 + b])
        dst = np.concatenate([j * n2 + b, j * n2 + a])
        edge_features = np.vstack(
            [
                np.hstack([x1[i], x1[j], x2[a], x2[b]]),
                np.hstack([x1[i], x1[j], x2[b], x2[a]]),
            ]
        )
    else:
        src = dst = np.empty(0, dtype=np.int64)
        edge_features = np.empty((0, 4 * d))
    return AssociationGraph(n1, n2, vertex_features, src, dst, edge_features)


def stack_associations(graphs: list[AssociationGraph]) -> AssociationBatch:
    offsets = np.concatenate([[0], np.cumsum([g.n_vertices for g in graphs])]).astype(np.int64)
    return AssociationBatch(
        vertex_features=np.vstack([g.vertex_features for g in graphs]),
        src=np.concatenate([g.src + off for g, off in zip(graphs, offsets)]).astype(np.int64),
        dst=np.concatenate([g.dst + off for g, off in zip(graphs, offsets)]).astype(np.int64),
        edge_features=np.vstack([g.edge_features for g in graphs]),
        vertex_offsets=offsets,
        shapes=[(g.n1, g.n2) for g in graphs],
    )


def _label_texts(graph: IndividualGraph) -> list[str]:
    if any(node.label is None for node in graph.nodes):
        raise LabelingError("Ground truth needs a label on every node")
    texts = [str(node.label) for node in graph.nodes]
    duplicates = sorted({t for t in texts if texts.count(t) > 1})
    if duplicates:
        raise LabelingError(f"Duplicate labels {duplicates}; relabel sub-classes first")
    return texts


def ground_truth(g1: IndividualGraph, g2: IndividualGraph) -> np.ndarray:
    """y[i, a] = 1 iff node i of g1 and node a of g2 carry the same full label."""
    labels1, labels2 = _label_texts(g1), _label_texts(g2)
    return (np.array(labels1, dtype=object)[:, None] == np.array(labels2, dtype=object)[None, :]).astype(np.int64)
