from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from coronary_agmn.core.errors import InputError
from coronary_agmn.graph.artery_graph import IndividualGraph, SegmentNode
from coronary_agmn.graph.labels import ArteryLabel

GRAPH_SCHEMA_VERSION = "1"


class SegmentNodeDocument(BaseModel):
    id: int = Field(..., ge=0)
    pixels: list[tuple[int, int]] = Field(..., description="Interior centerline pixels (x, y), proximal to distal.")
    radii: list[float]
    terminals: tuple[tuple[int, int], tuple[int, int]] = Field(..., description="(proximal, distal) key points.")
    terminal_degrees: tuple[int, int]
    label: Optional[str] = None
    features: Optional[list[float]] = None


class IndividualGraphDocument(BaseModel):
    schema_version: Literal["1"] = GRAPH_SCHEMA_VERSION
    view_tag: Optional[Literal["LAO", "RAO"]] = None
    image_shape: tuple[int, int]
    layout_version: Optional[str] = None
    nodes: list[SegmentNodeDocument]
    edges: list[tuple[int, int]]
    provenance: dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def from_graph(cls, graph: IndividualGraph) -> "IndividualGraphDocument":
        return cls(
            view_tag=graph.view_tag,
            image_shape=graph.image_shape,
            layout_version=graph.layout_version,
            nodes=[
                SegmentNodeDocument(
                    id=node.id,
                    pixels=[tuple(p) for p in node.pixels.reshape(-1, 2).tolist()],
                    radii=node.radii.tolist(),
                    terminals=node.terminals,
                    terminal_degrees=node.terminal_degrees,
                    label=str(node.label) if node.label is not None else None,
                    features=node.features.tolist() if node.features is not None else None,
                )
                for node in graph.nodes
            ],
            edges=graph.edges,
            provenance=graph.provenance,
        )

    def to_graph(self) -> IndividualGraph:
        nodes = [
            SegmentNode(
                id=doc.id,
                pixels=np.array(doc.pixels, dtype=np.int64).reshape(-1, 2),
                radii=np.array(doc.radii, dtype=np.float64),
                terminals=(tuple(doc.terminals[0]), tuple(doc.terminals[1])),
                terminal_degrees=tuple(doc.terminal_degrees),
                label=ArteryLabel.parse(doc.label) if doc.label is not None else None,
                features=np.array(doc.features, dtype=np.float64) if doc.features is not None else None,
            )
            for doc in self.nodes
        ]
        graph = IndividualGraph(
            nodes,
            [tuple(sorted(e)) for e in self.edges],
            tuple(self.image_shape),
            self.view_tag,
            dict(self.provenance),
            self.layout_version,
        )
        graph.validate()
        return graph


def save_graph(path: Path | str, graph: IndividualGraph) -> Path:
    path = Path(path)
    path.write_text(IndividualGraphDocument.from_graph(graph).model_dump_json(indent=2))
    return path


def load_graph(path: Path | str) -> IndividualGraph:
    path = Path(path)
    try:
        return IndividualGraphDocument.model_validate_json(path.read_text()).to_graph()
    except OSError as e:
        raise InputError(f"Cannot read graph {path}: {e}") from e
    except ValidationError as e:
        raise InputError(f"{path} is not a valid graph document: {e}") from e
