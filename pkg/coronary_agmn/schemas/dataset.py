from typing import Literal, Optional

from pydantic import BaseModel, Field

DATASET_SCHEMA_VERSION = "1"


class BranchTruth(BaseModel):
    label: str = Field(..., description="Base class of the rendered branch (LMA, LAD, LCX, D, OM).")
    points: list[tuple[float, float]] = Field(..., description="Sampled centerline polyline (x, y), proximal first.")
    radii: list[float]
    parent: Optional[int] = Field(None, description="Index of the branch this one leaves from.")


class TruthDocument(BaseModel):
    schema_version: Literal["1"] = DATASET_SCHEMA_VERSION
    seed: int
    view_tag: Literal["LAO", "RAO"]
    pixel_spacing: float
    root: tuple[int, int] = Field(..., description="Ostium of the LMA, (x, y).")
    branches: list[BranchTruth]
    expected_nodes: int
    overlap_injected: bool = False


class ManifestEntry(BaseModel):
    name: str
    view_tag: Literal["LAO", "RAO"]
    seed: int
    pixel_spacing: float = Field(0.3, gt=0)
    gray: str
    mask: str
    truth: str
    graph: str
    topology_ok: bool = Field(..., description="Built graph has the node count the generator intended.")


class DatasetManifest(BaseModel):
    schema_version: Literal["1"] = DATASET_SCHEMA_VERSION
    count: int
    seed: int
    samples: list[ManifestEntry]
