from typing import Literal, Optional

from pydantic import BaseModel, Field

LABELS_SCHEMA_VERSION = "1"


class VoteEntry(BaseModel):
    label: str
    votes: int = Field(..., ge=0)
    probability_sum: float


class NodeAssignment(BaseModel):
    node_id: int = Field(..., ge=0)
    label: str = Field(..., description="Winning sub-label, or UNASSIGNED when no template voted.")
    votes: list[VoteEntry]


class LabelAssignmentDocument(BaseModel):
    schema_version: Literal["1"] = LABELS_SCHEMA_VERSION
    graph: Optional[str] = Field(None, description="Source graph file.")
    view_tag: Optional[str] = None
    templates_used: int
    assignments: list[NodeAssignment]
