from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

from coronary_agmn.core.config import FeatureSpec, ModelConfig, TrainConfig

CHECKPOINT_SCHEMA_VERSION = "1"


class MlpDocument(BaseModel):
    output: Literal["identity", "sigmoid"] = "identity"
    weights: list[list[list[float]]] = Field(..., description="Per layer, (out, in) matrix rows.")
    biases: list[list[float]]


class NormalizationDocument(BaseModel):
    layout_version: str
    mean: list[float]
    std: list[float]


class CheckpointDocument(BaseModel):
    schema_version: Literal["1"] = CHECKPOINT_SCHEMA_VERSION
    feature_dim: int = Field(..., gt=0)
    layout_version: str
    model: ModelConfig
    features: FeatureSpec
    normalization: NormalizationDocument
    mlps: dict[str, MlpDocument]
    train: Optional[TrainConfig] = None
    steps_done: int = 0
    seed: Optional[int] = None
    optimizer: Optional[dict[str, Any]] = None
