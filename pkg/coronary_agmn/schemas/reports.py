from typing import Literal, Optional

from pydantic import BaseModel, Field

REPORT_SCHEMA_VERSION = "1"


class ClassMetrics(BaseModel):
    label: str
    support: int = Field(..., ge=0)
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float = Field(..., ge=0.0, le=1.0)
    precision: float = Field(..., ge=0.0, le=1.0)
    recall: float = Field(..., ge=0.0, le=1.0)
    f1: float = Field(..., ge=0.0, le=1.0)


class MetricsReport(BaseModel):
    """Per-class and support-weighted metrics of one evaluation (a fold, a seed, a level)."""

    fold: Optional[str] = None
    n: int = Field(..., ge=0)
    classes: list[ClassMetrics]
    accuracy: float = Field(..., ge=0.0, le=1.0, description="Support-weighted per-class accuracy.")
    precision: float = Field(..., ge=0.0, le=1.0)
    recall: float = Field(..., ge=0.0, le=1.0)
    f1: float = Field(..., ge=0.0, le=1.0)
    plain_accuracy: float = Field(..., ge=0.0, le=1.0, description="Fraction of segments labeled correctly.")

    def class_metrics(self, label: str) -> ClassMetrics:
        return next(c for c in self.classes if c.label == label)


class MetricSummary(BaseModel):
    mean: float
    std: float


class CrossValidationReport(BaseModel):
    schema_version: Literal["1"] = REPORT_SCHEMA_VERSION
    template_fraction: float
    hidden: int
    depth: int
    n_mp: int
    seed: int
    folds: list[MetricsReport]
    summary: dict[str, MetricSummary]


class FeatureImportanceEntry(BaseModel):
    name: str
    indices: list[int]
    accuracy: float
    delta: float = Field(..., description="Baseline weighted ACC minus ACC with these features zeroed.")


class FeatureImportanceReport(BaseModel):
    schema_version: Literal["1"] = REPORT_SCHEMA_VERSION
    baseline_accuracy: float
    entries: list[FeatureImportanceEntry] = Field(..., description="Ranked by delta, largest first.")


class AttackLevelResult(BaseModel):
    level: float = Field(..., ge=0.0, le=1.0)
    accuracy: MetricSummary
    precision: MetricSummary
    recall: MetricSummary
    f1: MetricSummary
    removed_segments: float = Field(..., description="Mean number of segments removed per graph.")


class AttackReport(BaseModel):
    schema_version: Literal["1"] = REPORT_SCHEMA_VERSION
    seeds: list[int]
    baseline: MetricsReport
    levels: list[AttackLevelResult]
    spearman_rho: Optional[float] = Field(None, description="Rank correlation of mean ACC with the level.")
