from pathlib import Path
from typing import Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    PROJECT_NAME: str = "Coronary AGMN"

    LOG_LEVEL: str = "INFO"
    LOG_JSON: bool = False  # JSONRenderer instead of the console renderer

    # Only environment hook for run configuration: where `--config` defaults to
    DEFAULT_CONFIG_PATH: Optional[str] = None

    THREADS: int = 1  # 1 keeps every run bit-exact
    DEFAULT_SEED: int = 7
    TARGET_IMAGE_SIZE: int = 512

    model_config = SettingsConfigDict(env_prefix="AGMN_", extra="ignore")


def load_environment(dotenv_path: Union[str, Path] = ".env") -> Settings:
    """Loads a dotenv file into the process environment and reads the settings from it.

    Variables already set in the environment win over the file.
    """
    load_dotenv(dotenv_path=dotenv_path, override=False)
    return Settings()


settings = load_environment()


class PipelineConfig(BaseModel):
    """Thresholds of the individual-graph generation rules."""

    model_config = ConfigDict(extra="forbid")

    T_d: float = Field(1.8, gt=0, description="Capillary diameter threshold (mm).")
    T_c: int = Field(15, gt=0, description="Minimum centerline length (pixels).")
    T_sp: float = Field(8.0, gt=0, description="Splitting-point merge distance (pixels).")
    pixel_spacing: float = Field(0.3, gt=0, description="Isotropic pixel spacing (mm/pixel).")

    @property
    def T_d_pixels(self) -> float:
        return self.T_d / self.pixel_spacing


FeatureFamilyName = Literal["basic", "first_order", "glcm", "position", "topology"]
ALL_FAMILIES: tuple[FeatureFamilyName, ...] = ("basic", "first_order", "glcm", "position", "topology")


class FeatureSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gray_levels: int = Field(32, ge=2, description="Quantization bins for texture statistics.")
    glcm_offsets: list[tuple[int, int]] = Field(
        default_factory=lambda: [(1, 0), (1, -1), (0, 1), (1, 1)],
        description="(dx, dy) co-occurrence offsets: 0, 45, 90 and 135 degrees.",
    )
    enabled_families: list[FeatureFamilyName] = Field(default_factory=lambda: list(ALL_FAMILIES))

    @field_validator("glcm_offsets")
    @classmethod
    def _offsets_nonempty(cls, value: list[tuple[int, int]]) -> list[tuple[int, int]]:
        if not value:
            raise ValueError("glcm_offsets must not be empty")
        if any(dx == 0 and dy == 0 for dx, dy in value):
            raise ValueError("glcm_offsets must not contain (0, 0)")
        return value

    @field_validator("enabled_families")
    @classmethod
    def _families_canonical(cls, value: list[FeatureFamilyName]) -> list[FeatureFamilyName]:
        if not value:
            raise ValueError("at least one feature family must be enabled")
        # Layout order is fixed regardless of how the families were listed
        return [family for family in ALL_FAMILIES if family in value]


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    steps: int = Field(5000, gt=0, description="Training steps (100,000 in the clinical setup).")
    batch_size: int = Field(32, gt=0)
    base_lr: float = Field(1e-4, gt=0)
    decay: float = Field(0.98, gt=0, le=1)
    decay_interval: int = Field(2000, gt=0)
    staircase: bool = True
    seed: int = 7
    log_every: int = Field(250, gt=0)


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden: int = Field(64, gt=0, description="Hidden width H of every MLP.")
    depth: int = Field(4, ge=1, description="Number of linear layers per MLP.")
    n_mp: int = Field(4, ge=0, description="Message-passing steps.")
    share_steps: bool = True
    pos_weight: float = Field(1.0, gt=0, description="Weight of positive vertices in the loss.")


class SynthConfig(BaseModel):
    """Ranges the synthetic tree generator samples from."""

    model_config = ConfigDict(extra="forbid")

    image_size: int = Field(512, ge=256)
    pixel_spacing: float = Field(0.3, gt=0)
    lao_fraction: float = Field(0.3, ge=0, le=1, description="Share of LAO-style samples in a benchmark.")
    diagonals: tuple[int, int] = Field((1, 3), description="Inclusive range of D branches on the LAD.")
    marginals: tuple[int, int] = Field((1, 3), description="Inclusive range of OM branches on the LCX.")
    min_branch_gap: float = Field(
        0.18, gt=0, lt=0.5, description="Spacing of side branches along their parent, as a fraction of its length."
    )
    contrast: tuple[float, float] = Field((70.0, 110.0), description="Darkening at the vessel center.")
    noise_std: tuple[float, float] = Field((3.0, 6.0))
    overlap_fraction: float = Field(0.0, ge=0, le=1, description="Share of samples with an injected LAD/OM crossing.")
    max_attempts: int = Field(25, gt=0, description="Geometry resamples before giving up on a seed.")

    @field_validator("diagonals", "marginals")
    @classmethod
    def _count_range(cls, value: tuple[int, int]) -> tuple[int, int]:
        low, high = value
        if low < 0 or high < low:
            raise ValueError(f"invalid branch count range {value}")
        return value
