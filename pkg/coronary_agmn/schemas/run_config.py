from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from coronary_agmn.core.config import FeatureSpec, ModelConfig, PipelineConfig, SynthConfig, TrainConfig, settings
from coronary_agmn.core.errors import InputError
from coronary_agmn.core.logging_config import get_logger

logger = get_logger(__name__)

RUN_CONFIG_FILE = "run_config.json"


class RunConfig(BaseModel):
    """Effective configuration of one command; written next to every output."""

    model_config = ConfigDict(extra="forbid")

    seed: int = settings.DEFAULT_SEED
    threads: int = Field(settings.THREADS, ge=1)
    resize_to: Optional[int] = Field(
        settings.TARGET_IMAGE_SIZE, gt=0, description="Square size images are resized to; null keeps the input size."
    )
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)
    features: FeatureSpec = Field(default_factory=FeatureSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)

    data_dir: Optional[str] = None
    templates_dir: Optional[str] = None
    template_fraction: float = Field(0.15, gt=0, lt=1)
    folds: int = Field(5, ge=2)
    attack_levels: list[float] = Field(default_factory=lambda: [0.05, 0.075, 0.10, 0.125, 0.15, 0.175, 0.20])
    attack_seeds: int = Field(3, ge=1)
    synth: SynthConfig = Field(default_factory=SynthConfig)

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Applies non-None overrides; dotted keys reach into sections (`train.steps`)."""
        data = self.model_dump()
        for key, value in overrides.items():
            if value is None:
                continue
            target = data
            *parents, leaf = key.split(".")
            for parent in parents:
                target = target[parent]
            target[leaf] = value
        try:
            return RunConfig.model_validate(data)
        except ValidationError as e:
            raise InputError(f"Invalid configuration override: {e}") from e


def load_run_config(path: Optional[Path | str] = None) -> RunConfig:
    """Reads the JSON config at `path`, else at AGMN_DEFAULT_CONFIG_PATH, else the defaults."""
    path = path or settings.DEFAULT_CONFIG_PATH
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        config = RunConfig.model_validate_json(path.read_text())
    except OSError as e:
        raise InputError(f"Cannot read config {path}: {e}") from e
    except ValidationError as e:
        raise InputError(f"Invalid config {path}: {e}") from e
    logger.info(f"Loaded run configuration from {path}")
    return config


def write_run_config(out_dir: Path | str, config: RunConfig) -> Path:
    path = Path(out_dir) / RUN_CONFIG_FILE
    path.write_text(config.model_dump_json(indent=2))
    return path
