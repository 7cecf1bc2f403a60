"""JSON checkpoints: network weights, feature layout and the normalization statistics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ValidationError

from coronary_agmn.core.config import FeatureSpec, ModelConfig, TrainConfig
from coronary_agmn.core.errors import InputError
from coronary_agmn.core.logging_config import get_logger
from coronary_agmn.features.extractor import NormalizationStats
from coronary_agmn.matching.agmn import AgmnModel
from coronary_agmn.nn.tensor_nn import Adam, Mlp
from coronary_agmn.schemas.checkpoint import CheckpointDocument, MlpDocument, NormalizationDocument

logger = get_logger(__name__)


@dataclass
class TrainedMatcher:
    """Everything needed to label a new graph: the network plus how its inputs were prepared."""

    model: AgmnModel
    stats: NormalizationStats
    feature_spec: FeatureSpec
    train: Optional[TrainConfig] = None
    steps_done: int = 0
    seed: Optional[int] = None
    optimizer: Optional[Adam] = None


def _mlp_document(mlp: Mlp) -> MlpDocument:
    return MlpDocument(
        output=mlp.output,
        weights=[w.tolist() for w in mlp.weights],
        biases=[b.tolist() for b in mlp.biases],
    )


def _mlp_from_document(doc: MlpDocument) -> Mlp:
    return Mlp([np.array(w, dtype=np.float64) for w in doc.weights], [np.array(b, dtype=np.float64) for b in doc.biases], doc.output)


def to_document(matcher: TrainedMatcher) -> CheckpointDocument:
    model = matcher.model
    return CheckpointDocument(
        feature_dim=model.feature_dim,
        layout_version=matcher.stats.layout_version,
        model=ModelConfig(
            hidden=model.hidden,
            depth=model.f_emb_v.depth,
            n_mp=model.n_mp,
            share_steps=model.share_steps,
            pos_weight=model.pos_weight,
        ),
        features=matcher.feature_spec,
        normalization=NormalizationDocument(
            layout_version=matcher.stats.layout_version,
            mean=matcher.stats.mean.tolist(),
            std=matcher.stats.std.tolist(),
        ),
        mlps={name: _mlp_document(mlp) for name, mlp in model.modules().items()},
        train=matcher.train,
        steps_done=matcher.steps_done,
        seed=matcher.seed,
        optimizer=matcher.optimizer.state_dict() if matcher.optimizer is not None else None,
    )


def from_document(doc: CheckpointDocument) -> TrainedMatcher:
    mlps = {name: _mlp_from_document(m) for name, m in doc.mlps.items()}
    steps = 1 if doc.model.share_steps else doc.model.n_mp
    try:
        model = AgmnModel(
            f_emb_v=mlps["f_emb_v"],
            f_emb_e=mlps["f_emb_e"],
            phi_e=[mlps[f"phi_e.{k}"] for k in range(steps if doc.model.n_mp else 0)],
            phi_v=[mlps[f"phi_v.{k}"] for k in range(steps if doc.model.n_mp else 0)],
            phi_d=mlps["phi_d"],
            n_mp=doc.model.n_mp,
            share_steps=doc.model.share_steps,
            pos_weight=doc.model.pos_weight,
        )
    except KeyError as e:
        raise InputError(f"Checkpoint is missing MLP {e}") from e
    stats = NormalizationStats(
        np.array(doc.normalization.mean, dtype=np.float64),
        np.array(doc.normalization.std, dtype=np.float64),
        doc.normalization.layout_version,
    )
    optimizer = Adam.from_state_dict(doc.optimizer) if doc.optimizer else None
    return TrainedMatcher(model, stats, doc.features, doc.train, doc.steps_done, doc.seed, optimizer)


def save_checkpoint(path: Path | str, matcher: TrainedMatcher) -> Path:
    path = Path(path)
    path.write_text(to_document(matcher).model_dump_json())
    logger.info(f"Saved checkpoint to {path} ({matcher.steps_done} steps)")
    return path


def load_checkpoint(path: Path | str) -> TrainedMatcher:
    path = Path(path)
    try:
        doc = CheckpointDocument.model_validate_json(path.read_text())
    except OSError as e:
        raise InputError(f"Cannot read checkpoint {path}: {e}") from e
    except ValidationError as e:
        raise InputError(f"{path} is not a valid checkpoint: {e}") from e
    return from_document(doc)
