"""Labeled graph collections on disk: a benchmark directory or a folder of graph documents."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from coronary_agmn.core.errors import DatasetError, InputError
from coronary_agmn.core.logging_config import get_logger
from coronary_agmn.graph.artery_graph import IndividualGraph
from coronary_agmn.imaging.pgm import BinaryMask, GrayImage, read_gray, read_mask
from coronary_agmn.schemas.dataset import DatasetManifest, TruthDocument
from coronary_agmn.schemas.graph import load_graph
from coronary_agmn.schemas.run_config import RUN_CONFIG_FILE

logger = get_logger(__name__)

MANIFEST_FILE = "manifest.json"


@dataclass
class Sample:
    name: str
    graph: IndividualGraph
    mask: Optional[BinaryMask] = None
    gray: Optional[GrayImage] = None
    seed: Optional[int] = None
    topology_ok: bool = True
    truth: Optional[TruthDocument] = None

    @property
    def view_tag(self) -> Optional[str]:
        return self.graph.view_tag


@dataclass
class Dataset:
    samples: list[Sample] = field(default_factory=list)
    root: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def graphs(self) -> list[IndividualGraph]:
        return [s.graph for s in self.samples]

    def by_view(self) -> dict[Optional[str], list[int]]:
        """Sample indices per view, in dataset order; views sorted by name."""
        views: dict[Optional[str], list[int]] = {}
        for index, sample in enumerate(self.samples):
            views.setdefault(sample.view_tag, []).append(index)
        return dict(sorted(views.items(), key=lambda item: str(item[0])))

    def subset(self, indices: Sequence[int]) -> Dataset:
        return Dataset([self.samples[i] for i in indices], self.root)

    def require_labels(self) -> None:
        for sample in self.samples:
            if any(node.label is None for node in sample.graph.nodes):
                raise DatasetError(f"Sample {sample.name} has unlabeled segments")


def read_manifest(root: Path | str) -> DatasetManifest:
    path = Path(root) / MANIFEST_FILE
    try:
        return DatasetManifest.model_validate_json(path.read_text())
    except OSError as e:
        raise InputError(f"Cannot read manifest {path}: {e}") from e
    except ValidationError as e:
        raise InputError(f"{path} is not a valid dataset manifest: {e}") from e


def load_dataset(root: Path | str, with_images: bool = True) -> Dataset:
    """Loads a benchmark directory written by `make_benchmark` (graphs with raw features)."""
    root = Path(root)
    manifest = read_manifest(root)
    samples = []
    for entry in manifest.samples:
        graph = load_graph(root / entry.graph)
        sample = Sample(entry.name, graph, seed=entry.seed, topology_ok=entry.topology_ok)
        if with_images:
            sample.mask = read_mask(root / entry.mask)
            sample.gray = read_gray(root / entry.gray, entry.pixel_spacing)
            sample.truth = _read_truth(root / entry.truth)
        samples.append(sample)
    logger.info(f"Loaded {len(samples)} samples from {root}")
    return Dataset(samples, root)


def load_graph_collection(path: Path | str) -> Dataset:
    """A benchmark directory when it has a manifest, otherwise every graph document in the folder."""
    path = Path(path)
    if (path / MANIFEST_FILE).exists():
        return load_dataset(path, with_images=False)
    if not path.is_dir():
        raise InputError(f"{path} is not a directory")
    files = sorted(p for p in path.glob("*.json") if p.name != RUN_CONFIG_FILE)
    if not files:
        raise DatasetError(f"No graph documents in {path}")
    return Dataset([Sample(p.stem, load_graph(p)) for p in files], path)


def _read_truth(path: Path) -> TruthDocument:
    try:
        return TruthDocument.model_validate_json(path.read_text())
    except OSError as e:
        raise InputError(f"Cannot read ground truth {path}: {e}") from e
    except ValidationError as e:
        raise InputError(f"{path} is not a valid ground-truth document: {e}") from e
