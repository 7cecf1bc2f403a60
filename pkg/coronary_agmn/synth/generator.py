"""Synthetic left-coronary trees rendered as angiogram-like images, and the benchmark built from them.

A tree is an LMA that splits into LAD and LCX; diagonals leave the LAD and
obtuse marginals leave the LCX. Branches are quadratic Bezier curves drawn as
tapering tubes that are darker at their center than on their border.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import KDTree

from coronary_agmn.core.config import FeatureSpec, PipelineConfig, SynthConfig
from coronary_agmn.core.errors import AgmnError, DatasetError
from coronary_agmn.core.logging_config import get_logger
from coronary_agmn.features.extractor import extract_features
from coronary_agmn.graph.artery_graph import IndividualGraph, build_individual_graph, relabel_subclasses
from coronary_agmn.graph.labels import ArteryLabel, BaseClass
from coronary_agmn.imaging.pgm import BinaryMask, GrayImage, write_mask, write_pgm
from coronary_agmn.matching.dataset import MANIFEST_FILE, Dataset, Sample
from coronary_agmn.matching.runtime import ordered_map
from coronary_agmn.schemas.dataset import BranchTruth, DatasetManifest, ManifestEntry, TruthDocument
from coronary_agmn.schemas.graph import save_graph

logger = get_logger(__name__)

MIN_BENCHMARK_SIZE = 20
MARGIN = 8
RENDER_STEP = 0.5
TRUTH_STEP = 1.0
JUNCTION_EXCLUSION = 40.0
CLEARANCE = 4.0
SIDE_ANGLE = (35.0, 55.0)
SIDE_LENGTH = (70.0, 120.0)
SIDE_SPAN = (0.2, 0.85)
BEND = 0.12
SEED_ATTEMPTS = 10
SAMPLE_FILES = (("gray", "pgm"), ("mask", "pgm"), ("truth", "json"), ("graph", "json"))

# (start, end) radius in pixels at 0.3 mm spacing
RADII: dict[BaseClass, tuple[float, float]] = {
    BaseClass.LMA: (9.0, 8.0),
    BaseClass.LAD: (6.5, 4.0),
    BaseClass.LCX: (6.0, 4.0),
    BaseClass.D: (4.5, 3.5),
    BaseClass.OM: (4.5, 3.5),
}


@dataclass(frozen=True)
class ViewEnvelope:
    """Angle ranges in degrees, clockwise on screen from +x; lengths and positions in pixels of a 512 image."""

    ostium_x: tuple[float, float]
    ostium_y: tuple[float, float]
    lma_angle: tuple[float, float]
    lma_length: tuple[float, float]
    lad_angle: tuple[float, float]
    lad_length: tuple[float, float]
    lcx_angle: tuple[float, float]
    lcx_length: tuple[float, float]


VIEW_ENVELOPES: dict[str, ViewEnvelope] = {
    "RAO": ViewEnvelope((140, 180), (50, 80), (20, 40), (45, 60), (50, 62), (280, 330), (100, 120), (200, 250)),
    "LAO": ViewEnvelope((200, 240), (60, 90), (-10, 10), (40, 55), (70, 85), (260, 310), (135, 155), (170, 220)),
}


@dataclass
class Branch:
    label: BaseClass
    points: np.ndarray  # (m, 2) float (x, y), proximal first, RENDER_STEP apart
    radii: np.ndarray
    parent: Optional[int] = None

    @property
    def start(self) -> np.ndarray:
        return self.points[0]


@dataclass
class SynthSample:
    gray: GrayImage
    mask: BinaryMask
    truth: TruthDocument
    seed: int


def _uniform(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    return float(rng.uniform(bounds[0], bounds[1]))


def _direction(angle_deg: float) -> np.ndarray:
    theta = math.radians(angle_deg)
    return np.array([math.cos(theta), math.sin(theta)])


def _resample(points: np.ndarray, step: float) -> np.ndarray:
    """Points spaced `step` apart along the polyline, endpoints kept."""
    lengths = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(points, axis=0), axis=1))])
    stations = np.append(np.arange(0.0, lengths[-1], step), lengths[-1])
    return np.column_stack([np.interp(stations, lengths, points[:, 0]), np.interp(stations, lengths, points[:, 1])])


def quadratic_bezier(p0: np.ndarray, p1: np.ndarray, p2: np.ndarray, step: float = RENDER_STEP) -> np.ndarray:
    chord = float(np.linalg.norm(p2 - p0))
    t = np.linspace(0.0, 1.0, max(int(chord * 2 / step), 2))[:, None]
    curve = (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t**2 * p2
    return _resample(curve, step)


def _curved_branch(
    rng: np.random.Generator,
    label: BaseClass,
    start: np.ndarray,
    end: np.ndarray,
    radius_scale: float,
    parent: Optional[int] = None,
) -> Branch:
    chord = end - start
    normal = np.array([-chord[1], chord[0]]) / max(float(np.linalg.norm(chord)), 1e-9)
    control = (start + end) / 2 + normal * rng.uniform(-BEND, BEND) * float(np.linalg.norm(chord))
    points = quadratic_bezier(start, control, end)
    r0, r1 = RADII[label]
    radii = np.linspace(r0, r1, len(points)) * radius_scale
    return Branch(label, points, radii, parent)


def _side_fractions(rng: np.random.Generator, count: int, gap: float) -> Optional[list[float]]:
    for _ in range(50):
        fractions = np.sort(rng.uniform(SIDE_SPAN[0], SIDE_SPAN[1], count))
        if count < 2 or np.all(np.diff(fractions) >= gap):
            return fractions.tolist()
    return None


def _point_at(branch: Branch, fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Point and unit tangent at an arc-length fraction of the branch."""
    index = min(int(round(fraction * (len(branch.points) - 1))), len(branch.points) - 2)
    tangent = branch.points[index + 1] - branch.points[index]
    return branch.points[index], tangent / np.linalg.norm(tangent)


def _tangent_angle(tangent: np.ndarray) -> float:
    return math.degrees(math.atan2(tangent[1], tangent[0]))


def _add_side_branches(
    rng: np.random.Generator,
    branches: list[Branch],
    parent: int,
    label: BaseClass,
    count: int,
    side: int,
    cfg: SynthConfig,
    scale: float,
    radius_scale: float,
) -> bool:
    fractions = _side_fractions(rng, count, cfg.min_branch_gap)
    if fractions is None:
        return False
    for fraction in fractions:
        start, tangent = _point_at(branches[parent], fraction)
        angle = _tangent_angle(tangent) + side * _uniform(rng, SIDE_ANGLE)
        end = start + _direction(angle) * _uniform(rng, SIDE_LENGTH) * scale
        branches.append(_curved_branch(rng, label, start, end, radius_scale, parent))
    return True


def _inside(branches: list[Branch], size: int) -> bool:
    for branch in branches:
        low = branch.points - branch.radii[:, None]
        high = branch.points + branch.radii[:, None]
        if low.min() < MARGIN or high.max() > size - 1 - MARGIN:
            return False
    return True


def _clear_of_each_other(branches: list[Branch], skip: set[frozenset[int]]) -> bool:
    """No two branches come closer than their radii plus a clearance, away from the junctions they share."""
    for i in range(len(branches)):
        for j in range(i + 1, len(branches)):
            if frozenset((i, j)) in skip:
                continue
            a, b = branches[i].points, branches[j].points
            siblings = branches[i].parent is not None and branches[i].parent == branches[j].parent
            shares_junction = (
                branches[i].parent == j
                or branches[j].parent == i
                or (siblings and np.allclose(branches[i].start, branches[j].start))
            )
            if shares_junction:
                junctions = np.vstack([branches[i].start, branches[j].start])
                a = a[np.min(np.linalg.norm(a[:, None, :] - junctions[None], axis=2), axis=1) > JUNCTION_EXCLUSION]
                b = b[np.min(np.linalg.norm(b[:, None, :] - junctions[None], axis=2), axis=1) > JUNCTION_EXCLUSION]
                if len(a) == 0 or len(b) == 0:
                    continue
            distance, _ = KDTree(b).query(a)
            if float(distance.min()) <= branches[i].radii.max() + branches[j].radii.max() + CLEARANCE:
                return False
    return True


def _sample_tree(
    rng: np.random.Generator, view_tag: str, cfg: SynthConfig, inject_overlap: bool
) -> Optional[tuple[list[Branch], int, int]]:
    """One draw of the tree geometry, or None when it leaves the image or branches collide."""
    envelope = VIEW_ENVELOPES[view_tag]
    scale = cfg.image_size / 512
    radius_scale = _uniform(rng, (0.95, 1.05))
    ostium = np.array([_uniform(rng, envelope.ostium_x), _uniform(rng, envelope.ostium_y)]) * scale

    bifurcation = ostium + _direction(_uniform(rng, envelope.lma_angle)) * _uniform(rng, envelope.lma_length) * scale
    branches = [_curved_branch(rng, BaseClass.LMA, ostium, bifurcation, radius_scale)]
    for label, angle, length in (
        (BaseClass.LAD, envelope.lad_angle, envelope.lad_length),
        (BaseClass.LCX, envelope.lcx_angle, envelope.lcx_length),
    ):
        end = bifurcation + _direction(_uniform(rng, angle)) * _uniform(rng, length) * scale
        branches.append(_curved_branch(rng, label, bifurcation, end, radius_scale, parent=0))

    n_d = int(rng.integers(cfg.diagonals[0], cfg.diagonals[1] + 1))
    n_om = int(rng.integers(cfg.marginals[0], cfg.marginals[1] + 1))
    # diagonals run on the far side of the LAD from the LCX, marginals away from the LAD
    if not _add_side_branches(rng, branches, 1, BaseClass.D, n_d, -1, cfg, scale, radius_scale):
        return None
    if not _add_side_branches(rng, branches, 2, BaseClass.OM, n_om, +1, cfg, scale, radius_scale):
        return None

    skip: set[frozenset[int]] = set()
    if inject_overlap and n_om:
        crossing = next(i for i, b in enumerate(branches) if b.label == BaseClass.OM)
        target, _ = _point_at(branches[1], _uniform(rng, (0.55, 0.8)))
        start = branches[crossing].start
        heading = (target - start) / np.linalg.norm(target - start)
        end = target + heading * 35.0 * scale
        branches[crossing] = _curved_branch(rng, BaseClass.OM, start, end, radius_scale, parent=2)
        skip.add(frozenset((crossing, 1)))

    if not _inside(branches, cfg.image_size) or not _clear_of_each_other(branches, skip):
        return None
    return branches, n_d, n_om


def _render(
    branches: list[Branch], size: int, rng: np.random.Generator, cfg: SynthConfig
) -> tuple[np.ndarray, np.ndarray]:
    """(grayscale uint8, foreground bool): parabolic dark tube profile on a tilted bright background."""
    depth = np.zeros((size, size), dtype=np.float64)
    for branch in branches:
        for (x, y), r in zip(branch.points, branch.radii):
            x0, x1 = max(int(math.floor(x - r)), 0), min(int(math.ceil(x + r)) + 1, size)
            y0, y1 = max(int(math.floor(y - r)), 0), min(int(math.ceil(y + r)) + 1, size)
            yy, xx = np.mgrid[y0:y1, x0:x1]
            profile = 1.0 - ((xx - x) ** 2 + (yy - y) ** 2) / (r * r)
            np.maximum(depth[y0:y1, x0:x1], profile, out=depth[y0:y1, x0:x1])

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    center = (size - 1) / 2
    background = (
        _uniform(rng, (165.0, 195.0))
        + _uniform(rng, (-0.04, 0.04)) * (xx - center)
        + _uniform(rng, (-0.04, 0.04)) * (yy - center)
    )
    image = background - _uniform(rng, cfg.contrast) * depth + rng.normal(0.0, _uniform(rng, cfg.noise_std), depth.shape)
    return np.clip(np.rint(image), 0, 255).astype(np.uint8), depth > 0


def _truth_document(
    branches: list[Branch], seed: int, view_tag: str, cfg: SynthConfig, n_d: int, n_om: int, overlap: bool
) -> TruthDocument:
    records = []
    for branch in branches:
        points = _resample(branch.points, TRUTH_STEP)
        radii = np.interp(
            np.linspace(0, 1, len(points)), np.linspace(0, 1, len(branch.radii)), branch.radii
        )
        records.append(
            BranchTruth(
                label=branch.label.value,
                points=[(round(float(x), 3), round(float(y), 3)) for x, y in points],
                radii=[round(float(r), 3) for r in radii],
                parent=branch.parent,
            )
        )
    root = branches[0].start
    return TruthDocument(
        seed=seed,
        view_tag=view_tag,
        pixel_spacing=cfg.pixel_spacing,
        root=(int(round(root[0])), int(round(root[1]))),
        branches=records,
        expected_nodes=expected_node_count(n_d, n_om),
        overlap_injected=overlap,
    )


def expected_node_count(n_d: int, n_om: int) -> int:
    """LMA, LAD and LCX each split once per side branch, plus the side branches themselves."""
    return 3 + 2 * n_d + 2 * n_om


def generate(seed: int, view_tag: str, cfg: Optional[SynthConfig] = None) -> SynthSample:
    """Deterministic in `seed`; geometry is redrawn until it fits, at most `cfg.max_attempts` times."""
    cfg = cfg or SynthConfig()
    if view_tag not in VIEW_ENVELOPES:
        raise DatasetError(f"Unknown view style {view_tag!r}")
    rng = np.random.default_rng(seed)
    overlap = bool(rng.random() < cfg.overlap_fraction)
    for attempt in range(cfg.max_attempts):
        tree = _sample_tree(rng, view_tag, cfg, overlap)
        if tree is None:
            continue
        branches, n_d, n_om = tree
        gray, foreground = _render(branches, cfg.image_size, rng, cfg)
        if attempt:
            logger.debug(f"seed {seed}: geometry accepted after {attempt + 1} draws")
        return SynthSample(
            GrayImage(gray, cfg.pixel_spacing),
            BinaryMask(foreground),
            _truth_document(branches, seed, view_tag, cfg, n_d, n_om, overlap),
            seed,
        )
    raise DatasetError(f"seed {seed}: no valid {view_tag} geometry in {cfg.max_attempts} draws")


def transfer_labels(graph: IndividualGraph, truth: TruthDocument) -> IndividualGraph:
    """Each segment takes the branch label most of its centerline pixels are closest to, then sub-classes are renumbered."""
    points = np.vstack([np.asarray(b.points, dtype=np.float64) for b in truth.branches])
    owner = np.concatenate([np.full(len(b.points), index) for index, b in enumerate(truth.branches)])
    tree = KDTree(points)
    out = graph.copy()
    for node in out.nodes:
        pixels = node.pixels.reshape(-1, 2)
        if len(pixels) == 0:
            pixels = np.array(node.terminals)
        _, nearest = tree.query(pixels.astype(np.float64))
        counts = Counter(owner[np.atleast_1d(nearest)].tolist())
        branch = min(counts, key=lambda index: (-counts[index], index))
        node.label = ArteryLabel(BaseClass(truth.branches[branch].label))
    return relabel_subclasses(out)


def topology_matches(graph: IndividualGraph, truth: TruthDocument) -> bool:
    """Node count and per-class segment counts agree with the generated tree."""
    n_d = sum(1 for b in truth.branches if b.label == BaseClass.D)
    n_om = sum(1 for b in truth.branches if b.label == BaseClass.OM)
    expected = {BaseClass.LMA: 1, BaseClass.LAD: n_d + 1, BaseClass.LCX: n_om + 1, BaseClass.D: n_d, BaseClass.OM: n_om}
    found = Counter(node.label.base_class for node in graph.nodes)
    return graph.n == truth.expected_nodes and all(found[c] == count for c, count in expected.items())


def labeled_sample(
    name: str,
    seed: int,
    view_tag: str,
    synth_cfg: SynthConfig,
    pipeline_cfg: PipelineConfig,
    feature_spec: FeatureSpec,
) -> tuple[Sample, SynthSample]:
    """Generates, builds, labels and featurizes one sample, moving to the next seed when the pipeline rejects it."""
    for attempt in range(SEED_ATTEMPTS):
        attempt_seed = seed + attempt * 2**32
        synth = generate(attempt_seed, view_tag, synth_cfg)
        try:
            graph = build_individual_graph(synth.mask, synth.gray, pipeline_cfg, view_tag, synth.truth.root)
            graph = transfer_labels(graph, synth.truth)
            graph = extract_features(graph, synth.mask, synth.gray, feature_spec)
        except AgmnError as e:
            logger.warning(f"{name}: seed {attempt_seed} rejected by the graph pipeline: {e}")
            continue
        graph.provenance["synth"] = {"seed": attempt_seed, "view_tag": view_tag}
        ok = topology_matches(graph, synth.truth)
        if not ok:
            logger.warning(
                f"{name}: seed {attempt_seed} built {graph.n} segments, generator intended {synth.truth.expected_nodes}"
            )
        return Sample(name, graph, synth.mask, synth.gray, attempt_seed, ok, synth.truth), synth
    raise DatasetError(f"{name}: no usable sample after {SEED_ATTEMPTS} seeds starting at {seed}")


def make_benchmark(
    count: int,
    seed: int,
    synth_cfg: Optional[SynthConfig] = None,
    pipeline_cfg: Optional[PipelineConfig] = None,
    feature_spec: Optional[FeatureSpec] = None,
    threads: int = 1,
) -> Dataset:
    """Labeled dataset of `count` samples with raw features; about `lao_fraction` of them LAO-style."""
    if count < MIN_BENCHMARK_SIZE:
        raise DatasetError(f"A benchmark needs at least {MIN_BENCHMARK_SIZE} samples, got {count}")
    synth_cfg = synth_cfg or SynthConfig()
    pipeline_cfg = pipeline_cfg or PipelineConfig(pixel_spacing=synth_cfg.pixel_spacing)
    feature_spec = feature_spec or FeatureSpec()

    rng = np.random.default_rng(seed)
    n_lao = int(round(synth_cfg.lao_fraction * count))
    views = rng.permutation(np.array(["LAO"] * n_lao + ["RAO"] * (count - n_lao))).tolist()
    seeds = np.random.SeedSequence(seed).generate_state(count).tolist()

    jobs = [(f"sample_{index:04d}", int(seeds[index]), views[index]) for index in range(count)]
    results = ordered_map(
        lambda job: labeled_sample(job[0], job[1], job[2], synth_cfg, pipeline_cfg, feature_spec)[0], jobs, threads
    )
    mismatches = [s for s in results if not s.topology_ok]
    logger.info(
        f"Generated {count} samples ({n_lao} LAO, {count - n_lao} RAO); "
        f"{count - len(mismatches)}/{count} match their intended topology"
    )
    if mismatches:
        logger.info(f"Topology mismatches: {[(s.name, s.seed) for s in mismatches]}")
    return Dataset(results)


def write_benchmark(dataset: Dataset, out_dir: Path | str, seed: int) -> Path:
    """Writes every sample as PGM pair, truth and graph JSON, plus `manifest.json`; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for sample in dataset.samples:
        if sample.mask is None or sample.gray is None or sample.truth is None:
            raise DatasetError(f"{sample.name} has no images or ground truth to write")
        files = {kind: f"{sample.name}_{kind}.{ext}" for kind, ext in SAMPLE_FILES}
        write_pgm(out_dir / files["gray"], sample.gray.intensities)
        write_mask(out_dir / files["mask"], sample.mask)
        (out_dir / files["truth"]).write_text(sample.truth.model_dump_json(indent=2))
        save_graph(out_dir / files["graph"], sample.graph)
        entries.append(
            ManifestEntry(
                name=sample.name,
                view_tag=sample.view_tag,
                seed=sample.seed,
                pixel_spacing=sample.gray.pixel_spacing,
                topology_ok=sample.topology_ok,
                **files,
            )
        )
    manifest = DatasetManifest(count=len(entries), seed=seed, samples=entries)
    path = out_dir / MANIFEST_FILE
    path.write_text(manifest.model_dump_json(indent=2))
    logger.info(f"Wrote {len(entries)} samples to {out_dir}")
    return path
