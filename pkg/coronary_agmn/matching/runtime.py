"""Training on same-view pairs, template voting at test time and a brute-force matcher."""

from __future__ import annotations

import csv
import itertools
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, TypeVar

import numpy as np

from coronary_agmn.core.config import FeatureSpec, ModelConfig, TrainConfig
from coronary_agmn.core.errors import DatasetError, LabelingError, MatchSizeError, NumericalError
from coronary_agmn.core.logging_config import get_logger
from coronary_agmn.features.extractor import NormalizationStats, normalize_graph
from coronary_agmn.graph.artery_graph import IndividualGraph
from coronary_agmn.graph.labels import UNASSIGNED
from coronary_agmn.matching.agmn import AgmnModel, vote
from coronary_agmn.matching.association import AssociationGraph, build_association, ground_truth, stack_associations
from coronary_agmn.matching.checkpoint import TrainedMatcher
from coronary_agmn.nn.tensor_nn import Adam, LrSchedule, lr_at
from coronary_agmn.schemas.labels import LabelAssignmentDocument, NodeAssignment, VoteEntry

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")

MAX_BRUTE_FORCE_ROWS = 8
MAX_BRUTE_FORCE_COLUMNS = 8


def ordered_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """map() that may run on a thread pool; results always come back in input order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class PairSampler:
    """Uniform draws over unordered same-view pairs of distinct graphs."""

    def __init__(self, graphs: Sequence[IndividualGraph]):
        self.graphs = list(graphs)
        by_view: dict[Optional[str], list[int]] = {}
        for index, graph in enumerate(self.graphs):
            by_view.setdefault(graph.view_tag, []).append(index)
        self.pairs = [pair for members in by_view.values() for pair in itertools.combinations(members, 2)]
        if not self.pairs:
            raise DatasetError("Training set has no two graphs of the same view")

    def sample_indices(self, rng: np.random.Generator) -> tuple[int, int]:
        """Indices ordered so the first graph has no more nodes than the second."""
        first, second = self.pairs[int(rng.integers(len(self.pairs)))]
        if self.graphs[first].n > self.graphs[second].n:
            first, second = second, first
        return first, second

    def sample(self, rng: np.random.Generator) -> tuple[IndividualGraph, IndividualGraph]:
        first, second = self.sample_indices(rng)
        return self.graphs[first], self.graphs[second]


def sample_pair(graphs: Sequence[IndividualGraph], rng: np.random.Generator) -> tuple[IndividualGraph, IndividualGraph]:
    return PairSampler(graphs).sample(rng)


@dataclass
class TrainingLog:
    rows: list[tuple[int, float, float]] = field(default_factory=list)  # (step, lr, mean loss)

    def write_csv(self, path: Path | str) -> Path:
        path = Path(path)
        with path.open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "lr", "loss"])
            for step, lr, loss in self.rows:
                writer.writerow([step, repr(lr), repr(loss)])
        return path


def train(
    graphs: Sequence[IndividualGraph],
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    stats: NormalizationStats,
    feature_spec: FeatureSpec,
    threads: int = 1,
) -> tuple[TrainedMatcher, TrainingLog]:
    """Trains the matcher on normalized, relabeled graphs.

    Each step draws `batch_size` same-view pairs, averages the permutation loss
    over them and takes one Adam step at the scheduled learning rate.
    """
    sampler = PairSampler(graphs)
    feature_dim = graphs[0].feature_matrix().shape[1]
    model = AgmnModel.build(feature_dim, model_cfg, np.random.default_rng([cfg.seed, 0]))
    pair_rng = np.random.default_rng([cfg.seed, 1])
    optimizer = Adam()
    schedule = LrSchedule.from_train_config(cfg)
    cache: dict[tuple[int, int], tuple[AssociationGraph, np.ndarray]] = {}

    def prepared(pair: tuple[int, int]) -> tuple[AssociationGraph, np.ndarray]:
        if pair not in cache:
            g1, g2 = sampler.graphs[pair[0]], sampler.graphs[pair[1]]
            cache[pair] = (build_association(g1, g2), ground_truth(g1, g2))
        return cache[pair]

    def chunk_result(chunk: list[tuple[AssociationGraph, np.ndarray]]) -> tuple[float, dict[str, np.ndarray]]:
        return model.loss_and_grads(stack_associations([ag for ag, _ in chunk]), [t for _, t in chunk], cfg.batch_size)

    log = TrainingLog()
    logger.info(
        f"Training on {len(sampler.graphs)} graphs ({len(sampler.pairs)} same-view pairs) for {cfg.steps} steps, "
        f"batch {cfg.batch_size}, H={model_cfg.hidden}, depth={model_cfg.depth}, n_mp={model_cfg.n_mp}"
    )
    for step in range(cfg.steps):
        items = [prepared(sampler.sample_indices(pair_rng)) for _ in range(cfg.batch_size)]
        chunks = [items[k::threads] for k in range(threads)] if threads > 1 else [items]
        results = ordered_map(chunk_result, [c for c in chunks if c], threads)
        loss = sum(r[0] for r in results)
        grads = results[0][1]
        for _, part in results[1:]:
            for key, value in part.items():
                grads[key] = grads[key] + value
        if not np.isfinite(loss):
            logger.error(f"Non-finite loss {loss} at step {step}")
            raise NumericalError(f"Loss became non-finite at step {step}", step=step)
        lr = lr_at(schedule, step)
        model.apply_gradients(optimizer, grads, lr)
        log.rows.append((step, lr, float(loss)))
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            logger.info(f"step {step}: lr={lr:.3e} loss={loss:.4f}")

    matcher = TrainedMatcher(model, stats, feature_spec, cfg, cfg.steps, cfg.seed, optimizer)
    return matcher, log


@dataclass
class NodeVotes:
    tally: dict[str, list[float]] = field(default_factory=dict)  # label -> [votes, summed probability]

    def add(self, label: str, probability: float) -> None:
        entry = self.tally.setdefault(label, [0, 0.0])
        entry[0] += 1
        entry[1] += probability

    def winner(self) -> str:
        """Most votes, then larger summed probability, then the label text."""
        if not self.tally:
            return UNASSIGNED
        return min(self.tally.items(), key=lambda item: (-item[1][0], -item[1][1], item[0]))[0]


@dataclass
class LabelAssignment:
    labels: list[str]
    votes: list[NodeVotes]
    templates_used: int

    def to_document(self, graph: Optional[str] = None, view_tag: Optional[str] = None) -> LabelAssignmentDocument:
        assignments = [
            NodeAssignment(
                node_id=node_id,
                label=label,
                votes=[
                    VoteEntry(label=text, votes=int(count), probability_sum=float(total))
                    for text, (count, total) in sorted(votes.tally.items())
                ],
            )
            for node_id, (label, votes) in enumerate(zip(self.labels, self.votes))
        ]
        return LabelAssignmentDocument(
            graph=graph, view_tag=view_tag, templates_used=self.templates_used, assignments=assignments
        )


def _template_votes(model: AgmnModel, test: IndividualGraph, template: IndividualGraph) -> list[tuple[int, str, float]]:
    """(test node, template label, probability) for every correspondence chosen by vote."""
    template_labels = [str(node.label) for node in template.nodes]
    if test.n <= template.n:
        prob = model.predict(build_association(test, template))
        picks = vote(prob)
        return [(int(i), template_labels[a], float(prob[i, a])) for i, a in zip(*np.nonzero(picks))]
    prob = model.predict(build_association(template, test))
    picks = vote(prob)
    return [(int(i), template_labels[k], float(prob[k, i])) for k, i in zip(*np.nonzero(picks))]


def label_graph(
    model: AgmnModel,
    test: IndividualGraph,
    templates: Sequence[IndividualGraph],
    threads: int = 1,
) -> LabelAssignment:
    """Majority vote over same-view templates; nodes nobody voted for stay UNASSIGNED."""
    usable = [t for t in templates if test.view_tag is None or t.view_tag == test.view_tag]
    if not usable:
        raise DatasetError(f"No template shares view {test.view_tag!r}")
    if any(node.label is None for t in usable for node in t.nodes):
        raise LabelingError("Templates must be fully labeled")
    results = ordered_map(lambda template: _template_votes(model, test, template), usable, threads)
    votes = [NodeVotes() for _ in range(test.n)]
    for template_result in results:
        for node, label, probability in template_result:
            votes[node].add(label, probability)
    return LabelAssignment([v.winner() for v in votes], votes, len(usable))


def prepare_graphs(graphs: Iterable[IndividualGraph], stats: NormalizationStats) -> list[IndividualGraph]:
    return [normalize_graph(graph, stats) for graph in graphs]


def brute_force_match(prob: np.ndarray) -> np.ndarray:
    """Exhaustive one-to-one assignment of every row maximizing the summed probability.

    Columns may stay unassigned when there are more columns than rows. Among
    equal optima the lexicographically first assignment wins.
    """
    prob = np.asarray(prob, dtype=np.float64)
    n1, n2 = prob.shape
    if n1 > MAX_BRUTE_FORCE_ROWS or n1 > n2:
        raise MatchSizeError(f"Exhaustive matching needs n1 <= min(n2, {MAX_BRUTE_FORCE_ROWS}), got {prob.shape}")
    if n2 > MAX_BRUTE_FORCE_COLUMNS:
        raise MatchSizeError(f"Exhaustive matching needs n2 <= {MAX_BRUTE_FORCE_COLUMNS}, got {prob.shape}")
    out = np.zeros(prob.shape, dtype=np.int64)
    if n1 == 0:
        return out
    rows = np.arange(n1)
    best, best_score = None, -np.inf
    for columns in itertools.permutations(range(n2), n1):
        score = prob[rows, list(columns)].sum()
        if score > best_score:
            best, best_score = columns, score
    if best is not None:
        out[rows, list(best)] = 1
    return out
