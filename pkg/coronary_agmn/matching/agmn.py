"""Association-graph matching network: embedding, edge/vertex message passing, decoding."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from coronary_agmn.core.config import ModelConfig
from coronary_agmn.core.errors import DimensionMismatchError
from coronary_agmn.core.logging_config import get_logger
from coronary_agmn.matching.association import AssociationBatch, AssociationGraph, stack_associations
from coronary_agmn.nn.tensor_nn import PROB_EPS, Adam, Mlp, MlpCache, clamp_probability

logger = get_logger(__name__)

GraphLike = Union[AssociationGraph, AssociationBatch]


@dataclass
class AgmnActivations:
    """Vertex/edge latents of every step plus the MLP caches needed for backward."""

    x: list[np.ndarray] = field(default_factory=list)  # x[0] embedding, x[t] after step t
    e: list[np.ndarray] = field(default_factory=list)
    emb_v_cache: MlpCache | None = None
    emb_e_cache: MlpCache | None = None
    edge_caches: list[MlpCache] = field(default_factory=list)
    vertex_caches: list[MlpCache] = field(default_factory=list)
    decoder_cache: MlpCache | None = None
    src: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    dst: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def steps(self) -> int:
        return len(self.edge_caches)


def _as_batch(graph: GraphLike) -> AssociationBatch:
    return stack_associations([graph]) if isinstance(graph, AssociationGraph) else graph


def permutation_loss(prob: np.ndarray, truth: np.ndarray, pos_weight: float = 1.0) -> float:
    """Summed binary cross entropy over all candidate correspondences of one pair."""
    prob, truth = np.asarray(prob, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if prob.shape != truth.shape:
        raise DimensionMismatchError(f"Probability matrix {prob.shape} and truth {truth.shape} differ in shape")
    p = clamp_probability(prob)
    return float(-(pos_weight * truth * np.log(p) + (1.0 - truth) * np.log(1.0 - p)).sum())


def vote(prob: np.ndarray) -> np.ndarray:
    """One-hot at every row's argmax; ties go to the lowest column."""
    prob = np.asarray(prob)
    out = np.zeros(prob.shape, dtype=np.int64)
    if prob.size:
        out[np.arange(prob.shape[0]), np.argmax(prob, axis=1)] = 1
    return out


class AgmnModel:
    def __init__(
        self,
        f_emb_v: Mlp,
        f_emb_e: Mlp,
        phi_e: list[Mlp],
        phi_v: list[Mlp],
        phi_d: Mlp,
        n_mp: int,
        share_steps: bool = True,
        pos_weight: float = 1.0,
    ):
        expected = 1 if share_steps else n_mp
        if n_mp and (len(phi_e) != expected or len(phi_v) != expected):
            raise DimensionMismatchError(f"Expected {expected} phi_e/phi_v MLPs for n_mp={n_mp}, share_steps={share_steps}")
        hidden = f_emb_v.out_dim
        if f_emb_e.out_dim != hidden or phi_d.in_dim != hidden or phi_d.out_dim != 1:
            raise DimensionMismatchError("Embedding and decoder widths do not chain")
        for mlp in phi_e:
            if (mlp.in_dim, mlp.out_dim) != (3 * hidden, hidden):
                raise DimensionMismatchError(f"phi_e must map {3 * hidden} -> {hidden}")
        for mlp in phi_v:
            if (mlp.in_dim, mlp.out_dim) != (2 * hidden, hidden):
                raise DimensionMismatchError(f"phi_v must map {2 * hidden} -> {hidden}")
        self.f_emb_v = f_emb_v
        self.f_emb_e = f_emb_e
        self.phi_e = phi_e
        self.phi_v = phi_v
        self.phi_d = phi_d
        self.n_mp = n_mp
        self.share_steps = share_steps
        self.pos_weight = pos_weight

    @classmethod
    def build(cls, feature_dim: int, cfg: ModelConfig, rng: np.random.Generator) -> AgmnModel:
        h, depth = cfg.hidden, cfg.depth
        copies = 1 if cfg.share_steps else cfg.n_mp
        return cls(
            f_emb_v=Mlp.build(2 * feature_dim, h, h, depth, rng),
            f_emb_e=Mlp.build(4 * feature_dim, h, h, depth, rng),
            phi_e=[Mlp.build(3 * h, h, h, depth, rng) for _ in range(copies if cfg.n_mp else 0)],
            phi_v=[Mlp.build(2 * h, h, h, depth, rng) for _ in range(copies if cfg.n_mp else 0)],
            phi_d=Mlp.build(h, h, 1, depth, rng, output="sigmoid"),
            n_mp=cfg.n_mp,
            share_steps=cfg.share_steps,
            pos_weight=cfg.pos_weight,
        )

    @property
    def hidden(self) -> int:
        return self.f_emb_v.out_dim

    @property
    def feature_dim(self) -> int:
        return self.f_emb_v.in_dim // 2

    def modules(self) -> dict[str, Mlp]:
        named = {"f_emb_v": self.f_emb_v, "f_emb_e": self.f_emb_e, "phi_d": self.phi_d}
        for k, (edge_mlp, vertex_mlp) in enumerate(zip(self.phi_e, self.phi_v)):
            named[f"phi_e.{k}"] = edge_mlp
            named[f"phi_v.{k}"] = vertex_mlp
        return named

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{name}.{key}": value for name, mlp in self.modules().items() for key, value in mlp.parameters().items()}

    def _step_mlps(self, t: int) -> tuple[Mlp, Mlp]:
        k = 0 if self.share_steps else t
        return self.phi_e[k], self.phi_v[k]

    def embed(self, graph: GraphLike) -> AgmnActivations:
        batch = _as_batch(graph)
        if batch.vertex_features.shape[1] != self.f_emb_v.in_dim:
            raise DimensionMismatchError(
                f"Vertex features have width {batch.vertex_features.shape[1]}, model expects {self.f_emb_v.in_dim}"
            )
        x0, emb_v_cache = self.f_emb_v.forward(batch.vertex_features)
        e0, emb_e_cache = self.f_emb_e.forward(batch.edge_features.reshape(-1, self.f_emb_e.in_dim))
        return AgmnActivations([x0], [e0], emb_v_cache, emb_e_cache, src=batch.src, dst=batch.dst)

    def message_pass_step(self, acts: AgmnActivations) -> AgmnActivations:
        """Edges first from their two endpoints, then vertices from the summed incident edges."""
        t = acts.steps
        edge_mlp, vertex_mlp = self._step_mlps(t)
        x, e = acts.x[-1], acts.e[-1]
        e_next, edge_cache = edge_mlp.forward(np.hstack([e, x[acts.src], x[acts.dst]]))
        incoming = np.zeros_like(x)
        np.add.at(incoming, acts.src, e_next)
        np.add.at(incoming, acts.dst, e_next)
        x_next, vertex_cache = vertex_mlp.forward(np.hstack([incoming, x]))
        acts.x.append(x_next)
        acts.e.append(e_next)
        acts.edge_caches.append(edge_cache)
        acts.vertex_caches.append(vertex_cache)
        return acts

    def forward(self, graph: GraphLike) -> tuple[np.ndarray, AgmnActivations]:
        """Flat vertex probabilities (one per candidate correspondence) and the activations."""
        acts = self.embed(graph)
        for _ in range(self.n_mp):
            acts = self.message_pass_step(acts)
        prob, acts.decoder_cache = self.phi_d.forward(acts.x[-1])
        return prob[:, 0], acts

    def predict(self, ag: AssociationGraph) -> np.ndarray:
        prob, _ = self.forward(ag)
        return prob.reshape(ag.n1, ag.n2)

    def backward(
        self, acts: AgmnActivations, prob: np.ndarray, truth: np.ndarray, vertex_weight: np.ndarray | float = 1.0
    ) -> dict[str, np.ndarray]:
        """Gradient of sum(vertex_weight * BCE) with respect to every parameter."""
        truth = np.asarray(truth, dtype=np.float64).reshape(-1)
        raw = prob.reshape(-1)
        p = clamp_probability(raw)
        d_prob = vertex_weight * (-self.pos_weight * truth / p + (1.0 - truth) / (1.0 - p))
        # the loss is flat wherever the clamp is active
        d_prob = np.where((raw > PROB_EPS) & (raw < 1.0 - PROB_EPS), d_prob, 0.0)
        grads = {key: np.zeros_like(value) for key, value in self.parameters().items()}

        def accumulate(name: str, part: dict[str, np.ndarray]) -> None:
            for key, value in part.items():
                grads[f"{name}.{key}"] += value

        decoder_grads, dx = self.phi_d.backward(acts.decoder_cache, d_prob[:, None])
        accumulate("phi_d", decoder_grads)
        hidden = self.hidden
        de = np.zeros_like(acts.e[-1])
        for t in reversed(range(acts.steps)):
            k = 0 if self.share_steps else t
            vertex_grads, d_in = self.phi_v[k].backward(acts.vertex_caches[t], dx)
            accumulate(f"phi_v.{k}", vertex_grads)
            d_incoming, dx_prev = d_in[:, :hidden], d_in[:, hidden:]
            de = de + d_incoming[acts.src] + d_incoming[acts.dst]
            edge_grads, d_edge_in = self.phi_e[k].backward(acts.edge_caches[t], de)
            accumulate(f"phi_e.{k}", edge_grads)
            de = d_edge_in[:, :hidden]
            np.add.at(dx_prev, acts.src, d_edge_in[:, hidden : 2 * hidden])
            np.add.at(dx_prev, acts.dst, d_edge_in[:, 2 * hidden :])
            dx = dx_prev
        emb_v_grads, _ = self.f_emb_v.backward(acts.emb_v_cache, dx)
        emb_e_grads, _ = self.f_emb_e.backward(acts.emb_e_cache, de)
        accumulate("f_emb_v", emb_v_grads)
        accumulate("f_emb_e", emb_e_grads)
        return grads

    def loss_and_grads(
        self, batch: AssociationBatch, truths: list[np.ndarray], normalizer: int | None = None
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Per-pair loss summed over the batch and divided by `normalizer` (default: pair count), with its gradient.

        A batch split into chunks passes the full batch size as normalizer so the
        chunk results add up to the batch mean.
        """
        prob, acts = self.forward(batch)
        pairs = len(batch.shapes)
        normalizer = normalizer or pairs
        flat_truth = np.concatenate([np.asarray(t, dtype=np.float64).reshape(-1) for t in truths])
        if flat_truth.shape != prob.shape:
            raise DimensionMismatchError(f"Truth has {flat_truth.size} entries, batch has {prob.size} vertices")
        loss = sum(
            permutation_loss(prob[batch.pair_slice(k)], flat_truth[batch.pair_slice(k)], self.pos_weight)
            for k in range(pairs)
        ) / normalizer
        return loss, self.backward(acts, prob, flat_truth, 1.0 / normalizer)

    def apply_gradients(self, optimizer: Adam, grads: dict[str, np.ndarray], lr: float) -> None:
        optimizer.step(self.parameters(), grads, lr)
        for mlp in self.modules().values():
            mlp.mark_updated()
