"""Dense numpy layers with hand-written gradients, Adam and the staircase LR schedule."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import expit

from coronary_agmn.core.config import TrainConfig
from coronary_agmn.core.errors import DimensionMismatchError, StaleCacheError

OutputActivation = Literal["identity", "sigmoid"]

PROB_EPS = 1e-7

_mlp_ids = itertools.count()


def clamp_probability(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class MlpCache:
    """Activations of one batched forward pass, tied to the parameter version that produced them."""

    inputs: list[np.ndarray]  # input of every layer
    pre_activations: list[np.ndarray]
    output: np.ndarray
    owner: int
    version: int


class Mlp:
    """
    Multi-layer perceptron on row batches: y = x @ W.T + b per layer,
    ReLU between layers, identity or logistic after the last one.
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray], output: OutputActivation = "identity"):
        if len(weights) != len(biases) or not weights:
            raise DimensionMismatchError("Mlp needs one bias per weight matrix and at least one layer")
        for k, (w, b) in enumerate(zip(weights, biases)):
            if b.shape != (w.shape[0],):
                raise DimensionMismatchError(f"Layer {k}: bias {b.shape} does not fit weight {w.shape}")
            if k and w.shape[1] != weights[k - 1].shape[0]:
                raise DimensionMismatchError(f"Layer {k} expects {w.shape[1]} inputs, previous layer gives {weights[k - 1].shape[0]}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.output = output
        self._id = next(_mlp_ids)
        self.version = 0

    @classmethod
    def build(
        cls,
        in_dim: int,
        hidden: int,
        out_dim: int,
        depth: int,
        rng: np.random.Generator,
        output: OutputActivation = "identity",
    ) -> Mlp:
        """`depth` linear layers: in_dim -> hidden -> ... -> out_dim."""
        sizes = [in_dim] + [hidden] * (depth - 1) + [out_dim]
        weights = [glorot_uniform(fan_in, fan_out, rng) for fan_in, fan_out in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(fan_out) for fan_out in sizes[1:]]
        return cls(weights, biases, output)

    @property
    def in_dim(self) -> int:
        return int(self.weights[0].shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weights[-1].shape[0])

    @property
    def depth(self) -> int:
        return len(self.weights)

    def parameters(self) -> dict[str, np.ndarray]:
        params: dict[str, np.ndarray] = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"W{k}"] = w
            params[f"b{k}"] = b
        return params

    def mark_updated(self) -> None:
        self.version += 1

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionMismatchError(f"Mlp expects (batch, {self.in_dim}) input, got {x.shape}")
        inputs, pre = [], []
        h = x
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w.T + b
            pre.append(z)
            h = np.maximum(z, 0.0) if k < self.depth - 1 else z
        if self.output == "sigmoid":
            h = expit(h)
        return h, MlpCache(inputs, pre, h, self._id, self.version)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: MlpCache, output_grad: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Gradients of the cached forward pass: parameter grads and d(loss)/d(input)."""
        if cache.owner != self._id or cache.version != self.version:
            raise StaleCacheError("Activations were produced by different or since-updated parameters")
        grad = np.asarray(output_grad, dtype=np.float64)
        if grad.shape != cache.output.shape:
            raise DimensionMismatchError(f"Output gradient {grad.shape} does not match output {cache.output.shape}")
        if self.output == "sigmoid":
            grad = grad * cache.output * (1.0 - cache.output)
        grads: dict[str, np.ndarray] = {}
        for k in reversed(range(self.depth)):
            grads[f"W{k}"] = grad.T @ cache.inputs[k]
            grads[f"b{k}"] = grad.sum(axis=0)
            grad = grad @ self.weights[k]
            if k > 0:
                grad = grad * (cache.pre_activations[k - 1] > 0)
        return grads, grad


class Adam:
    """Adam with bias correction; parameters are updated in place."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        step_size = lr / bc1
        for key, value in params.items():
            g = grads[key]
            if g.shape != value.shape:
                raise DimensionMismatchError(f"Gradient for {key} has shape {g.shape}, parameter {value.shape}")
            if key not in self.m:
                self.m[key] = np.zeros_like(value)
                self.v[key] = np.zeros_like(value)
            self.m[key] *= self.beta1
            self.m[key] += (1.0 - self.beta1) * g
            self.v[key] *= self.beta2
            self.v[key] += (1.0 - self.beta2) * (g * g)
            value -= step_size * self.m[key] / (np.sqrt(self.v[key] / bc2) + self.epsilon)

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "m": {k: v.tolist() for k, v in self.m.items()},
            "v": {k: v.tolist() for k, v in self.v.items()},
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> Adam:
        adam = cls(state["beta1"], state["beta2"], state["epsilon"])
        adam.t = int(state["t"])
        adam.m = {k: np.array(v, dtype=np.float64) for k, v in state["m"].items()}
        adam.v = {k: np.array(v, dtype=np.float64) for k, v in state["v"].items()}
        return adam


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 1e-4
    decay: float = 0.98
    interval: int = 2000
    staircase: bool = True

    @classmethod
    def from_train_config(cls, cfg: TrainConfig) -> LrSchedule:
        return cls(cfg.base_lr, cfg.decay, cfg.decay_interval, cfg.staircase)


def lr_at(schedule: LrSchedule, step: int) -> float:
    """base_lr * decay ** (step // interval); the exponent is fractional without staircase."""
    exponent = step // schedule.interval if schedule.staircase else step / schedule.interval
    return float(schedule.base_lr * schedule.decay**exponent)
