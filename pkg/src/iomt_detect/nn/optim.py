from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .network import Sequential


class Optimizer(str, enum.Enum):
    SGD = "SGD"
    ADAM = "ADAM"


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    optimizer: Optimizer = Optimizer.ADAM
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    gradient_clip: float | None = None
    l2: float = 0.0

    def __post_init__(self):
        self.optimizer = Optimizer(self.optimizer)
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["optimizer"] = self.optimizer.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def clip_by_global_norm(grads: dict, max_norm: float) -> dict:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm or total == 0:
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update; returns (new params, new state).

    Inputs are not mutated.
    """
    t = state.t + 1
    new_params, m_out, v_out = {}, {}, {}
    b1, b2 = cfg.beta1, cfg.beta2
    for k, p in params.items():
        g = grads[k]
        m = b1 * state.m.get(k, np.zeros_like(p)) + (1 - b1) * g
        v = b2 * state.v.get(k, np.zeros_like(p)) + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_params[k] = p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        m_out[k], v_out[k] = m, v
    return new_params, AdamState(m_out, v_out, t)


def sgd_step(params: dict, grads: dict, cfg: TrainConfig) -> dict:
    return {k: p - cfg.learning_rate * grads[k] for k, p in params.items()}


def l2_penalty(net: Sequential, l2: float):
    """0.5 * l2 * sum of squared weight matrices (biases excluded)."""
    if l2 == 0:
        return 0.0, {}
    val, grads = 0.0, {}
    for k, p in net.params().items():
        if not k.endswith(".b"):
            val += 0.5 * l2 * float(np.sum(p * p))
            grads[k] = l2 * p
    return val, grads


def loss_and_grads(net: Sequential, loss_fn, x, y, l2: float = 0.0):
    out, cache = net.forward(x)
    loss, dout = loss_fn(out, y)
    grads = net.backward(cache, dout)
    pen, pgrads = l2_penalty(net, l2)
    for k, g in pgrads.items():
        grads[k] = grads[k] + g
    return loss + pen, grads


def assign(net: Sequential, new_params: dict):
    for key, value in new_params.items():
        i, name = key.split(".", 1)
        net.layers[int(i)].params[name] = value
    net.touch()


def fit(net: Sequential, loss_fn, X, Y, cfg: TrainConfig,
        on_epoch: Callable[[int, Sequential], None] | None = None) -> list[float]:
    """Mini-batch training. Returns the full-data loss after each epoch.

    Shuffling draws from ``default_rng(cfg.seed)`` so a run is fully
    determined by (initial weights, data order, cfg).
    """
    rng = np.random.default_rng(cfg.seed)
    n = len(X)
    state = AdamState()
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, grads = loss_and_grads(net, loss_fn, X[idx], Y[idx], cfg.l2)
            if cfg.gradient_clip is not None:
                grads = clip_by_global_norm(grads, cfg.gradient_clip)
            if cfg.optimizer is Optimizer.ADAM:
                new, state = adam_step(net.params(), grads, state, cfg)
            else:
                new = sgd_step(net.params(), grads, cfg)
            assign(net, new)
        full = loss_fn(net.predict(X), Y)[0] + l2_penalty(net, cfg.l2)[0]
        history.append(full)
        if on_epoch is not None:
            on_epoch(epoch, net)
    return history
