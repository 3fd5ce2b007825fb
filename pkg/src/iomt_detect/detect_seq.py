"""Supervised window classifiers: LSTM, GRU, CNN-LSTM and a logistic
regression baseline on flattened windows.

All of them read (n, w, d) window tensors, emit P(attack) through a
sigmoid, and flag at p >= 0.5. Training minimizes binary cross-entropy.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .flowdata import SequenceWindow, windows_to_arrays
from .modelio import model_document, register


class SequenceKind(str, enum.Enum):
    LSTM = "LSTM"
    GRU = "GRU"
    CNN_LSTM = "CNN_LSTM"


def _as_windows(windows):
    """Accept a list of SequenceWindow or an (X, y) pair; return (X, y)."""
    if isinstance(windows, tuple):
        X, y = windows
        return np.asarray(X, dtype=np.float64), np.asarray(y)
    return windows_to_arrays(windows)


def _as_tensor(x) -> np.ndarray:
    if isinstance(x, SequenceWindow):
        x = x.steps
    x = np.asarray(x, dtype=np.float64)
    return x[None] if x.ndim == 2 else x


def build_sequence_net(kind, d: int, hidden: int = 16, conv_channels: int = 8,
                       kernel: int = 2, seed: int = 0) -> nn.Sequential:
    kind = SequenceKind(kind)
    rng = np.random.default_rng(seed)
    layers = []
    width = d
    if kind is SequenceKind.CNN_LSTM:
        layers.append(nn.Conv1D(d, conv_channels, kernel, nn.Activation.RELU, rng))
        width = conv_channels
    cell = nn.GRU if kind is SequenceKind.GRU else nn.LSTM
    layers.append(cell(width, hidden, rng))
    # linear logit; the sigmoid is applied in predict/loss for stability
    layers.append(nn.Dense(hidden, 1, nn.Activation.LINEAR, rng))
    return nn.Sequential(layers)


@dataclass
class _BinaryNetModel:
    net: nn.Sequential
    window: int
    n_features: int
    threshold: float = 0.5
    config: dict = field(default_factory=dict)
    curve: list = field(default_factory=list)  # (epoch, loss, accuracy)

    def predict_proba(self, X) -> np.ndarray:
        X = _as_tensor(X)
        if X.shape[1:] != (self.window, self.n_features):
            raise ValueError(f"expected windows of shape ({self.window}, {self.n_features}), "
                             f"got {X.shape[1:]}")
        return nn.sigmoid(self.net.predict(X)[:, 0])

    def score(self, X):
        return self.predict_proba(X)

    def flag(self, X):
        return (self.predict_proba(X) >= self.threshold).astype(np.int64)

    def training_curve_csv(self) -> str:
        lines = ["epoch,loss,accuracy"]
        lines += [f"{e},{loss!r},{acc!r}" for e, loss, acc in self.curve]
        return "\n".join(lines) + "\n"

    def _doc(self, model_type, hyper):
        net = self.net.to_dict()
        return model_document(
            model_type,
            {**hyper, "window": self.window, "n_features": self.n_features,
             "train_config": self.config},
            {"layers": net["layers"], "arrays": net["parameters"]},
            self.threshold,
            training_curve=[[int(e), float(loss), float(a)] for e, loss, a in self.curve],
        )

    @staticmethod
    def _net_from(doc):
        p = doc["parameters"]
        return nn.Sequential.from_dict({"layers": p["layers"], "parameters": p["arrays"]})


@register("sequence")
@dataclass
class SequenceClassifier(_BinaryNetModel):
    kind: SequenceKind = SequenceKind.LSTM
    hidden: int = 16

    def to_dict(self):
        return self._doc("sequence", {"kind": SequenceKind(self.kind).value, "hidden": self.hidden})

    @classmethod
    def from_dict(cls, doc):
        hp = doc["hyperparameters"]
        return cls(cls._net_from(doc), hp["window"], hp["n_features"], doc["threshold"],
                   hp.get("train_config", {}), [tuple(r) for r in doc.get("training_curve", [])],
                   SequenceKind(hp["kind"]), hp["hidden"])


@register("logreg")
@dataclass
class LogRegModel(_BinaryNetModel):
    @property
    def w(self) -> np.ndarray:
        return self.net.layers[1].params["W"][0]

    @property
    def b(self) -> float:
        return float(self.net.layers[1].params["b"][0])

    def to_dict(self):
        return self._doc("logreg", {})

    @classmethod
    def from_dict(cls, doc):
        hp = doc["hyperparameters"]
        return cls(cls._net_from(doc), hp["window"], hp["n_features"], doc["threshold"],
                   hp.get("train_config", {}), [tuple(r) for r in doc.get("training_curve", [])])


def _check_training_set(X, y):
    if X.ndim != 3 or len(X) == 0:
        raise ValueError(f"expected a non-empty (n, w, d) window tensor, got shape {X.shape}")
    if len(np.unique(y)) < 2:
        raise ValueError("training windows contain a single class")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("window labels must be 0/1")


def _fit_binary(net, X, y, cfg):
    curve = []
    Y = y.reshape(-1, 1).astype(np.float64)

    def record(epoch, trained):
        logits = trained.predict(X)
        loss = nn.bce_with_logits(logits, Y)[0]
        acc = float(np.mean((logits[:, 0] >= 0) == (y == 1)))
        curve.append((epoch + 1, loss, acc))

    nn.fit(net, nn.bce_with_logits, X, Y, cfg, on_epoch=record)
    return curve


def train_sequence_classifier(kind, windows, cfg: nn.TrainConfig | None = None,
                              hidden: int = 16, conv_channels: int = 8,
                              kernel: int = 2) -> SequenceClassifier:
    """Train an LSTM/GRU/CNN-LSTM window classifier by BPTT.

    ``windows`` is a list of :class:`SequenceWindow` or an ``(X, y)`` pair.
    Per-epoch full-data loss and accuracy land in ``model.curve``.
    """
    X, y = _as_windows(windows)
    _check_training_set(X, y)
    cfg = cfg or nn.TrainConfig()
    kind = SequenceKind(kind)
    net = build_sequence_net(kind, X.shape[2], hidden, conv_channels, kernel, cfg.seed)
    curve = _fit_binary(net, X, y, cfg)
    return SequenceClassifier(net, X.shape[1], X.shape[2], 0.5, cfg.to_dict(), curve, kind, hidden)


def predict_sequence(m: _BinaryNetModel, window):
    p = m.predict_proba(window)
    return p, (p >= m.threshold).astype(np.int64)


def build_logreg_net(window: int, d: int, seed: int = 0) -> nn.Sequential:
    rng = np.random.default_rng(seed)
    return nn.Sequential([nn.Flatten(), nn.Dense(window * d, 1, nn.Activation.LINEAR, rng)])


def train_logreg(windows, cfg: nn.TrainConfig | None = None) -> LogRegModel:
    """Logistic regression on the flattened w*d window vector.

    L2 on the weights defaults to 1e-4 when ``cfg`` is not given.
    """
    X, y = _as_windows(windows)
    _check_training_set(X, y)
    cfg = cfg or nn.TrainConfig(learning_rate=0.01, l2=1e-4)
    net = build_logreg_net(X.shape[1], X.shape[2], cfg.seed)
    curve = _fit_binary(net, X, y, cfg)
    return LogRegModel(net, X.shape[1], X.shape[2], 0.5, cfg.to_dict(), curve)


def predict_logreg(m: LogRegModel, window):
    return predict_sequence(m, window)


def batch_predict(m: _BinaryNetModel, windows: Sequence) -> np.ndarray:
    return m.predict_proba(np.stack([_as_tensor(w)[0] for w in windows]))
