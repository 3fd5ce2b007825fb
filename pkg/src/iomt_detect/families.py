"""Uniform fit/score adapter over every detector family.

All data here is a window tensor ``X`` of shape (n, w, d). Point
detectors see only the last step of each window (``X[:, -1, :]``), which
matches the last-step window label; a plain row dataset is just w = 1.

Unsupervised families, when labels are supplied, fit on the benign rows
only. Supervised families need both classes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import detect_point as dp
from . import detect_seq as ds
from .gbdt import fit_gbdt
from .modelio import model_document, model_from_dict, register
from .nn import TrainConfig

_TRAIN_KEYS = set(TrainConfig.__dataclass_fields__)


def _train_config(params: dict, seed: int, **defaults) -> TrainConfig:
    merged = {**defaults, **{k: v for k, v in params.items() if k in _TRAIN_KEYS}}
    merged["seed"] = seed
    return TrainConfig(**merged)


def last_step(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X[:, -1, :] if X.ndim == 3 else X


def _benign(X, y):
    if y is None:
        return X
    y = np.asarray(y)
    keep = y == 0
    if not keep.any():
        raise ValueError("no benign rows to fit an unsupervised detector on")
    return X[keep]


def _fit_autoencoder(X, y, params, seed):
    cfg = _train_config(params, seed)
    return dp.train_autoencoder(_benign(last_step(X), y), cfg,
                                hidden=tuple(params.get("hidden", (16, 8, 16))),
                                quantile=params.get("quantile", 0.95))


def _fit_iforest(X, y, params, seed):
    return dp.train_isolation_forest(_benign(last_step(X), y), params.get("n_trees", 100),
                                     params.get("subsample", 256),
                                     params.get("contamination", 0.1), seed)


def _fit_ocsvm(X, y, params, seed):
    cfg = _train_config(params, seed, learning_rate=0.1, epochs=500)
    return dp.train_ocsvm(_benign(last_step(X), y), params.get("nu", 0.1), cfg)


def _fit_knn(X, y, params, seed):
    return dp.train_knn(_benign(last_step(X), y), params.get("k", 5),
                        params.get("contamination", 0.1))


def _seq_fitter(kind):
    def fit(X, y, params, seed):
        cfg = _train_config(params, seed)
        return ds.train_sequence_classifier(kind, (np.asarray(X), np.asarray(y)), cfg,
                                            hidden=params.get("hidden", 16),
                                            conv_channels=params.get("conv_channels", 8),
                                            kernel=params.get("kernel", 2))
    return fit


def _fit_logreg(X, y, params, seed):
    cfg = _train_config(params, seed, learning_rate=0.01, l2=1e-4)
    return ds.train_logreg((np.asarray(X), np.asarray(y)), cfg)


_GBDT_KEYS = ("n_rounds", "learning_rate", "max_depth", "lam", "gamma", "base_score",
              "min_child_weight")


def _fit_gbdt(X, y, params, seed):
    X = np.asarray(X)
    flat = X.reshape(len(X), -1)
    return fit_gbdt(flat, y, **{k: params[k] for k in _GBDT_KEYS if k in params})


@dataclass(frozen=True)
class Family:
    name: str
    fitter: Callable
    supervised: bool
    view: str  # "rows" or "windows"

    def fit(self, X, y=None, params=None, seed: int = 0) -> "FittedDetector":
        params = dict(params or {})
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[:, None, :]
        if self.supervised:
            if y is None:
                raise ValueError(f"{self.name} is supervised and needs labels")
            if len(np.unique(y)) < 2:
                raise ValueError(f"{self.name}: training labels contain a single class")
        model = self.fitter(X, y, params, seed)
        return FittedDetector(self.name, model, params, seed)


FAMILIES: dict[str, Family] = {}


def register_family(family: Family) -> Family:
    FAMILIES[family.name] = family
    return family


for _fam in (
    Family("autoencoder", _fit_autoencoder, False, "rows"),
    Family("iforest", _fit_iforest, False, "rows"),
    Family("ocsvm", _fit_ocsvm, False, "rows"),
    Family("knn", _fit_knn, False, "rows"),
    Family("lstm", _seq_fitter(ds.SequenceKind.LSTM), True, "windows"),
    Family("gru", _seq_fitter(ds.SequenceKind.GRU), True, "windows"),
    Family("cnn-lstm", _seq_fitter(ds.SequenceKind.CNN_LSTM), True, "windows"),
    Family("logreg", _fit_logreg, True, "windows"),
    Family("gbdt", _fit_gbdt, True, "windows"),
):
    register_family(_fam)

ALIASES = {"ae": "autoencoder", "if": "iforest", "isolation-forest": "iforest",
           "cnn_lstm": "cnn-lstm", "one-class-svm": "ocsvm"}


def get_family(name: str) -> Family:
    key = ALIASES.get(name.lower(), name.lower())
    try:
        return FAMILIES[key]
    except KeyError:
        raise ValueError(f"unknown model family {name!r}; choose from {sorted(FAMILIES)}") from None


@register("fitted")
@dataclass
class FittedDetector:
    """A trained model plus the family that knows which view of a window
    tensor to feed it."""

    family: str
    model: object
    params: dict
    seed: int = 0

    @property
    def threshold(self):
        return self.model.threshold

    def _view(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[:, None, :]
        fam = get_family(self.family)
        if fam.name == "gbdt":
            return X.reshape(len(X), -1)
        return last_step(X) if fam.view == "rows" else X

    def score(self, X) -> np.ndarray:
        return self.model.score(self._view(X))

    def flag(self, X) -> np.ndarray:
        return self.model.flag(self._view(X))

    def training_scores(self, X) -> np.ndarray:
        fn = getattr(self.model, "training_scores", self.model.score)
        return fn(self._view(X))

    def to_dict(self):
        return model_document("fitted", {"family": self.family, "params": self.params,
                                         "seed": self.seed},
                              {"model": self.model.to_dict()}, None)

    @classmethod
    def from_dict(cls, doc):
        hp = doc["hyperparameters"]
        return cls(hp["family"], model_from_dict(doc["parameters"]["model"]), hp["params"],
                   hp.get("seed", 0))
