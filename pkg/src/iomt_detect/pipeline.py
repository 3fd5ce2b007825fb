"""A fitted model bundled with the preprocessing it was trained behind.

A PipelineModel scores raw window tensors: non-finite cells are replaced
with the stored training means, every step is standardized with the stored
statistics, and the result goes to the wrapped model. Because windowing
does not look at values, raw windows can be cut straight from a loaded CSV.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flowdata as fd
from .modelio import model_document, model_from_dict, register


@register("pipeline")
@dataclass
class PipelineModel:
    model: object
    means: np.ndarray
    standardizer: fd.Standardizer
    window: int

    @property
    def threshold(self):
        return getattr(self.model, "threshold", None)

    def prepare(self, X) -> np.ndarray:
        X = np.array(X, dtype=np.float64)
        if X.shape[-1] != len(self.means):
            raise fd.DataError(f"model expects {len(self.means)} features, got {X.shape[-1]}")
        bad = ~np.isfinite(X)
        if bad.any():
            X[bad] = np.broadcast_to(self.means, X.shape)[bad]
        return self.standardizer.transform(X)

    def score(self, X) -> np.ndarray:
        return self.model.score(self.prepare(X))

    def flag(self, X) -> np.ndarray:
        return self.model.flag(self.prepare(X))

    def to_dict(self):
        return model_document(
            "pipeline", {"window": self.window},
            {"model": self.model.to_dict(), "imputation_means": [float(v) for v in self.means]},
            self.threshold, standardizer_ref=self.standardizer.to_dict(),
        )

    @classmethod
    def from_dict(cls, doc):
        p = doc["parameters"]
        return cls(model_from_dict(p["model"]), np.array(p["imputation_means"], dtype=np.float64),
                   fd.Standardizer.from_dict(doc["standardizer_ref"]),
                   int(doc["hyperparameters"]["window"]))


def fit_preprocessing(m: fd.FeatureMatrix):
    """Means and standardizer from ``m``; returns (means, standardizer)."""
    means = fd.finite_column_means(m)
    return means, fd.fit_standardizer(fd.impute_mean(m, means))


def raw_windows(m: fd.FeatureMatrix, window: int):
    """(X, y) raw window tensors in device/time order. ``y`` is None when
    any row is unlabeled."""
    X, y, _ = fd.windows_from_matrix(m, window)
    if len(X) == 0:
        raise fd.DataError(f"no complete windows of length {window} in the input")
    if m.labels is None or np.any(y < 0):
        y = None
    return X, y


def model_window(model) -> int:
    """Window length a loaded model expects raw input cut into."""
    if isinstance(model, PipelineModel):
        return model.window
    members = getattr(model, "members", None)
    if members:
        windows = {model_window(m) for m in members}
        if len(windows) != 1:
            raise ValueError(f"voting members disagree on window length: {sorted(windows)}")
        return windows.pop()
    raise ValueError(f"model_type {getattr(model, 'model_type', '?')!r} carries no preprocessing")
