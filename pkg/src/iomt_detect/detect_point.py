"""Point anomaly detectors: autoencoder, isolation forest, linear one-class
SVM and k-nearest-neighbour distance.

Each fitted model exposes ``score(X)`` (higher means more anomalous) and
``flag(X)`` (0/1), and round-trips through :mod:`iomt_detect.modelio`.
Inputs are plain (n, d) arrays or :class:`FeatureMatrix` objects, assumed
imputed and standardized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .flowdata import FeatureMatrix
from .modelio import decode_array, encode_array, model_document, register


def as_array(x) -> np.ndarray:
    if isinstance(x, FeatureMatrix):
        x = x.values
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def calibrate_threshold(scores, q: float) -> float:
    """Linear-interpolation empirical quantile of ``scores``.

    For sorted scores s_0..s_{n-1} and h = (n-1) q this is
    s_floor(h) + (h - floor(h)) (s_ceil(h) - s_floor(h)). Flagging
    ``score > threshold`` on the same scores marks (1-q) n +- 1 of them.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("cannot calibrate a threshold on zero scores")
    if not 0.0 <= q <= 1.0:
        raise ValueError("quantile must lie in [0, 1]")
    return float(np.quantile(scores, q, method="linear"))


class Detector:
    threshold: float

    def score(self, X) -> np.ndarray:
        raise NotImplementedError

    def flag(self, X) -> np.ndarray:
        return (self.score(X) > self.threshold).astype(np.int64)

    def training_scores(self, X) -> np.ndarray:
        """Scores for rows the model was fit on, as used for calibration."""
        return self.score(X)


# ---------------------------------------------------------------- autoencoder


@register("autoencoder")
@dataclass
class AutoencoderModel(Detector):
    net: nn.Sequential
    threshold: float
    train_error_quantile: float = 0.95
    hidden: tuple = (16, 8, 16)
    config: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def reconstruction_error(self, X) -> np.ndarray:
        """e(x) = ||x - x_hat||^2 / d per row."""
        X = as_array(X)
        diff = X - self.net.predict(X)
        return np.mean(diff * diff, axis=1)

    def score(self, X):
        return self.reconstruction_error(X)

    def to_dict(self):
        net = self.net.to_dict()
        return model_document(
            "autoencoder",
            {"hidden": list(self.hidden), "train_error_quantile": self.train_error_quantile,
             "train_config": self.config},
            {"layers": net["layers"], "arrays": net["parameters"]},
            self.threshold,
            history=[float(v) for v in self.history],
        )

    @classmethod
    def from_dict(cls, doc):
        hp, p = doc["hyperparameters"], doc["parameters"]
        net = nn.Sequential.from_dict({"layers": p["layers"], "parameters": p["arrays"]})
        return cls(net, doc["threshold"], hp["train_error_quantile"], tuple(hp["hidden"]),
                   hp.get("train_config", {}), doc.get("history", []))


def build_autoencoder(d: int, hidden=(16, 8, 16), seed: int = 0) -> nn.Sequential:
    rng = np.random.default_rng(seed)
    sizes = [d, *hidden, d]
    layers = []
    for i in range(len(sizes) - 1):
        act = nn.Activation.LINEAR if i == len(sizes) - 2 else nn.Activation.RELU
        layers.append(nn.Dense(sizes[i], sizes[i + 1], act, rng))
    return nn.Sequential(layers)


def train_autoencoder(train, cfg: nn.TrainConfig | None = None, hidden=(16, 8, 16),
                      quantile: float = 0.95) -> AutoencoderModel:
    """Fit a dense autoencoder on (mostly benign) rows.

    The flag threshold is the ``quantile`` (default 95th percentile) of the
    reconstruction errors on the training rows.
    """
    X = as_array(train)
    if len(X) < 20:
        raise ValueError(f"autoencoder needs at least 20 training rows, got {len(X)}")
    if not np.all(np.isfinite(X)):
        raise ValueError("autoencoder training data must be finite")
    cfg = cfg or nn.TrainConfig()
    net = build_autoencoder(X.shape[1], hidden, cfg.seed)
    history = nn.fit(net, nn.mse, X, X, cfg)
    model = AutoencoderModel(net, 0.0, quantile, tuple(hidden), cfg.to_dict(), history)
    model.threshold = calibrate_threshold(model.reconstruction_error(X), quantile)
    return model


def score_autoencoder(m: AutoencoderModel, x):
    e = m.reconstruction_error(x)
    return e, (e > m.threshold).astype(np.int64)


# ----------------------------------------------------------- isolation forest

_HARMONIC_EXACT_MAX = 1_000_000
_harmonic_cache = np.zeros(1)


def harmonic(n: int) -> float:
    """H(n) = 1 + 1/2 + ... + 1/n, by partial sums up to 10^6."""
    global _harmonic_cache
    if n <= 0:
        return 0.0
    if n <= _HARMONIC_EXACT_MAX:
        if n >= len(_harmonic_cache):
            size = min(max(n + 1, 2 * len(_harmonic_cache)), _HARMONIC_EXACT_MAX + 1)
            _harmonic_cache = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, size))])
        return float(_harmonic_cache[n])
    return math.log(n) + np.euler_gamma + 1 / (2 * n) - 1 / (12 * n * n)


def average_path_length(n: int) -> float:
    """c(n) = 2 H(n-1) - 2 (n-1)/n, the mean unsuccessful-search depth in a BST."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


@dataclass
class IsolationTree:
    """Array-backed binary tree; ``feature == -1`` marks an external node."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray

    @property
    def height(self) -> int:
        return int(self.depth.max())

    def path_length(self, X) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] < self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        adj = np.array([average_path_length(int(s)) for s in self.size[node]])
        return self.depth[node] + adj

    def to_dict(self):
        return {k: encode_array(getattr(self, k))
                for k in ("feature", "threshold", "left", "right", "size", "depth")}

    @classmethod
    def from_dict(cls, doc):
        return cls(**{k: decode_array(v) for k, v in doc.items()})


def grow_isolation_tree(X: np.ndarray, height_limit: int, rng: np.random.Generator) -> IsolationTree:
    feature, threshold, left, right, size, depth = [], [], [], [], [], []

    def new_node(d, m):
        for col, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1),
                       (size, m), (depth, d)):
            col.append(v)
        return len(feature) - 1

    stack = [(np.arange(len(X)), 0, new_node(0, len(X)))]
    while stack:
        idx, d, node = stack.pop()
        if len(idx) <= 1 or d >= height_limit:
            continue
        sub = X[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if splittable.size == 0:
            continue
        q = int(splittable[rng.integers(splittable.size)])
        p = rng.uniform(lo[q], hi[q])
        while p <= lo[q]:
            p = rng.uniform(lo[q], hi[q])
        mask = sub[:, q] < p
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = q, p
        left[node] = new_node(d + 1, len(li))
        right[node] = new_node(d + 1, len(ri))
        stack.append((ri, d + 1, right[node]))
        stack.append((li, d + 1, left[node]))
    return IsolationTree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                         np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                         np.array(size, dtype=np.int64), np.array(depth, dtype=np.int64))


@register("iforest")
@dataclass
class IsolationForestModel(Detector):
    trees: list
    subsample: int
    contamination: float
    threshold: float
    seed: int = 0

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def height_limit(self) -> int:
        return int(math.ceil(math.log2(self.subsample))) if self.subsample > 1 else 0

    def expected_path_length(self, X) -> np.ndarray:
        X = as_array(X)
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.path_length(X)
        return total / len(self.trees)

    def score(self, X):
        """s(x) = 2^(-E[h(x)] / c(subsample)), in (0, 1)."""
        return np.power(2.0, -self.expected_path_length(X) / average_path_length(self.subsample))

    def to_dict(self):
        return model_document(
            "iforest",
            {"n_trees": self.n_trees, "subsample": self.subsample,
             "contamination": self.contamination, "seed": self.seed},
            {"trees": [t.to_dict() for t in self.trees]},
            self.threshold,
        )

    @classmethod
    def from_dict(cls, doc):
        hp = doc["hyperparameters"]
        trees = [IsolationTree.from_dict(t) for t in doc["parameters"]["trees"]]
        return cls(trees, hp["subsample"], hp["contamination"], doc["threshold"], hp["seed"])


def train_isolation_forest(train, n_trees: int = 100, subsample: int = 256,
                           contamination: float = 0.1, seed: int = 0) -> IsolationForestModel:
    """Build ``n_trees`` isolation trees, each on its own random subsample.

    Each tree draws from ``default_rng([seed, tree_index])`` so the forest
    does not depend on build order. The flag threshold is the
    (1 - contamination) quantile of training scores.
    """
    X = as_array(train)
    n = len(X)
    if n < 2:
        raise ValueError("isolation forest needs at least 2 rows")
    if not 0 < contamination <= 0.5:
        raise ValueError("contamination must lie in (0, 0.5]")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    psi = min(subsample, n)
    limit = int(math.ceil(math.log2(psi)))
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        rows = rng.choice(n, size=psi, replace=False)
        trees.append(grow_isolation_tree(X[rows], limit, rng))
    model = IsolationForestModel(trees, psi, contamination, 0.0, seed)
    model.threshold = calibrate_threshold(model.score(X), 1 - contamination)
    return model


def score_isolation_forest(m: IsolationForestModel, x):
    s = m.score(x)
    return s, (s > m.threshold).astype(np.int64)


# -------------------------------------------------------------- one-class SVM


@register("ocsvm")
@dataclass
class OneClassSvmModel(Detector):
    """Linear one-class SVM, f(x) = <w, x> - rho; anomalous when f(x) < 0.

    ``score`` returns -f(x) so that, like the other detectors, larger means
    more anomalous and the flag threshold is 0.
    """

    w: np.ndarray
    rho: float
    nu: float
    config: dict = field(default_factory=dict)
    threshold: float = 0.0

    def decision_function(self, X) -> np.ndarray:
        return as_array(X) @ self.w - self.rho

    def score(self, X):
        return -self.decision_function(X)

    def flag(self, X):
        return (self.decision_function(X) < 0).astype(np.int64)

    def to_dict(self):
        return model_document("ocsvm", {"nu": self.nu, "train_config": self.config},
                              {"w": encode_array(self.w), "rho": float(self.rho)}, 0.0)

    @classmethod
    def from_dict(cls, doc):
        p = doc["parameters"]
        return cls(decode_array(p["w"]), p["rho"], doc["hyperparameters"]["nu"],
                   doc["hyperparameters"].get("train_config", {}))


def ocsvm_objective(w, rho, X, nu) -> float:
    """0.5 ||w||^2 - rho + 1/(nu n) * sum max(0, rho - <w, x_i>)."""
    slack = np.maximum(0.0, rho - X @ w)
    return float(0.5 * w @ w - rho + slack.sum() / (nu * len(X)))


def train_ocsvm(train, nu: float = 0.1, cfg: nn.TrainConfig | None = None) -> OneClassSvmModel:
    """Full-batch subgradient descent on the linear nu-formulation.

    Step size decays as lr / sqrt(t). Subgradient iterates are not
    monotone, so the iterate with the lowest objective is kept.
    Scale-sensitive: feed standardized data. On data centred at the
    origin the optimum is w = 0 and the model is degenerate.
    """
    if not 0 < nu < 1:
        raise ValueError("nu must lie in (0, 1)")
    X = as_array(train)
    n, d = X.shape
    cfg = cfg or nn.TrainConfig(learning_rate=0.1, epochs=500)
    w, rho = np.zeros(d), 0.0
    best = (ocsvm_objective(w, rho, X, nu), w.copy(), rho)
    for t in range(1, cfg.epochs + 1):
        viol = (X @ w) < rho
        gw = w - X[viol].sum(axis=0) / (nu * n)
        grho = -1.0 + viol.sum() / (nu * n)
        step = cfg.learning_rate / math.sqrt(t)
        w = w - step * gw
        rho = rho - step * grho
        obj = ocsvm_objective(w, rho, X, nu)
        if obj < best[0]:
            best = (obj, w.copy(), rho)
    return OneClassSvmModel(best[1], float(best[2]), nu, cfg.to_dict())


def score_ocsvm(m: OneClassSvmModel, x):
    f = m.decision_function(x)
    return -f, (f < 0).astype(np.int64)


# ------------------------------------------------------------------------ KNN


def _knn_mean_distance(Q, R, k, exclude_self=False, chunk=256):
    # explicit differences rather than the |q|^2 + |r|^2 - 2qr expansion,
    # so coincident points come out at exactly zero distance
    out = np.empty(len(Q))
    for start in range(0, len(Q), chunk):
        q = Q[start:start + chunk]
        diff = q[:, None, :] - R[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        if exclude_self:
            rows = np.arange(len(q))
            d2[rows, start + rows] = np.inf
        part = np.partition(d2, k - 1, axis=1)[:, :k]
        out[start:start + chunk] = np.sqrt(part).mean(axis=1)
    return out


@register("knn")
@dataclass
class KnnDetectorModel(Detector):
    reference: np.ndarray
    k: int
    contamination: float
    threshold: float

    def score(self, X):
        """Mean Euclidean distance to the k nearest reference rows."""
        return _knn_mean_distance(as_array(X), self.reference, self.k)

    def training_scores(self, X):
        X = as_array(X)
        if X.shape == self.reference.shape and np.array_equal(X, self.reference):
            return _knn_mean_distance(X, self.reference, self.k, exclude_self=True)
        return self.score(X)

    def to_dict(self):
        return model_document("knn", {"k": self.k, "contamination": self.contamination},
                              {"reference": encode_array(self.reference)}, self.threshold)

    @classmethod
    def from_dict(cls, doc):
        hp = doc["hyperparameters"]
        return cls(decode_array(doc["parameters"]["reference"]), hp["k"], hp["contamination"],
                   doc["threshold"])


def train_knn(train, k: int = 5, contamination: float = 0.1) -> KnnDetectorModel:
    """Store the training rows; calibrate on leave-self-out k-NN distances."""
    X = as_array(train)
    if k < 1 or k >= len(X):
        raise ValueError(f"k must satisfy 1 <= k < n (k={k}, n={len(X)})")
    if not 0 < contamination < 1:
        raise ValueError("contamination must lie in (0, 1)")
    train_scores = _knn_mean_distance(X, X, k, exclude_self=True)
    return KnnDetectorModel(X.copy(), k, contamination,
                            calibrate_threshold(train_scores, 1 - contamination))


def score_knn(m: KnnDetectorModel, x):
    s = m.score(x)
    return s, (s > m.threshold).astype(np.int64)
