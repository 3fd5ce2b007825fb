"""Second-order gradient-boosted regression trees with exact greedy splits.

Each round fits one tree to per-example gradients g and hessians h of the
loss at the current margin. A leaf holding examples I gets weight
``-sum(g_I) / (sum(h_I) + lam)`` and a split is scored by::

    gain = 0.5 * [G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - (G_L+G_R)^2/(H_L+H_R+lam)] - gamma

Trees grow depth-wise. Splits with negative gain are not taken; zero-gain
splits are, which is what lets a depth-2 tree carve out XOR.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .modelio import model_document, register
from .nn.layers import sigmoid

OBJECTIVES = ("logistic", "squared")


def gradients(objective: str, margin: np.ndarray, y: np.ndarray):
    if objective == "logistic":
        p = sigmoid(margin)
        return p - y, p * (1.0 - p)
    return margin - y, np.ones_like(margin)


def split_gain(GL, HL, GR, HR, lam, gamma):
    G, H = GL + GR, HL + HR
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam)) - gamma


def best_split(X, g, h, lam: float = 1.0, gamma: float = 0.0, min_child_weight: float = 0.0):
    """Exact greedy search over every feature and every gap between
    consecutive distinct sorted values.

    Returns ``(feature, threshold, gain)``; ``feature`` is None when no
    split with gain >= 0 exists. Ties go to the lowest feature index, then
    the lowest threshold.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    G, H = g.sum(), h.sum()
    best = (None, None, -np.inf)
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        distinct = xs[:-1] < xs[1:]
        if not distinct.any():
            continue
        GL = np.cumsum(g[order])[:-1]
        HL = np.cumsum(h[order])[:-1]
        GR, HR = G - GL, H - HL
        ok = distinct & (HL >= min_child_weight) & (HR >= min_child_weight)
        ok &= (HL + lam > 0) & (HR + lam > 0)
        if not ok.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = split_gain(GL, HL, GR, HR, lam, gamma)
        gain = np.where(ok, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best[2]:
            lo, hi = xs[i], xs[i + 1]
            thr = lo + (hi - lo) / 2
            if not lo < thr <= hi:
                thr = hi
            best = (j, float(thr), float(gain[i]))
    if best[0] is None or best[2] < 0:
        return None, None, 0.0
    return best


@dataclass
class RegressionTree:
    """Nodes in creation order; leaves have ``feature == -1``. Rows go left
    when ``x[feature] < threshold``."""

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    leaf_weight: list = field(default_factory=list)
    sum_grad: list = field(default_factory=list)
    sum_hess: list = field(default_factory=list)

    def _add(self, G, H):
        for col, v in ((self.feature, -1), (self.threshold, 0.0), (self.left, -1),
                       (self.right, -1), (self.leaf_weight, 0.0), (self.sum_grad, float(G)),
                       (self.sum_hess, float(H))):
            col.append(v)
        return len(self.feature) - 1

    @property
    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f < 0)

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=np.float64)
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)
        node = np.zeros(len(X), dtype=np.int64)
        active = feat[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, feat[nd]] < thr[nd]
            node[rows] = np.where(go_left, left[nd], right[nd])
            active = feat[node] >= 0
        return node

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.leaf_weight)[self.apply(X)]

    def to_nodes(self) -> list[dict]:
        return [{"id": i, "feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                 "left": int(self.left[i]), "right": int(self.right[i]),
                 "leaf_weight": float(self.leaf_weight[i]),
                 "sum_grad": float(self.sum_grad[i]), "sum_hess": float(self.sum_hess[i])}
                for i in range(len(self.feature))]

    @classmethod
    def from_nodes(cls, nodes: list[dict]) -> "RegressionTree":
        nodes = sorted(nodes, key=lambda n: n["id"])
        t = cls()
        for n in nodes:
            t.feature.append(int(n["feature"]))
            t.threshold.append(float(n["threshold"]))
            t.left.append(int(n["left"]))
            t.right.append(int(n["right"]))
            t.leaf_weight.append(float(n["leaf_weight"]))
            t.sum_grad.append(float(n.get("sum_grad", 0.0)))
            t.sum_hess.append(float(n.get("sum_hess", 0.0)))
        return t


def grow_tree(X, g, h, lam, gamma, max_depth, min_child_weight=0.0) -> RegressionTree:
    tree = RegressionTree()
    root = tree._add(g.sum(), h.sum())
    frontier = [(root, np.arange(len(X)))]
    depth = 0
    while frontier:
        nxt = []
        for node, idx in frontier:
            G, H = tree.sum_grad[node], tree.sum_hess[node]
            feat = None
            if (max_depth is None or depth < max_depth) and len(idx) > 1:
                feat, thr, _ = best_split(X[idx], g[idx], h[idx], lam, gamma, min_child_weight)
            if feat is None:
                tree.leaf_weight[node] = -G / (H + lam)
                continue
            mask = X[idx, feat] < thr
            li, ri = idx[mask], idx[~mask]
            tree.feature[node], tree.threshold[node] = feat, thr
            tree.left[node] = tree._add(g[li].sum(), h[li].sum())
            tree.right[node] = tree._add(g[ri].sum(), h[ri].sum())
            nxt += [(tree.left[node], li), (tree.right[node], ri)]
        frontier = nxt
        depth += 1
    return tree


@register("gbdt")
@dataclass
class GbdtModel:
    trees: list
    learning_rate: float = 0.3
    max_depth: int | None = 3
    lam: float = 1.0
    gamma: float = 0.0
    base_score: float = 0.0
    objective: str = "logistic"
    n_rounds: int = 50
    min_child_weight: float = 0.0
    threshold: float = 0.5
    # per-round (g, h) recorded at fit time; not serialized
    trace: list = field(default_factory=list, repr=False, compare=False)

    def margin(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.full(len(X), self.base_score, dtype=np.float64)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def predict_proba(self, X) -> np.ndarray:
        m = self.margin(X)
        return sigmoid(m) if self.objective == "logistic" else m

    def score(self, X):
        return self.predict_proba(X)

    def flag(self, X):
        return (self.predict_proba(X) >= self.threshold).astype(np.int64)

    def hyperparameters(self) -> dict:
        return {"n_rounds": self.n_rounds, "learning_rate": self.learning_rate,
                "max_depth": self.max_depth, "lam": self.lam, "gamma": self.gamma,
                "base_score": self.base_score, "objective": self.objective,
                "min_child_weight": self.min_child_weight}

    def to_dict(self):
        return model_document("gbdt", self.hyperparameters(),
                              {"trees": [t.to_nodes() for t in self.trees]}, self.threshold)

    @classmethod
    def from_dict(cls, doc):
        hp = doc["hyperparameters"]
        trees = [RegressionTree.from_nodes(nodes) for nodes in doc["parameters"]["trees"]]
        return cls(trees, hp["learning_rate"], hp["max_depth"], hp["lam"], hp["gamma"],
                   hp["base_score"], hp["objective"], hp["n_rounds"],
                   hp.get("min_child_weight", 0.0), doc["threshold"])


def fit_gbdt(X, y, n_rounds: int = 50, learning_rate: float = 0.3, max_depth: int | None = 3,
             lam: float = 1.0, gamma: float = 0.0, base_score: float = 0.0,
             objective: str = "logistic", min_child_weight: float = 0.0) -> GbdtModel:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    if len(X) != len(y):
        raise ValueError("X and y lengths differ")
    if len(X) < 2:
        raise ValueError("need at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    if objective == "logistic":
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("logistic objective needs labels in {0, 1}")
        if len(np.unique(y)) < 2:
            raise ValueError("both classes must be present")
    model = GbdtModel([], learning_rate, max_depth, lam, gamma, base_score, objective,
                      n_rounds, min_child_weight)
    margin = np.full(len(X), base_score)
    for _ in range(n_rounds):
        g, h = gradients(objective, margin, y)
        tree = grow_tree(X, g, h, lam, gamma, max_depth, min_child_weight)
        model.trees.append(tree)
        model.trace.append((g, h))
        margin = margin + learning_rate * tree.predict(X)
    return model


def predict_gbdt(m: GbdtModel, x) -> np.ndarray:
    return m.predict_proba(x)


def logloss(p, y, eps: float = 1e-15) -> float:
    p = np.clip(p, eps, 1 - eps)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
