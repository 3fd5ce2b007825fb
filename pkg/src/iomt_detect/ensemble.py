"""Model combination: out-of-fold stacking with a boosted-tree meta-learner,
and majority / score-average voting.

Stacking protocol: split the training windows into k stratified folds. For
each fold, fit every base on the other k-1 folds and score the held-out
fold, which fills that fold's rows of the meta-feature matrix Z (n x M).
The meta-learner is fit on (Z, y). At inference the bases are refits on all
training data.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .detect_point import calibrate_threshold
from .evalkit import k_fold_indices
from .families import FittedDetector, get_family
from .gbdt import GbdtModel, fit_gbdt
from .modelio import model_document, model_from_dict, register

STACKING_BASES = ("autoencoder", "iforest", "lstm", "cnn-lstm")


@dataclass(frozen=True)
class BaseSpec:
    family: str
    params: dict = field(default_factory=dict)

    @classmethod
    def of(cls, item) -> "BaseSpec":
        if isinstance(item, BaseSpec):
            return item
        if isinstance(item, str):
            return cls(get_family(item).name)
        family, params = item
        return cls(get_family(family).name, dict(params))


def _member_seed(seed: int, fold: int, member: int) -> int:
    return int(np.random.SeedSequence([seed, fold, member]).generate_state(1)[0])


def out_of_fold_meta_features(specs, X, y, k: int = 5, seed: int = 0, folds=None):
    """Return ``(Z, refits, folds)``.

    ``Z[i, m]`` is base m's score for row i from a model that never saw row
    i. ``refits`` are the bases trained on every row. Pass ``folds`` to fix
    the assignment explicitly.
    """
    specs = [BaseSpec.of(s) for s in specs]
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if k < 2:
        raise ValueError("need k >= 2 folds")
    folds = k_fold_indices(len(y), k, y, seed) if folds is None else np.asarray(folds)
    for f in range(k):
        train_labels = y[folds != f]
        if len(np.unique(train_labels)) < 2:
            raise ValueError(f"fold {f}: training split is missing a class")
    Z = np.empty((len(y), len(specs)))
    for f in range(k):
        tr, va = folds != f, folds == f
        for m, spec in enumerate(specs):
            model = get_family(spec.family).fit(X[tr], y[tr], spec.params, _member_seed(seed, f, m))
            Z[va, m] = model.score(X[va])
    refits = [get_family(s.family).fit(X, y, s.params, _member_seed(seed, k, m))
              for m, s in enumerate(specs)]
    return Z, refits, folds


@register("stacking")
@dataclass
class StackingModel:
    specs: list
    bases: list
    meta: GbdtModel
    k: int = 5
    seed: int = 0
    threshold: float = 0.5

    def meta_features(self, X) -> np.ndarray:
        return np.column_stack([b.score(X) for b in self.bases])

    def predict_proba(self, X):
        return self.meta.predict_proba(self.meta_features(X))

    def score(self, X):
        return self.predict_proba(X)

    def flag(self, X):
        return (self.predict_proba(X) >= self.threshold).astype(np.int64)

    def to_dict(self):
        return model_document(
            "stacking",
            {"k": self.k, "seed": self.seed,
             "spec_order": [{"family": s.family, "params": s.params} for s in self.specs]},
            {"bases": [b.to_dict() for b in self.bases], "meta": self.meta.to_dict()},
            self.threshold,
        )

    @classmethod
    def from_dict(cls, doc):
        hp, p = doc["hyperparameters"], doc["parameters"]
        specs = [BaseSpec(s["family"], s["params"]) for s in hp["spec_order"]]
        return cls(specs, [FittedDetector.from_dict(b) for b in p["bases"]],
                   model_from_dict(p["meta"]), hp["k"], hp["seed"], doc["threshold"])


def fit_stacking(specs, X, y, k: int = 5, gbdt_params: dict | None = None,
                 seed: int = 0) -> StackingModel:
    specs = [BaseSpec.of(s) for s in specs]
    Z, refits, _ = out_of_fold_meta_features(specs, X, y, k, seed)
    meta = fit_gbdt(Z, y, **(gbdt_params or {}))
    return StackingModel(specs, refits, meta, k, seed)


def predict_stacking(m: StackingModel, x):
    p = m.predict_proba(x)
    return p, (p >= m.threshold).astype(np.int64)


# --------------------------------------------------------------------- voting


class VoteStrategy(str, enum.Enum):
    MAJORITY = "MAJORITY"
    SCORE_AVERAGE = "SCORE_AVERAGE"


def majority_flags(member_flags: np.ndarray) -> np.ndarray:
    """(M, n) 0/1 flags -> combined flag where at least ceil(M/2) agree."""
    member_flags = np.atleast_2d(member_flags)
    M = member_flags.shape[0]
    if M == 0:
        raise ValueError("voting needs at least one member")
    return (member_flags.sum(axis=0) >= math.ceil(M / 2)).astype(np.int64)


@register("voting")
@dataclass
class VotingModel:
    """Combines member detectors.

    MAJORITY flags when at least ceil(M/2) members flag. SCORE_AVERAGE
    min-max scales each member's score with its training range (clipped to
    [0, 1]), averages, and flags above the (1 - nu) quantile of the averaged
    training scores.
    """

    members: list
    strategy: VoteStrategy = VoteStrategy.SCORE_AVERAGE
    nu: float = 0.1
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    threshold: float = 0.5

    def _normalized(self, X) -> np.ndarray:
        return self._scale(np.vstack([m.score(X) for m in self.members]))

    def _combine(self, S) -> np.ndarray:
        return self._scale(S).mean(axis=0)

    def _scale(self, S) -> np.ndarray:
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        Z = (S - self.lo[:, None]) / safe[:, None]
        Z[span <= 0] = 0.0
        return np.clip(Z, 0.0, 1.0)

    def score(self, X):
        if self.strategy is VoteStrategy.MAJORITY:
            return np.vstack([m.flag(X) for m in self.members]).mean(axis=0)
        return self._normalized(X).mean(axis=0)

    def flag(self, X):
        if self.strategy is VoteStrategy.MAJORITY:
            return majority_flags(np.vstack([m.flag(X) for m in self.members]))
        return (self.score(X) > self.threshold).astype(np.int64)

    def to_dict(self):
        return model_document(
            "voting", {"strategy": self.strategy.value, "nu": self.nu},
            {"members": [m.to_dict() for m in self.members],
             "lo": None if self.lo is None else [float(v) for v in self.lo],
             "hi": None if self.hi is None else [float(v) for v in self.hi]},
            self.threshold,
        )

    @classmethod
    def from_dict(cls, doc):
        p = doc["parameters"]
        members = [model_from_dict(m) for m in p["members"]]
        arr = lambda v: None if v is None else np.array(v, dtype=np.float64)
        return cls(members, VoteStrategy(doc["hyperparameters"]["strategy"]),
                   doc["hyperparameters"]["nu"], arr(p["lo"]), arr(p["hi"]), doc["threshold"])


def fit_voting(members, X_train, strategy=VoteStrategy.SCORE_AVERAGE, nu: float = 0.1) -> VotingModel:
    """Calibrate a voting combiner over already-fitted ``members``."""
    if not members:
        raise ValueError("voting needs at least one member")
    strategy = VoteStrategy(strategy)
    model = VotingModel(list(members), strategy, nu)
    if strategy is VoteStrategy.SCORE_AVERAGE:
        # members' own calibration view of their training rows (KNN leaves self out)
        S = np.vstack([getattr(m, "training_scores", m.score)(X_train) for m in members])
        model.lo, model.hi = S.min(axis=1), S.max(axis=1)
        model.threshold = calibrate_threshold(model._combine(S), 1 - nu)
    return model


def combine_votes(members, x, strategy=VoteStrategy.SCORE_AVERAGE, model: VotingModel | None = None):
    """Combined (score, flag) for ``x``.

    MAJORITY needs only the members. SCORE_AVERAGE needs a calibrated
    ``model`` from :func:`fit_voting` (its members are used).
    """
    strategy = VoteStrategy(strategy)
    if strategy is VoteStrategy.MAJORITY:
        if not members:
            raise ValueError("voting needs at least one member")
        flags = np.vstack([m.flag(x) for m in members])
        return flags.mean(axis=0), majority_flags(flags)
    if model is None:
        raise ValueError("SCORE_AVERAGE needs a model calibrated with fit_voting")
    return model.score(x), model.flag(x)
