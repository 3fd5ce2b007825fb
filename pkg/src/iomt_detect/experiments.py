"""End-to-end runs for the four traffic segments.

Each experiment generates (or takes) a FeatureMatrix, splits it, imputes
and standardizes with training statistics, trains the segment's model
line-up and evaluates on the held-out part. Point segments use a
stratified row split; series segments split chronologically per device so
no window straddles train and test.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import flowdata as fd
from .ensemble import STACKING_BASES, BaseSpec, VoteStrategy, fit_stacking, fit_voting
from .evalkit import ModelResult, classification_metrics, confusion
from .families import get_family
from .synthgen import Segment, SegmentSpec, generate

EXPERIMENT_SEGMENTS = {
    "multi-protocol": Segment.MULTI_PROTOCOL,
    "attack-specific": Segment.ATTACK_SPECIFIC,
    "time-series": Segment.TIME_SERIES,
    "device-specific": Segment.DEVICE_PROFILES,
}

SEGMENT_TITLES = {
    "multi-protocol": "Multi-Protocol Data",
    "attack-specific": "Attack-Specific Data",
    "time-series": "Time-Series Data (Sequential)",
    "device-specific": "Device-Specific Data",
}

DEFAULT_DIFFICULTY = {"multi-protocol": 2.0, "attack-specific": 8.0, "time-series": 2.0,
                      "device-specific": 2.0}
DEFAULT_ATTACK_RATIO = {"multi-protocol": 0.1, "attack-specific": 0.3, "time-series": 0.0,
                        "device-specific": 0.1}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 42
    n: int = 2000
    difficulty: float | None = None
    attack_ratio: float | None = None
    test_fraction: float = 0.25
    window: int = 4
    folds: int = 5
    seq_epochs: int = 30
    stack_seq_epochs: int = 20
    ae_epochs: int = 50
    nu: float = 0.1

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_SEGMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; "
                             f"choose from {sorted(EXPERIMENT_SEGMENTS)}")
        if self.difficulty is None:
            self.difficulty = DEFAULT_DIFFICULTY[self.experiment]
        if self.attack_ratio is None:
            self.attack_ratio = DEFAULT_ATTACK_RATIO[self.experiment]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentRun:
    config: ExperimentConfig
    results: list
    curves: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)


def _result(segment, name, y_true, y_pred) -> ModelResult:
    cm = confusion(y_true, y_pred)
    return ModelResult(segment, name, classification_metrics(cm), cm)


def prepare_rows(m: fd.FeatureMatrix, cfg: ExperimentConfig):
    train, test = fd.stratified_split(m, cfg.test_fraction, cfg.seed)
    means = fd.finite_column_means(train)
    train, test = fd.impute_mean(train, means), fd.impute_mean(test, means)
    scaler = fd.fit_standardizer(train)
    Xtr = scaler.apply(train).values[:, None, :]
    Xte = scaler.apply(test).values[:, None, :]
    return Xtr, train.labels, Xte, test.labels


def chronological_split(m: fd.FeatureMatrix, test_fraction: float):
    tr, te = [], []
    for g in fd.series_groups(m):
        cut = int(round(len(g) * (1 - test_fraction)))
        tr.append(g[:cut])
        te.append(g[cut:])
    return m.take(np.concatenate(tr)), m.take(np.concatenate(te))


def prepare_windows(m: fd.FeatureMatrix, cfg: ExperimentConfig):
    train, test = chronological_split(m, cfg.test_fraction)
    means = fd.finite_column_means(train)
    train, test = fd.impute_mean(train, means), fd.impute_mean(test, means)
    scaler = fd.fit_standardizer(train)
    Xtr, ytr, _ = fd.windows_from_matrix(scaler.apply(train), cfg.window)
    Xte, yte, _ = fd.windows_from_matrix(scaler.apply(test), cfg.window)
    return Xtr, ytr, Xte, yte


def _point_lineup(cfg):
    return {
        "autoencoder": {"epochs": cfg.ae_epochs},
        "iforest": {"contamination": cfg.nu},
        "ocsvm": {"nu": cfg.nu},
        "knn": {"contamination": cfg.nu},
    }


DISPLAY = {"autoencoder": "Autoencoder", "iforest": "Isolation Forest", "ocsvm": "One-Class SVM",
           "knn": "KNN", "lstm": "LSTM", "gru": "GRU", "cnn-lstm": "CNN-LSTM",
           "logreg": "Logistic Regression"}


def _run_multi_protocol(cfg, Xtr, ytr, Xte, yte, seg, run):
    members = {}
    for i, (fam, params) in enumerate(_point_lineup(cfg).items()):
        members[fam] = get_family(fam).fit(Xtr, ytr, params, cfg.seed + i)
    flags = {}
    for fam, model in members.items():
        flags[fam] = model.flag(Xte)
        run.results.append(_result(seg, DISPLAY[fam], yte, flags[fam]))
    # the combiner is label-free, so it is calibrated on the whole training split
    vote = fit_voting(list(members.values()), Xtr, VoteStrategy.SCORE_AVERAGE, cfg.nu)
    flags["ensemble"] = vote.flag(Xte)
    run.results.append(_result(seg, "Ensemble (score average)", yte, flags["ensemble"]))
    stack = fit_stacking([BaseSpec(f, p) for f, p in _point_lineup(cfg).items()],
                         Xtr, ytr, cfg.folds, seed=cfg.seed)
    run.results.append(_result(seg, "Ensemble Stacking (XGBoost)", yte, stack.flag(Xte)))
    run.details["flag_counts"] = {k: int(v.sum()) for k, v in flags.items()}
    run.details["n_test"] = int(len(yte))
    run.models.update(members)
    run.models["ensemble"] = vote
    run.models["stacking"] = stack


def _run_attack_specific(cfg, Xtr, ytr, Xte, yte, seg, run):
    for i, fam in enumerate(("lstm", "cnn-lstm", "gru")):
        model = get_family(fam).fit(Xtr, ytr, {"epochs": cfg.seq_epochs}, cfg.seed + i)
        run.results.append(_result(seg, DISPLAY[fam], yte, model.flag(Xte)))
        run.curves[fam] = model.model.training_curve_csv()
        run.models[fam] = model
    specs = []
    for fam in STACKING_BASES:
        params = {"epochs": cfg.stack_seq_epochs} if get_family(fam).view == "windows" else {}
        if fam == "autoencoder":
            params = {"epochs": cfg.ae_epochs}
        specs.append(BaseSpec(fam, params))
    stack = fit_stacking(specs, Xtr, ytr, cfg.folds, seed=cfg.seed)
    run.results.append(_result(seg, "Ensemble Stacking (XGBoost)", yte, stack.flag(Xte)))
    run.models["stacking"] = stack


def _run_time_series(cfg, Xtr, ytr, Xte, yte, seg, run):
    for i, fam in enumerate(("lstm", "cnn-lstm", "logreg")):
        params = {"epochs": cfg.seq_epochs}
        model = get_family(fam).fit(Xtr, ytr, params, cfg.seed + i)
        run.results.append(_result(seg, DISPLAY[fam], yte, model.flag(Xte)))
        run.curves[fam] = model.model.training_curve_csv()
        run.models[fam] = model


def _run_device(cfg, Xtr, ytr, Xte, yte, seg, run):
    lineup = _point_lineup(cfg)
    for i, fam in enumerate(("autoencoder", "iforest")):
        model = get_family(fam).fit(Xtr, ytr, lineup[fam], cfg.seed + i)
        run.results.append(_result(seg, DISPLAY[fam], yte, model.flag(Xte)))
        run.models[fam] = model


_RUNNERS = {
    "multi-protocol": (prepare_rows, _run_multi_protocol),
    "attack-specific": (prepare_windows, _run_attack_specific),
    "time-series": (prepare_windows, _run_time_series),
    "device-specific": (prepare_rows, _run_device),
}


def dataset_for(cfg: ExperimentConfig) -> fd.FeatureMatrix:
    spec = SegmentSpec(EXPERIMENT_SEGMENTS[cfg.experiment], cfg.n, cfg.attack_ratio, cfg.seed,
                       cfg.difficulty)
    return generate(spec)


def run_experiment(cfg: ExperimentConfig, data: fd.FeatureMatrix | None = None) -> ExperimentRun:
    """Run one segment end to end.

    ``data`` replaces the synthetic generator (e.g. a user-supplied CSV in
    the canonical schema); it must be fully labeled.
    """
    m = dataset_for(cfg) if data is None else data
    if not m.has_labels:
        raise fd.DataError("experiment data must carry a label for every row")
    prepare, runner = _RUNNERS[cfg.experiment]
    Xtr, ytr, Xte, yte = prepare(m, cfg)
    run = ExperimentRun(cfg, [])
    run.details["n_train"] = int(len(ytr))
    runner(cfg, Xtr, ytr, Xte, yte, SEGMENT_TITLES[cfg.experiment], run)
    return run


def repro(experiment: str, seed: int = 42, **overrides) -> ExperimentRun:
    return run_experiment(ExperimentConfig(experiment, seed, **overrides))
