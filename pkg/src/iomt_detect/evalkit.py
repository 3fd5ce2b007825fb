"""Confusion matrices, per-class metrics, k-fold CV, grid search and the
summary report.

Anomaly (label 1) is the positive class. Normal-class metrics are the same
formulas with the roles of the classes swapped. A 0/0 ratio evaluates to 0
and sets a flag in ``MetricsReport.zero_division``.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .modelio import write_atomic

REPORT_COLUMNS = (
    "Precision(Normal)", "Precision(Anomaly)", "Recall(Normal)", "Recall(Anomaly)",
    "F1(Normal)", "F1(Anomaly)", "Accuracy",
)
_REPORT_KEYS = (
    "precision_normal", "precision_anomaly", "recall_normal", "recall_anomaly",
    "f1_normal", "f1_anomaly", "accuracy",
)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def swapped(self) -> "ConfusionMatrix":
        """The same matrix with class 0 treated as positive."""
        return ConfusionMatrix(tp=self.tn, fp=self.fn, tn=self.tp, fn=self.fp)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}

    def ascii(self) -> str:
        w = max(len(str(v)) for v in (self.tp, self.fp, self.tn, self.fn, "pred 1"))
        lines = [
            f"{'':>10} {'pred 0':>{w}} {'pred 1':>{w}}",
            f"{'true 0':>10} {self.tn:>{w}} {self.fp:>{w}}",
            f"{'true 1':>10} {self.fn:>{w}} {self.tp:>{w}}",
        ]
        return "\n".join(lines)


def confusion(y_true, y_pred) -> ConfusionMatrix:
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError(f"label vectors must be 1-D and equal length, got {t.shape} and {p.shape}")
    for name, v in (("y_true", t), ("y_pred", p)):
        if not np.all((v == 0) | (v == 1)):
            raise ValueError(f"{name} contains values outside {{0, 1}}")
    t = t.astype(bool)
    p = p.astype(bool)
    return ConfusionMatrix(tp=int(np.sum(t & p)), fp=int(np.sum(~t & p)),
                           tn=int(np.sum(~t & ~p)), fn=int(np.sum(t & ~p)))


def _ratio(num: int, den: int) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def f1_score(precision: float, recall: float) -> float:
    """2PR / (P + R), or 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class MetricsReport:
    accuracy: float
    precision: dict
    recall: dict
    f1: dict
    zero_division: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {
            "precision_normal": self.precision[0], "precision_anomaly": self.precision[1],
            "recall_normal": self.recall[0], "recall_anomaly": self.recall[1],
            "f1_normal": self.f1[0], "f1_anomaly": self.f1[1], "accuracy": self.accuracy,
        }


def _class_metrics(cm: ConfusionMatrix):
    p, p_flag = _ratio(cm.tp, cm.tp + cm.fp)
    r, r_flag = _ratio(cm.tp, cm.tp + cm.fn)
    # 2TP / (2TP + FP + FN) equals 2PR/(P+R) and is a single rounding away from exact
    f1, f_flag = _ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn)
    return p, r, f1, {"precision": p_flag, "recall": r_flag, "f1": f_flag}


def classification_metrics(cm: ConfusionMatrix) -> MetricsReport:
    if cm.n == 0:
        raise ValueError("empty confusion matrix")
    p1, r1, f1_1, z1 = _class_metrics(cm)
    p0, r0, f1_0, z0 = _class_metrics(cm.swapped())
    acc = (cm.tp + cm.tn) / cm.n
    return MetricsReport(acc, {0: p0, 1: p1}, {0: r0, 1: r1}, {0: f1_0, 1: f1_1},
                         {0: z0, 1: z1})


# ------------------------------------------------------------ cross-validation


def k_fold_indices(n: int, k: int, labels=None, seed: int = 0) -> np.ndarray:
    """Fold id (0..k-1) for each of ``n`` items.

    With ``labels``, each class is shuffled separately and the classes are
    laid end to end before dealing round-robin, which stratifies the folds
    and keeps every fold size within 1 of the others.
    """
    if k < 2 or k > n:
        raise ValueError(f"need 2 <= k <= n (k={k}, n={n})")
    rng = np.random.default_rng(seed)
    if labels is None:
        order = rng.permutation(n)
    else:
        labels = np.asarray(labels)
        if len(labels) != n:
            raise ValueError("labels length differs from n")
        order = np.concatenate([rng.permutation(np.flatnonzero(labels == c))
                                for c in np.unique(labels)])
    folds = np.empty(n, dtype=np.int64)
    folds[order] = np.arange(n) % k
    return folds


@dataclass
class GridSpec:
    values: dict
    folds: int = 5
    metric: str = "f1_anomaly"
    seed: int = 0

    def cells(self) -> list[dict]:
        """Cartesian product, keys in insertion order, last key varying fastest."""
        if not self.values or any(len(v) == 0 for v in self.values.values()):
            raise ValueError("grid is empty")
        keys = list(self.values)
        return [dict(zip(keys, combo)) for combo in itertools.product(*self.values.values())]

    @classmethod
    def from_dict(cls, doc: dict) -> "GridSpec":
        if "values" in doc:
            return cls(doc["values"], doc.get("folds", 5), doc.get("metric", "f1_anomaly"),
                       doc.get("seed", 0))
        return cls(dict(doc))


def metric_value(name: str, y_true, y_pred) -> float:
    row = classification_metrics(confusion(y_true, y_pred)).row()
    if name not in row:
        raise ValueError(f"unknown selection metric {name!r}; choose from {sorted(row)}")
    return row[name]


@dataclass
class GridResult:
    best_params: dict
    best_score: float
    cells: list

    def to_dict(self) -> dict:
        return {"best_params": self.best_params, "best_score": self.best_score, "cells": self.cells}


def grid_search(family, grid: GridSpec, X, y, seed: int | None = None) -> GridResult:
    """Exhaustive k-fold evaluation of every grid cell.

    ``family`` is a family name (see :mod:`iomt_detect.families`) or any
    callable ``fit(X_train, y_train, params, seed) -> model`` whose model has
    ``flag(X)``. Cells are ranked by mean fold score; the first enumerated
    cell wins ties.
    """
    from .families import get_family

    fit: Callable = get_family(family).fit if isinstance(family, str) else family
    seed = grid.seed if seed is None else seed
    y = np.asarray(y)
    folds = k_fold_indices(len(y), grid.folds, y, seed)
    cells = []
    best = None
    for ci, params in enumerate(grid.cells()):
        scores = []
        for f in range(grid.folds):
            tr, va = folds != f, folds == f
            model = fit(X[tr], y[tr], params, seed + f)
            scores.append(metric_value(grid.metric, y[va], model.flag(X[va])))
        mean = float(np.mean(scores))
        cells.append({"params": params, "mean_score": mean, "fold_scores": scores})
        if best is None or mean > cells[best]["mean_score"]:
            best = ci
    return GridResult(cells[best]["params"], cells[best]["mean_score"], cells)


# --------------------------------------------------------------------- report


@dataclass
class ModelResult:
    segment: str
    model: str
    metrics: MetricsReport | None
    confusion: ConfusionMatrix | None = None
    extra: dict = field(default_factory=dict)

    def cells(self) -> dict:
        if self.metrics is None:
            row = {k: None for k in _REPORT_KEYS}
            row.update({k: v for k, v in self.extra.items() if k in _REPORT_KEYS})
            return row
        return self.metrics.row()


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.4f}"


def render_report(results: Sequence[ModelResult], title: str = "Model Accuracy and Evaluation Summary",
                  header_lines: Sequence[str] = ()):
    """Render results as (text table, JSON document, CSV text).

    Every number passes through one 4-decimal formatter, so the three
    renderings agree exactly. Missing cells print as ``-``.
    """
    name_w = max([len("Model")] + [len(r.model) for r in results]) + 2
    col_w = [max(len(c), 6) + 2 for c in REPORT_COLUMNS]
    head = "Model".ljust(name_w) + "".join(c.rjust(w) for c, w in zip(REPORT_COLUMNS, col_w))
    lines = [*header_lines, title, "=" * len(head), head, "-" * len(head)]
    json_rows = []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["Segment", "Model", *REPORT_COLUMNS, "TP", "FP", "TN", "FN"])
    segment = None
    for r in results:
        if r.segment != segment:
            segment = r.segment
            lines.append(f"[{segment}]")
        cells = r.cells()
        shown = [_fmt(cells[k]) for k in _REPORT_KEYS]
        lines.append(r.model.ljust(name_w) + "".join(s.rjust(w) for s, w in zip(shown, col_w)))
        cm = r.confusion
        counts = [cm.tp, cm.fp, cm.tn, cm.fn] if cm is not None else ["", "", "", ""]
        writer.writerow([r.segment, r.model, *["" if s == "-" else s for s in shown], *counts])
        json_rows.append({
            "segment": r.segment, "model": r.model,
            "metrics": {c: (None if s == "-" else float(s)) for c, s in zip(REPORT_COLUMNS, shown)},
            "confusion": None if cm is None else cm.to_dict(),
            "zero_division": None if r.metrics is None else
            {str(k): v for k, v in r.metrics.zero_division.items()},
        })
    confusions = [r for r in results if r.confusion is not None]
    if confusions:
        lines += ["", "Confusion matrices (rows = true class, columns = predicted)"]
        for r in confusions:
            lines += ["", f"{r.segment} / {r.model}", r.confusion.ascii()]
    text = "\n".join(lines) + "\n"
    doc = {"title": title, "columns": list(REPORT_COLUMNS), "rows": json_rows}
    return text, doc, buf.getvalue()


def write_report(results, out_dir, header_lines=(), provenance: dict | None = None) -> dict:
    text, doc, csv_text = render_report(results, header_lines=header_lines)
    if provenance is not None:
        doc["provenance"] = provenance
    paths = {name: os.path.join(out_dir, name) for name in ("report.txt", "report.json", "report.csv")}
    write_atomic(paths["report.txt"], text)
    write_atomic(paths["report.json"], json.dumps(doc, indent=1, sort_keys=True) + "\n")
    write_atomic(paths["report.csv"], csv_text)
    return paths
