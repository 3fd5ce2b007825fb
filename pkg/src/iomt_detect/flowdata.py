"""Flow-record schema, CSV ingestion and preprocessing.

Rows are per-flow summary features. The preprocessing chain is
mean imputation of non-finite cells, z-score standardization with
statistics taken from training data only, and fixed-length sliding
windows for the sequence models.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .modelio import write_atomic

log = logging.getLogger(__name__)

CANONICAL_SCHEMA: tuple[str, ...] = (
    "bytes_sent",
    "bytes_received",
    "packets",
    "duration_s",
    "pkt_rate",
    "mean_pkt_size",
    "distinct_ports",
    "inter_arrival_mean_s",
)

STANDARDIZER_SCHEMA_VERSION = 1
UNLABELED = -1

# optional metadata columns understood by the CSV reader/writer
META_COLUMNS = ("timestamp", "device_id", "protocol")


class DataError(ValueError):
    """Raised for malformed input data (bad CSV, empty columns, bad labels)."""


class Protocol(str, enum.Enum):
    WIFI = "WIFI"
    MQTT = "MQTT"
    TCPIP = "TCPIP"
    BLUETOOTH = "BLUETOOTH"


class Label(enum.IntEnum):
    BENIGN = 0
    ATTACK = 1


@dataclass(frozen=True)
class FlowRecord:
    timestamp: float
    device_id: str
    protocol: Protocol
    features: np.ndarray
    label: int = UNLABELED
    schema: tuple[str, ...] = CANONICAL_SCHEMA

    def __post_init__(self):
        if len(self.features) != len(self.schema):
            raise DataError(
                f"feature vector has {len(self.features)} values, schema has {len(self.schema)}")
        if self.timestamp < 0:
            raise DataError("timestamp must be non-negative")
        if self.label not in (0, 1, UNLABELED):
            raise DataError(f"label {self.label!r} not in {{0, 1}}")


@dataclass
class FeatureMatrix:
    """An n x d block of flow features plus optional per-row metadata.

    ``labels`` uses -1 for unlabeled rows. ``extra`` holds any further
    string/float columns (e.g. ``attack_type``) that travel with the rows
    but are not model inputs.
    """

    values: np.ndarray
    column_names: tuple[str, ...]
    labels: np.ndarray | None = None
    timestamps: np.ndarray | None = None
    device_ids: np.ndarray | None = None
    protocols: np.ndarray | None = None
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            self.values = self.values.reshape(-1, len(self.column_names))
        self.column_names = tuple(self.column_names)
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("column names must be unique")
        if self.values.shape[1] != len(self.column_names):
            raise DataError(
                f"{self.values.shape[1]} value columns but {len(self.column_names)} names")
        n = self.values.shape[0]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise DataError(f"labels have length {len(self.labels)}, expected {n}")
        for name in ("timestamps", "device_ids", "protocols"):
            col = getattr(self, name)
            if col is not None and len(col) != n:
                raise DataError(f"{name} has length {len(col)}, expected {n}")
        if self.timestamps is not None:
            self.timestamps = np.asarray(self.timestamps, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None and bool(np.all(self.labels != UNLABELED))

    def nonfinite_mask(self) -> np.ndarray:
        return ~np.isfinite(self.values)

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        pick = lambda a: None if a is None else np.asarray(a)[idx]
        return FeatureMatrix(
            values=self.values[idx],
            column_names=self.column_names,
            labels=pick(self.labels),
            timestamps=pick(self.timestamps),
            device_ids=pick(self.device_ids),
            protocols=pick(self.protocols),
            extra={k: np.asarray(v)[idx] for k, v in self.extra.items()},
        )

    def with_values(self, values: np.ndarray) -> "FeatureMatrix":
        return replace(self, values=np.asarray(values, dtype=np.float64), extra=dict(self.extra))

    def records(self) -> list[FlowRecord]:
        out = []
        for i in range(self.n):
            out.append(FlowRecord(
                timestamp=float(self.timestamps[i]) if self.timestamps is not None else 0.0,
                device_id=str(self.device_ids[i]) if self.device_ids is not None else "",
                protocol=Protocol(self.protocols[i]) if self.protocols is not None else Protocol.TCPIP,
                features=self.values[i].copy(),
                label=int(self.labels[i]) if self.labels is not None else UNLABELED,
                schema=self.column_names,
            ))
        return out

    @classmethod
    def from_records(cls, records: Sequence[FlowRecord]) -> "FeatureMatrix":
        if not records:
            return cls(np.zeros((0, len(CANONICAL_SCHEMA))), CANONICAL_SCHEMA)
        return cls(
            values=np.stack([r.features for r in records]),
            column_names=records[0].schema,
            labels=np.array([r.label for r in records]),
            timestamps=np.array([r.timestamp for r in records]),
            device_ids=np.array([r.device_id for r in records], dtype=object),
            protocols=np.array([r.protocol.value for r in records], dtype=object),
        )


def _parse_float(cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        return math.nan


def load_flow_csv(path, schema: Sequence[str] = CANONICAL_SCHEMA) -> FeatureMatrix:
    """Read a flow CSV into a FeatureMatrix.

    Unparseable numeric cells become NaN; ``inf``/``-inf`` are kept as
    infinities so imputation can see them. A ``label`` column is mapped to
    0/1 (empty cells mean unlabeled).
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    schema = tuple(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: missing header row") from None
        missing = [c for c in schema if c not in header]
        if missing:
            raise DataError(f"{path}: header missing schema column(s) {', '.join(missing)}")
        pos = {name: header.index(name) for name in header}
        rows = [r for r in reader if r]

    values = np.array([[_parse_float(r[pos[c]]) for c in schema] for r in rows],
                      dtype=np.float64).reshape(len(rows), len(schema))
    labels = None
    if "label" in pos:
        labels = np.empty(len(rows), dtype=np.int64)
        for i, r in enumerate(rows):
            cell = r[pos["label"]].strip()
            if cell == "":
                labels[i] = UNLABELED
            elif cell in ("0", "1", "0.0", "1.0"):
                labels[i] = int(float(cell))
            else:
                raise DataError(f"{path}: line {i + 2}: label {cell!r} not in {{0, 1, empty}}")
        if len(rows) and np.all(labels == UNLABELED):
            labels = None
    timestamps = device_ids = protocols = None
    if "timestamp" in pos:
        timestamps = np.array([_parse_float(r[pos["timestamp"]]) for r in rows], dtype=np.float64)
    if "device_id" in pos:
        device_ids = np.array([r[pos["device_id"]] for r in rows], dtype=object)
    if "protocol" in pos:
        protocols = np.array([r[pos["protocol"]].strip().upper() for r in rows], dtype=object)
    known = set(schema) | set(META_COLUMNS) | {"label"}
    extra = {name: np.array([r[pos[name]] for r in rows], dtype=object)
             for name in header if name not in known}
    return FeatureMatrix(values, schema, labels, timestamps, device_ids, protocols, extra)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_flow_csv(m: FeatureMatrix, path) -> None:
    """Write ``m`` as CSV; floats use repr() so a reload is bit-exact."""
    header = list(m.column_names)
    cols = []
    if m.timestamps is not None:
        header.append("timestamp")
        cols.append([_fmt(t) for t in m.timestamps])
    if m.device_ids is not None:
        header.append("device_id")
        cols.append([str(v) for v in m.device_ids])
    if m.protocols is not None:
        header.append("protocol")
        cols.append([str(v) for v in m.protocols])
    for name, col in m.extra.items():
        header.append(name)
        cols.append([str(v) for v in col])
    if m.labels is not None:
        header.append("label")
        cols.append(["" if v == UNLABELED else str(int(v)) for v in m.labels])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i in range(m.n):
        w.writerow([_fmt(v) for v in m.values[i]] + [c[i] for c in cols])
    write_atomic(path, buf.getvalue())


def finite_column_means(m: FeatureMatrix) -> np.ndarray:
    """Per-column mean over finite cells; raises if a column has none."""
    finite = np.isfinite(m.values)
    counts = finite.sum(axis=0)
    empty = [m.column_names[j] for j in np.flatnonzero(counts == 0)]
    if empty:
        raise DataError(f"column(s) with no finite values: {', '.join(empty)}")
    sums = np.where(finite, m.values, 0.0).sum(axis=0)
    return sums / counts


def impute_mean(m: FeatureMatrix, means: np.ndarray | None = None) -> FeatureMatrix:
    """Replace NaN/+-inf in each column by that column's finite mean.

    Pass ``means`` (e.g. from the training split) to impute test data
    without peeking at its own statistics.
    """
    if m.n == 0:
        return m.with_values(m.values.copy())
    if means is None:
        means = finite_column_means(m)
    means = np.asarray(means, dtype=np.float64)
    if means.shape != (m.d,):
        raise DataError(f"imputation means have shape {means.shape}, expected ({m.d},)")
    bad = ~np.isfinite(m.values)
    out = np.where(bad, means[None, :], m.values)
    return m.with_values(out)


@dataclass(frozen=True)
class Standardizer:
    """Per-column z-scoring fitted on training rows.

    Uses the population standard deviation (divisor n). Constant columns
    get std = 1 so they map to 0.
    """

    mean: np.ndarray
    std: np.ndarray
    fitted_on_rows: int
    column_names: tuple[str, ...] = CANONICAL_SCHEMA

    @property
    def d(self) -> int:
        return len(self.mean)

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d:
            raise DataError(f"standardizer fitted on d={self.d}, got d={x.shape[-1]}")
        return (x - self.mean) / self.std

    def apply(self, m: FeatureMatrix) -> FeatureMatrix:
        return m.with_values(self.transform(m.values))

    def to_dict(self) -> dict:
        return {
            "schema_version": STANDARDIZER_SCHEMA_VERSION,
            "column_names": list(self.column_names),
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "fitted_on_rows": int(self.fitted_on_rows),
            "std_divisor": "n",
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Standardizer":
        if doc.get("schema_version") != STANDARDIZER_SCHEMA_VERSION:
            raise DataError(f"unsupported standardizer schema_version {doc.get('schema_version')!r}")
        return cls(
            mean=np.array(doc["mean"], dtype=np.float64),
            std=np.array(doc["std"], dtype=np.float64),
            fitted_on_rows=int(doc.get("fitted_on_rows", 0)),
            column_names=tuple(doc["column_names"]),
        )

    def save(self, path, **extra) -> None:
        write_atomic(path, json.dumps({**self.to_dict(), **extra}, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Standardizer":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_standardizer(train: FeatureMatrix) -> Standardizer:
    if train.n == 0:
        raise DataError("cannot fit a standardizer on zero rows")
    if not np.all(np.isfinite(train.values)):
        raise DataError("standardizer input must be imputed first (non-finite values present)")
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    # exactly constant columns; their float std can come out at roundoff level
    constant = np.ptp(train.values, axis=0) == 0
    std = np.where((std > 0) & ~constant, std, 1.0)
    return Standardizer(mean, std, train.n, train.column_names)


def apply_standardizer(s: Standardizer, m: FeatureMatrix) -> FeatureMatrix:
    return s.apply(m)


@dataclass(frozen=True)
class SequenceWindow:
    steps: np.ndarray  # (w, d)
    label: int
    origin_index: int


def make_windows(series: FeatureMatrix, w: int = 4, stride: int = 1) -> list[SequenceWindow]:
    """Slide a length-``w`` window over time-ordered rows.

    A window takes the label of its last step. Fewer than ``w`` rows gives
    an empty list and a warning.
    """
    if w < 1 or stride < 1:
        raise ValueError("window length and stride must be >= 1")
    if series.n < w:
        log.warning("series has %d rows, fewer than window length %d; no windows", series.n, w)
        return []
    labels = series.labels if series.labels is not None else np.full(series.n, UNLABELED)
    return [SequenceWindow(series.values[s:s + w], int(labels[s + w - 1]), s)
            for s in range(0, series.n - w + 1, stride)]


def windows_to_arrays(windows: Sequence[SequenceWindow]) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows into an (n, w, d) tensor and a label vector."""
    if not windows:
        return np.zeros((0, 0, 0)), np.zeros(0, dtype=np.int64)
    X = np.stack([win.steps for win in windows])
    y = np.array([win.label for win in windows], dtype=np.int64)
    return X, y


def series_groups(m: FeatureMatrix) -> list[np.ndarray]:
    """Row indices per device (or a single group), each sorted by timestamp."""
    if m.device_ids is None:
        groups = [np.arange(m.n)]
    else:
        ids = np.asarray(m.device_ids).astype(str)
        groups = [np.flatnonzero(ids == dev) for dev in dict.fromkeys(ids)]
    if m.timestamps is not None:
        groups = [g[np.argsort(m.timestamps[g], kind="stable")] for g in groups]
    return groups


def windows_from_matrix(m: FeatureMatrix, w: int = 4, stride: int = 1):
    """Window every device series separately and stack the result.

    Returns ``(X, y, last_rows)`` where ``last_rows`` maps each window to
    the row index of its final step in ``m``.
    """
    xs, ys, last = [], [], []
    for g in series_groups(m):
        sub = m.take(g)
        for win in make_windows(sub, w, stride):
            xs.append(win.steps)
            ys.append(win.label)
            last.append(g[win.origin_index + w - 1])
    if not xs:
        return np.zeros((0, w, m.d)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.stack(xs), np.array(ys, dtype=np.int64), np.array(last, dtype=np.int64)


def stratified_split(m: FeatureMatrix, test_fraction: float, seed: int):
    """Split rows into (train, test) keeping class proportions.

    Each class contributes round(n_c * test_fraction) rows to the test
    side. Output rows keep their original relative order.
    """
    if not m.has_labels:
        raise DataError("stratified_split needs a fully labeled matrix")
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    test_idx = []
    for cls in np.unique(m.labels):
        members = np.flatnonzero(m.labels == cls)
        if len(members) < 2:
            raise DataError(f"class {int(cls)} has fewer than 2 members")
        k = int(round(len(members) * test_fraction))
        k = min(max(k, 1), len(members) - 1)
        test_idx.append(rng.permutation(members)[:k])
    test = np.sort(np.concatenate(test_idx))
    train = np.setdiff1d(np.arange(m.n), test)
    return m.take(train), m.take(test)


def split_indices(labels: np.ndarray, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Index-level version of :func:`stratified_split` for arrays of windows."""
    rows = FeatureMatrix(np.arange(len(labels), dtype=float)[:, None], ("row",), labels=labels)
    train, test = stratified_split(rows, test_fraction, seed)
    return train.values[:, 0].astype(np.int64), test.values[:, 0].astype(np.int64)


def concat(parts: Iterable[FeatureMatrix]) -> FeatureMatrix:
    parts = list(parts)
    first = parts[0]
    cat = lambda name: (None if getattr(first, name) is None
                        else np.concatenate([getattr(p, name) for p in parts]))
    return FeatureMatrix(
        values=np.concatenate([p.values for p in parts]),
        column_names=first.column_names,
        labels=cat("labels"),
        timestamps=cat("timestamps"),
        device_ids=cat("device_ids"),
        protocols=cat("protocols"),
        extra={k: np.concatenate([p.extra[k] for p in parts]) for k in first.extra},
    )
