"""Deterministic synthetic IoMT flow traffic for four data segments.

Benign flows are log-normal: log duration, log packet rate, log mean packet
size, log bytes received and log distinct ports are Gaussian, and the rest
follow from them (packets = rate * duration, bytes_sent = packets *
mean_pkt_size, inter_arrival_mean_s = 1 / rate). Anomalies shift the
relevant log-features by ``difficulty`` standard deviations of the benign
distribution, so difficulty 8 is near-separable on packet rate alone and
difficulty 2 overlaps.

Every generator draws from ``np.random.default_rng(spec.seed)`` in a fixed
order, so the same spec always yields the same rows.
"""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass

import numpy as np

from .flowdata import CANONICAL_SCHEMA, FeatureMatrix, write_flow_csv
from .modelio import write_atomic

T0 = 1_700_000_000.0


class Segment(str, enum.Enum):
    MULTI_PROTOCOL = "MULTI_PROTOCOL"
    ATTACK_SPECIFIC = "ATTACK_SPECIFIC"
    TIME_SERIES = "TIME_SERIES"
    DEVICE_PROFILES = "DEVICE_PROFILES"


PRESETS = {"separable": 8.0, "overlapping": 2.0}


@dataclass(frozen=True)
class SegmentSpec:
    segment: Segment
    n: int = 2000
    attack_ratio: float = 0.1
    seed: int = 42
    difficulty: float = 8.0

    def __post_init__(self):
        object.__setattr__(self, "segment", Segment(self.segment))
        if not 0 <= self.attack_ratio < 1:
            raise ValueError("attack_ratio must lie in [0, 1)")
        if self.n < 20:
            raise ValueError("n must be >= 20")
        if self.difficulty < 0:
            raise ValueError("difficulty must be non-negative")

    @property
    def n_attack(self) -> int:
        return int(round(self.n * self.attack_ratio))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["segment"] = self.segment.value
        return d


@dataclass(frozen=True)
class FlowProfile:
    """Means/std-devs of the Gaussian log-features for one traffic class."""

    log_duration: tuple = (0.0, 0.5)
    log_rate: tuple = (3.0, 0.5)
    log_pkt_size: tuple = (5.5, 0.35)
    log_bytes_received: tuple = (6.0, 0.5)
    log_ports: tuple = (0.7, 0.3)


WIFI = FlowProfile(log_rate=(3.0, 0.5), log_pkt_size=(6.8, 0.35), log_bytes_received=(8.0, 0.5))
MQTT = FlowProfile(log_rate=(3.4, 0.5), log_pkt_size=(4.3, 0.35), log_bytes_received=(5.0, 0.5))
TCPIP = FlowProfile(log_rate=(3.2, 0.5), log_pkt_size=(6.0, 0.35), log_bytes_received=(7.0, 0.5))
IDLE = FlowProfile(log_duration=(1.0, 0.5), log_rate=(0.5, 0.5), log_pkt_size=(4.5, 0.35),
                   log_bytes_received=(4.5, 0.5), log_ports=(0.3, 0.2))


def _flows(rng, profile: FlowProfile, n: int, shifts=None) -> np.ndarray:
    """Draw ``n`` flows; ``shifts`` maps a log-feature name to per-row shifts
    measured in that feature's standard deviations."""
    shifts = shifts or {}
    draws = {}
    for name in ("log_duration", "log_rate", "log_pkt_size", "log_bytes_received", "log_ports"):
        mu, sd = getattr(profile, name)
        z = rng.standard_normal(n) + np.broadcast_to(shifts.get(name, 0.0), (n,))
        draws[name] = mu + sd * z
    duration = np.exp(draws["log_duration"])
    rate = np.exp(draws["log_rate"])
    pkt_size = np.exp(draws["log_pkt_size"])
    packets = rate * duration
    out = np.empty((n, len(CANONICAL_SCHEMA)))
    out[:, 0] = packets * pkt_size
    out[:, 1] = np.exp(draws["log_bytes_received"])
    out[:, 2] = packets
    out[:, 3] = duration
    out[:, 4] = packets / duration
    out[:, 5] = pkt_size
    out[:, 6] = np.maximum(1.0, np.round(np.exp(draws["log_ports"])))
    out[:, 7] = 1.0 / out[:, 4]
    return out


def _timestamps(rng, n: int) -> np.ndarray:
    return T0 + np.arange(n, dtype=np.float64) + rng.uniform(0.0, 0.5, n)


def _exact_positions(rng, n: int, k: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[:k]] = True
    return mask


def gen_multi_protocol(spec: SegmentSpec) -> FeatureMatrix:
    """WiFi and MQTT flows with DDoS-style and port-scan attack rows.

    Both attack types raise the packet rate by ``difficulty`` sigma; DDoS
    rows also raise duration (more packets), port scans raise distinct
    ports.
    """
    rng = np.random.default_rng(spec.seed)
    n, diff = spec.n, spec.difficulty
    is_wifi = _exact_positions(rng, n, n // 2)
    attack = _exact_positions(rng, n, spec.n_attack)
    kind = np.full(n, "none", dtype=object)
    att_idx = np.flatnonzero(attack)
    scan = np.zeros(n, dtype=bool)
    scan[att_idx[rng.permutation(len(att_idx))[: len(att_idx) // 2]]] = True
    kind[attack & ~scan] = "ddos"
    kind[scan] = "portscan"

    values = np.empty((n, len(CANONICAL_SCHEMA)))
    for proto_mask, profile in ((is_wifi, WIFI), (~is_wifi, MQTT)):
        idx = np.flatnonzero(proto_mask)
        rate_shift = np.where(attack[idx], diff, 0.0)
        dur_shift = np.where(kind[idx] == "ddos", diff / 2, 0.0)
        port_shift = np.where(scan[idx], diff, 0.0)
        values[idx] = _flows(rng, profile, len(idx), {
            "log_rate": rate_shift, "log_duration": dur_shift, "log_ports": port_shift})
    device = np.where(is_wifi, "wifi-", "mqtt-").astype(object)
    dev_num = rng.integers(0, 4, n)
    device_ids = np.array([f"{p}{k:02d}" for p, k in zip(device, dev_num)], dtype=object)
    return FeatureMatrix(
        values, CANONICAL_SCHEMA, labels=attack.astype(np.int64),
        timestamps=_timestamps(rng, n), device_ids=device_ids,
        protocols=np.where(is_wifi, "WIFI", "MQTT").astype(object),
        extra={"attack_type": kind},
    )


def _burst_layout(rng, n: int, n_attack: int, min_len: int, max_len: int):
    """Burst lengths summing to ``n_attack`` (each >= min_len) and the benign
    gap sizes around them (interior gaps >= 1)."""
    if n_attack == 0:
        return [], [n]
    if n_attack < min_len:
        raise ValueError(f"{n_attack} attack rows cannot form a burst of length >= {min_len}")
    lengths = []
    remaining = n_attack
    while remaining > 0:
        L = int(rng.integers(min_len, max_len + 1))
        if remaining - L < min_len:
            L = remaining
        lengths.append(L)
        remaining -= L
    n_benign = n - n_attack
    B = len(lengths)
    if n_benign < B - 1:
        raise ValueError("attack_ratio too high to separate bursts")
    gaps = np.ones(B + 1, dtype=np.int64)
    gaps[0] = gaps[-1] = 0
    gaps += rng.multinomial(n_benign - (B - 1), np.full(B + 1, 1.0 / (B + 1)))
    return lengths, list(gaps)


def gen_attack_series(spec: SegmentSpec, burst_min: int = 4) -> FeatureMatrix:
    """One TCP/IP gateway series with contiguous DoS and DDoS bursts.

    Attack rows raise the packet rate by ``difficulty`` sigma. A source
    entropy proxy (extra column ``src_entropy``) is near 0 for single-source
    DoS, high for DDoS and moderate for benign traffic. Bursts are at least
    ``burst_min`` rows long.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    lengths, gaps = _burst_layout(rng, n, spec.n_attack, burst_min, 3 * burst_min)
    kind = np.full(n, "none", dtype=object)
    pos = 0
    for i, L in enumerate(lengths):
        pos += gaps[i]
        kind[pos:pos + L] = "dos" if rng.random() < 0.5 else "ddos"
        pos += L
    attack = kind != "none"
    values = _flows(rng, TCPIP, n, {"log_rate": np.where(attack, spec.difficulty, 0.0)})
    entropy = np.where(kind == "dos", np.abs(rng.normal(0.1, 0.05, n)),
                       np.where(kind == "ddos", rng.normal(6.0, 0.3, n), rng.normal(2.0, 0.3, n)))
    return FeatureMatrix(
        values, CANONICAL_SCHEMA, labels=attack.astype(np.int64),
        timestamps=_timestamps(rng, n), device_ids=np.full(n, "tcpip-gw", dtype=object),
        protocols=np.full(n, "TCPIP", dtype=object),
        extra={"attack_type": kind, "src_entropy": entropy},
    )


def gen_active_idle(spec: SegmentSpec, stay_probability: float = 0.9) -> FeatureMatrix:
    """Two-state Markov chain (idle = 0, active = 1) over one device.

    Active rows raise packet rate, packet size and received bytes by
    ``difficulty`` sigma over the idle profile. ``attack_ratio`` is not
    used; the state mix follows from the chain (stationary 50/50).
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    state = np.empty(n, dtype=np.int64)
    state[0] = rng.integers(0, 2)
    flips = rng.random(n) >= stay_probability
    for t in range(1, n):
        state[t] = 1 - state[t - 1] if flips[t] else state[t - 1]
    s = state.astype(np.float64) * spec.difficulty
    values = _flows(rng, IDLE, n, {"log_rate": s, "log_pkt_size": s, "log_bytes_received": s})
    return FeatureMatrix(
        values, CANONICAL_SCHEMA, labels=state,
        timestamps=_timestamps(rng, n), device_ids=np.full(n, "monitor-01", dtype=object),
        protocols=np.full(n, "WIFI", dtype=object),
        extra={"state": np.where(state == 1, "active", "idle").astype(object)},
    )


def gen_device_profiles(spec: SegmentSpec, n_devices: int = 6) -> FeatureMatrix:
    """Bluetooth-like devices, each with its own Gaussian baseline.

    Device baselines differ in duration, packet size and received bytes
    (spread 1.0 in log space, within-device sd 0.15). Packet rate and port
    usage share one baseline. Anomalies shift packet rate and packet size by
    ``difficulty`` within-device sigma. Rows are grouped by device and
    time-ordered within each device.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    dev = np.sort(rng.integers(0, n_devices, n))
    anomalous = _exact_positions(rng, n, spec.n_attack)
    within = 0.15
    base_dur = rng.normal(0.5, 1.0, n_devices)
    base_size = rng.normal(4.0, 1.0, n_devices)
    base_recv = rng.normal(4.0, 1.0, n_devices)
    values = np.empty((n, len(CANONICAL_SCHEMA)))
    for k in range(n_devices):
        idx = np.flatnonzero(dev == k)
        profile = FlowProfile(log_duration=(base_dur[k], within), log_rate=(1.0, within),
                              log_pkt_size=(base_size[k], within),
                              log_bytes_received=(base_recv[k], within), log_ports=(0.2, within))
        shift = np.where(anomalous[idx], spec.difficulty, 0.0)
        values[idx] = _flows(rng, profile, len(idx), {"log_rate": shift, "log_pkt_size": shift})
    ts = np.empty(n)
    for k in range(n_devices):
        idx = np.flatnonzero(dev == k)
        ts[idx] = T0 + np.cumsum(rng.uniform(0.5, 1.5, len(idx)))
    return FeatureMatrix(
        values, CANONICAL_SCHEMA, labels=anomalous.astype(np.int64),
        timestamps=ts, device_ids=np.array([f"bt-{k:02d}" for k in dev], dtype=object),
        protocols=np.full(n, "BLUETOOTH", dtype=object),
        extra={"attack_type": np.where(anomalous, "deviation", "none").astype(object)},
    )


GENERATORS = {
    Segment.MULTI_PROTOCOL: gen_multi_protocol,
    Segment.ATTACK_SPECIFIC: gen_attack_series,
    Segment.TIME_SERIES: gen_active_idle,
    Segment.DEVICE_PROFILES: gen_device_profiles,
}


def generate(spec: SegmentSpec) -> FeatureMatrix:
    return GENERATORS[spec.segment](spec)


def planted_labels(m: FeatureMatrix) -> np.ndarray:
    """Labels re-derived from the generation metadata alone."""
    if "state" in m.extra:
        return (m.extra["state"] == "active").astype(np.int64)
    return (m.extra["attack_type"] != "none").astype(np.int64)


def write_segment(m: FeatureMatrix, spec: SegmentSpec, path, provenance: dict | None = None) -> str:
    """Write the CSV plus a ``<path>.json`` sidecar echoing the spec."""
    write_flow_csv(m, path)
    sidecar = str(path) + ".json"
    doc = {"spec": spec.to_dict(), "rows": m.n, "attack_rows": int(m.labels.sum())}
    if provenance:
        doc["provenance"] = provenance
    write_atomic(sidecar, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return sidecar
