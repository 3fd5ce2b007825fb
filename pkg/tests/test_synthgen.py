import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iomt_detect import flowdata as fd
from iomt_detect import synthgen as sg

ALL = list(sg.Segment)


def best_single_feature_accuracy(m):
    """Bayes-optimal single threshold on any one feature (either direction)."""
    y = m.labels
    best = 0.0
    for j in range(m.d):
        order = np.argsort(m.values[:, j], kind="stable")
        ys = y[order]
        # predict 1 above the cut: correct = zeros below + ones above
        zeros_below = np.r_[0, np.cumsum(ys == 0)]
        ones_above = np.r_[np.cumsum((ys == 1)[::-1])[::-1], 0]
        acc = (zeros_below + ones_above) / len(y)
        best = max(best, acc.max(), (1 - acc).max())
    return best


@pytest.mark.parametrize("segment", ALL)
def test_same_spec_gives_identical_bytes(segment, tmp_path):
    spec = sg.SegmentSpec(segment, n=300, seed=5)
    sg.write_segment(sg.generate(spec), spec, tmp_path / "a.csv")
    sg.write_segment(sg.generate(spec), spec, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert json.loads((tmp_path / "a.csv.json").read_text())["spec"]["seed"] == 5


@pytest.mark.parametrize("segment", ALL)
def test_schema_and_planted_labels(segment):
    m = sg.generate(sg.SegmentSpec(segment, n=400, seed=1))
    assert m.column_names == fd.CANONICAL_SCHEMA
    assert np.array_equal(sg.planted_labels(m), m.labels)
    assert np.all(np.isfinite(m.values))


@pytest.mark.parametrize("segment", ALL)
def test_separable_at_difficulty_eight(segment):
    ratio = 0.3 if segment is sg.Segment.ATTACK_SPECIFIC else 0.1
    m = sg.generate(sg.SegmentSpec(segment, n=2000, attack_ratio=ratio, seed=42, difficulty=8))
    assert best_single_feature_accuracy(m) >= 0.99


@settings(max_examples=20, deadline=None)
@given(st.integers(20, 600), st.floats(0.0, 0.4), st.integers(0, 1000))
def test_attack_fraction(n, ratio, seed):
    for segment in (sg.Segment.MULTI_PROTOCOL, sg.Segment.DEVICE_PROFILES):
        m = sg.generate(sg.SegmentSpec(segment, n=n, attack_ratio=ratio, seed=seed))
        assert abs(m.labels.sum() - ratio * n) <= 1


def test_protocol_means_differ():
    m = sg.gen_multi_protocol(sg.SegmentSpec(sg.Segment.MULTI_PROTOCOL, n=2000, attack_ratio=0.0))
    logs = np.log(m.values)
    wifi, mqtt = logs[m.protocols == "WIFI"], logs[m.protocols == "MQTT"]
    pooled = np.sqrt((wifi.var(axis=0) + mqtt.var(axis=0)) / 2)
    assert np.max(np.abs(wifi.mean(axis=0) - mqtt.mean(axis=0)) / pooled) >= 2


def test_attack_series_bursts():
    spec = sg.SegmentSpec(sg.Segment.ATTACK_SPECIFIC, n=2000, attack_ratio=0.3, seed=42)
    m = sg.gen_attack_series(spec)
    y = m.labels
    edges = np.flatnonzero(np.diff(np.r_[0, y, 0]))
    lengths = edges[1::2] - edges[::2]
    assert lengths.min() >= 4
    assert abs(y.mean() - 0.3) <= 1 / 2000
    X, wy, last = fd.windows_from_matrix(m, 4)
    assert np.all(y[last[wy == 1]] == 1)
    kinds = m.extra["attack_type"]
    ent = m.extra["src_entropy"]
    assert ent[kinds == "dos"].mean() < ent[kinds == "none"].mean() < ent[kinds == "ddos"].mean()


def test_active_idle_chain():
    m = sg.gen_active_idle(sg.SegmentSpec(sg.Segment.TIME_SERIES, n=5000, seed=42))
    s = m.labels
    assert abs(np.mean(s[1:] == s[:-1]) - 0.9) <= 0.03
    small = sg.gen_active_idle(sg.SegmentSpec(sg.Segment.TIME_SERIES, n=100, seed=42))
    assert set(small.labels.tolist()) == {0, 1}


def test_device_variance_decomposition():
    m = sg.gen_device_profiles(sg.SegmentSpec(sg.Segment.DEVICE_PROFILES, n=1200, seed=42))
    benign = m.labels == 0
    logs = np.log(m.values[benign])
    dev = m.device_ids[benign]
    col = fd.CANONICAL_SCHEMA.index("bytes_received")
    groups = [logs[dev == d, col] for d in np.unique(dev)]
    within = np.mean([g.var() for g in groups])
    between = np.var([g.mean() for g in groups])
    assert within < between


def test_presets_and_validation():
    assert sg.PRESETS == {"separable": 8.0, "overlapping": 2.0}
    with pytest.raises(ValueError):
        sg.SegmentSpec(sg.Segment.MULTI_PROTOCOL, n=19)
    with pytest.raises(ValueError):
        sg.SegmentSpec(sg.Segment.MULTI_PROTOCOL, attack_ratio=1.0)


def test_rate_identity():
    m = sg.generate(sg.SegmentSpec(sg.Segment.MULTI_PROTOCOL, n=200))
    names = fd.CANONICAL_SCHEMA
    v = {c: m.values[:, i] for i, c in enumerate(names)}
    assert np.allclose(v["pkt_rate"], v["packets"] / v["duration_s"])
    assert np.allclose(v["bytes_sent"], v["packets"] * v["mean_pkt_size"])
