import time

import numpy as np
import pytest

from iomt_detect.flowdata import CANONICAL_SCHEMA, FeatureMatrix


def planted_outliers(seed=42, n=1000, frac=0.05, sigma=10.0, d=2):
    """n standard-normal inliers plus frac*n points pushed ``sigma`` out
    along random directions. Returns (inliers, all_points, labels)."""
    rng = np.random.default_rng(seed)
    inliers = rng.normal(size=(n, d))
    k = int(round(n * frac))
    direction = rng.normal(size=(k, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    outliers = rng.normal(size=(k, d)) + sigma * direction
    X = np.vstack([inliers, outliers])
    y = np.r_[np.zeros(n, dtype=np.int64), np.ones(k, dtype=np.int64)]
    return inliers, X, y


def matrix(values, labels=None, **kw):
    values = np.asarray(values, dtype=np.float64)
    names = kw.pop("column_names", None) or tuple(CANONICAL_SCHEMA[: values.shape[1]])
    return FeatureMatrix(values, tuple(names), None if labels is None else np.asarray(labels), **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def gradcheck_cases(seed):
    """The five architectures the gradient check must cover, at small size."""
    from iomt_detect import nn
    from iomt_detect.detect_point import build_autoencoder
    from iomt_detect.detect_seq import build_logreg_net, build_sequence_net

    rng = np.random.default_rng(seed)
    x_rows = rng.normal(size=(6, 8))
    x_win = rng.normal(size=(6, 4, 3))
    y_bin = rng.integers(0, 2, size=(6, 1)).astype(float)
    return {
        "autoencoder": (build_autoencoder(8, seed=seed), nn.mse, x_rows, x_rows),
        "lstm": (build_sequence_net("LSTM", 3, hidden=5, seed=seed), nn.bce_with_logits, x_win, y_bin),
        "gru": (build_sequence_net("GRU", 3, hidden=5, seed=seed), nn.bce_with_logits, x_win, y_bin),
        "cnn-lstm": (build_sequence_net("CNN_LSTM", 3, hidden=5, conv_channels=4, seed=seed),
                     nn.bce_with_logits, x_win, y_bin),
        "logreg": (build_logreg_net(4, 3, seed=seed), nn.bce_with_logits, x_win, y_bin),
    }


# ---------------------------------------------------------- acceptance lines

ACCEPTANCE_LINES = []
SUITE_BUDGET_S = 300.0
_start = {}


def record(line):
    ACCEPTANCE_LINES.append(line)


def pytest_sessionstart(session):
    _start["t"] = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - _start.get("t", time.perf_counter())
    # only meaningful when the whole suite ran
    if session.testscollected > 100:
        ok = elapsed < SUITE_BUDGET_S
        record(f"{'PASS' if ok else 'FAIL'}  10. full suite wall-clock [{elapsed:.1f}s < {SUITE_BUDGET_S:.0f}s]")
        if not ok and session.exitstatus == 0:
            session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
