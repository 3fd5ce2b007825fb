"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line; the lines are printed together at the
end of the pytest run (see conftest.py). Run this file directly to print
them without pytest's other output.
"""
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import gradcheck_cases, planted_outliers, record
from iomt_detect import detect_point as dp
from iomt_detect import evalkit as ek
from iomt_detect import flowdata as fd
from iomt_detect import gbdt, nn
from iomt_detect.cli import run as cli_run
from iomt_detect.ensemble import fit_voting
from iomt_detect.experiments import ExperimentConfig, repro, run_experiment
from iomt_detect.synthgen import Segment, SegmentSpec, generate


def check(number, title, ok, elapsed, budget, detail=""):
    ok = bool(ok) and (budget is None or elapsed < budget)
    timing = f"{elapsed:.1f}s" + (f" < {budget}s" if budget else "")
    record(f"{'PASS' if ok else 'FAIL'}  {number:>2}. {title} [{timing}] {detail}".rstrip())
    assert ok, detail


def exact_metrics(t, p):
    tp = sum(a == 1 and b == 1 for a, b in zip(t, p))
    fp = sum(a == 0 and b == 1 for a, b in zip(t, p))
    fn = sum(a == 1 and b == 0 for a, b in zip(t, p))
    tn = len(t) - tp - fp - fn
    ratio = lambda a, b: Fraction(a, b) if b else Fraction(0)
    return {
        "accuracy": Fraction(tp + tn, len(t)),
        1: (ratio(tp, tp + fp), ratio(tp, tp + fn), ratio(2 * tp, 2 * tp + fp + fn)),
        0: (ratio(tn, tn + fn), ratio(tn, tn + fp), ratio(2 * tn, 2 * tn + fn + fp)),
    }


def test_01_metric_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    mismatches = 0
    for _ in range(1000):
        rate = rng.random()
        t = rng.integers(0, 2, 200)
        p = np.where(rng.random(200) < rate, t, 1 - t)
        got = ek.classification_metrics(ek.confusion(t, p))
        want = exact_metrics(t.tolist(), p.tolist())
        ok = Fraction(got.accuracy) == Fraction(float(want["accuracy"]))
        for c in (0, 1):
            triple = (got.precision[c], got.recall[c], got.f1[c])
            ok &= all(Fraction(g) == Fraction(float(w)) for g, w in zip(triple, want[c]))
        mismatches += not ok
    check(1, "metric oracle, 1000 pairs at n=200", mismatches == 0, time.perf_counter() - start, 5,
          f"mismatches={mismatches}")


def test_02_f1_from_reported_precision_recall():
    start = time.perf_counter()
    # tp/(tp+fp) = 0.66 and tp/(tp+fn) = 0.90 exactly
    m = ek.classification_metrics(ek.ConfusionMatrix(tp=594, fp=306, tn=1000, fn=66))
    f1 = m.f1[1]
    ok = abs(m.precision[1] - 0.66) < 1e-12 and abs(m.recall[1] - 0.90) < 1e-12
    check(2, "F1 from P=0.66, R=0.90 is 0.76 +- 0.005", ok and abs(f1 - 0.76) <= 0.005,
          time.perf_counter() - start, None, f"f1={f1:.4f}")


def test_03_gradient_check():
    start = time.perf_counter()
    worst = {}
    for seed in (0, 1, 2):
        for name, (net, loss, x, y) in gradcheck_cases(seed).items():
            worst[name] = max(worst.get(name, 0.0), nn.grad_check(net, loss, x, y))
    detail = " ".join(f"{k}={v:.1e}" for k, v in worst.items())
    check(3, "gradient check, 5 architectures x 3 seeds", max(worst.values()) < 1e-4,
          time.perf_counter() - start, 30, detail)


def test_04_threshold_calibration():
    start = time.perf_counter()
    m = generate(SegmentSpec(Segment.MULTI_PROTOCOL, n=800, attack_ratio=0.0, seed=42))
    X = fd.fit_standardizer(m).apply(m).values
    n = len(X)
    ae = dp.train_autoencoder(X, nn.TrainConfig(epochs=40, seed=0))
    forest = dp.train_isolation_forest(X, contamination=0.1, seed=0)
    knn = dp.train_knn(X, k=5, contamination=0.1)
    vote = fit_voting([forest, knn], X, nu=0.1)
    S = np.vstack([forest.training_scores(X), knn.training_scores(X)])
    counts = {
        "autoencoder": (int(ae.flag(X).sum()), 0.05 * n),
        "iforest": (int(forest.flag(X).sum()), 0.1 * n),
        # a training row is not its own neighbour
        "knn": (int((knn.training_scores(X) > knn.threshold).sum()), 0.1 * n),
        "score-average": (int((vote._combine(S) > vote.threshold).sum()), 0.1 * n),
    }
    ok = all(abs(c - want) <= 1 for c, want in counts.values())
    detail = " ".join(f"{k}={c}/{want:g}" for k, (c, want) in counts.items())
    check(4, "quantile thresholds flag nu of the training set", ok,
          time.perf_counter() - start, 30, detail)


def test_05_planted_outliers():
    start = time.perf_counter()
    inliers, X, y = planted_outliers(seed=42)
    models = {"iforest": dp.train_isolation_forest(inliers, contamination=0.05, seed=42),
              "knn": dp.train_knn(inliers, k=5, contamination=0.05)}
    ok, parts = True, []
    for name, model in models.items():
        f = model.flag(X)
        recall, fpr = f[y == 1].mean(), f[y == 0].mean()
        ok &= recall >= 0.95 and fpr <= 0.05
        parts.append(f"{name}: recall={recall:.3f} fpr={fpr:.3f}")
    check(5, "planted outliers at 10 sigma", ok, time.perf_counter() - start, 20, "; ".join(parts))


def test_06_attack_specific_repro():
    start = time.perf_counter()
    run = repro("attack-specific", seed=42)
    acc = {r.model: r.metrics.accuracy for r in run.results}
    wanted = ("LSTM", "GRU", "CNN-LSTM", "Ensemble Stacking (XGBoost)")
    ok = run.config.n == 2000 and run.config.difficulty == 8 and all(acc[k] >= 0.99 for k in wanted)
    check(6, "attack-specific repro, seed 42", ok, time.perf_counter() - start, 180,
          " ".join(f"{k.split()[-1]}={acc[k]:.4f}" for k in wanted))


def test_07_ensemble_balance_and_no_harm():
    start = time.perf_counter()
    ok, parts = True, []
    for seed in range(5):
        run = run_experiment(ExperimentConfig("multi-protocol", seed=seed, difficulty=2))
        counts = dict(run.details["flag_counts"])
        ens = counts.pop("ensemble")
        acc = {r.model: r.metrics.accuracy for r in run.results}
        stack = acc.pop("Ensemble Stacking (XGBoost)")
        acc.pop("Ensemble (score average)")
        between = min(counts.values()) < ens < max(counts.values())
        no_harm = stack >= max(acc.values()) - 0.02
        ok &= between and no_harm
        parts.append(f"s{seed}: {min(counts.values())}<{ens}<{max(counts.values())} "
                     f"stack={stack:.3f} best={max(acc.values()):.3f}")
    check(7, "score average between members, stacking no-harm, 5 seeds", ok,
          time.perf_counter() - start, 120, "; ".join(parts))


def test_08_gbdt_identities():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 4))
    y = (X[:, 0] + X[:, 1] ** 2 > 1).astype(int)
    model = gbdt.fit_gbdt(X, y, n_rounds=20, max_depth=3, lam=1.0)
    leaves_ok = True
    for tree, (g, h) in zip(model.trees, model.trace):
        leaf = tree.apply(X)
        for node in np.unique(leaf):
            G, H = g[leaf == node].sum(), h[leaf == node].sum()
            leaves_ok &= bool(np.isclose(tree.leaf_weight[node], -G / (H + model.lam),
                                         rtol=1e-12, atol=1e-15))
    target = np.array([1.0, 3.0, 8.0])
    single = gbdt.fit_gbdt(np.zeros((3, 1)), target, n_rounds=1, learning_rate=1.0,
                           max_depth=0, lam=0.0, objective="squared", base_score=0.0)
    mean_ok = single.trees[0].leaf_weight[0] == float(Fraction(12, 3))
    xor_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    xor_y = np.array([0, 1, 1, 0])
    xor = gbdt.fit_gbdt(xor_X, xor_y, n_rounds=10, max_depth=2)
    xor_acc = np.mean(xor.flag(xor_X) == xor_y)
    check(8, "boosted-tree leaf, mean and XOR identities", leaves_ok and mean_ok and xor_acc == 1.0,
          time.perf_counter() - start, 10, f"leaves={leaves_ok} mean={mean_ok} xor_acc={xor_acc}")


def test_09_determinism(tmp_path, monkeypatch, capsys):
    start = time.perf_counter()
    monkeypatch.chdir(tmp_path)
    commands = [
        (["synth", "--segment", "multi-protocol", "--n", "500", "--out", "d.csv"], ["d.csv", "d.csv.json"]),
        (["synth", "--segment", "attack-specific", "--n", "400", "--attack-ratio", "0.3",
          "--out", "a.csv"], ["a.csv"]),
        (["train", "--model", "lstm", "--set", "epochs=3", "--in", "a.csv", "--out", "m.json"],
         ["m.json", "m.training_curve.csv"]),
        (["train", "--model", "iforest", "--window", "1", "--in", "d.csv", "--out", "f.json"], ["f.json"]),
        (["repro", "--experiment", "time-series", "--n", "400", "--out", "r"],
         ["r/report.txt", "r/report.json", "r/report.csv", "r/config.json"]),
    ]
    differ = []
    for argv, outputs in commands:
        runs = []
        for _ in range(2):
            assert cli_run(argv) == 0
            runs.append([(tmp_path / o).read_bytes() for o in outputs])
        if runs[0] != runs[1]:
            differ.append(argv[0])
    capsys.readouterr()
    check(9, "train/synth/repro reruns are byte-identical", not differ, time.perf_counter() - start,
          None, f"differing={differ}" if differ else f"{len(commands)} commands")


def test_11_real_data_path(tmp_path):
    path = os.environ.get("IOMT_REAL_CSV")
    if not path:
        record("SKIP  11. real-data repro (set IOMT_REAL_CSV to a canonical-schema CSV)")
        pytest.skip("optional real-data path, not gated")
    start = time.perf_counter()
    run = run_experiment(ExperimentConfig("multi-protocol"), fd.load_flow_csv(path))
    check(11, "real-data repro runs end to end", bool(run.results), time.perf_counter() - start, None)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
