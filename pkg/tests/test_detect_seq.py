import numpy as np
import pytest

from iomt_detect import detect_seq as ds
from iomt_detect import flowdata as fd
from iomt_detect.experiments import ExperimentConfig, prepare_windows
from iomt_detect.modelio import model_from_dict
from iomt_detect.nn import TrainConfig
from iomt_detect.synthgen import Segment, SegmentSpec, generate


@pytest.fixture(scope="module")
def attack_windows():
    m = generate(SegmentSpec(Segment.ATTACK_SPECIFIC, n=2000, attack_ratio=0.3, seed=42))
    return prepare_windows(m, ExperimentConfig("attack-specific"))


@pytest.fixture(scope="module")
def lstm(attack_windows):
    Xtr, ytr, _, _ = attack_windows
    return ds.train_sequence_classifier("LSTM", (Xtr, ytr), TrainConfig(epochs=30, seed=0))


def accuracy(model, X, y):
    return float(np.mean(model.flag(X) == y))


@pytest.mark.parametrize("kind", ["GRU", "CNN_LSTM"])
def test_separable_attacks_are_learned(kind, attack_windows):
    Xtr, ytr, Xte, yte = attack_windows
    model = ds.train_sequence_classifier(kind, (Xtr, ytr), TrainConfig(epochs=30, seed=0))
    assert accuracy(model, Xte, yte) >= 0.99


def test_lstm_learns_and_records_a_curve(lstm, attack_windows):
    _, _, Xte, yte = attack_windows
    assert accuracy(lstm, Xte, yte) >= 0.99
    epochs, losses, accs = zip(*lstm.curve)
    assert list(epochs) == list(range(1, 31))
    assert accs[-1] >= accs[0]
    assert lstm.training_curve_csv().splitlines()[0] == "epoch,loss,accuracy"


def test_flipped_labels_give_the_same_accuracy():
    m = generate(SegmentSpec(Segment.ATTACK_SPECIFIC, n=2000, attack_ratio=0.3, seed=3, difficulty=3))
    Xtr, ytr, Xte, yte = prepare_windows(m, ExperimentConfig("attack-specific"))
    cfg = TrainConfig(epochs=15, seed=0)
    plain = ds.train_sequence_classifier("LSTM", (Xtr, ytr), cfg)
    flipped = ds.train_sequence_classifier("LSTM", (Xtr, 1 - ytr), cfg)
    assert abs(accuracy(plain, Xte, yte) - accuracy(flipped, Xte, 1 - yte)) <= 0.02


def test_probabilities_bounded(lstm, attack_windows):
    p = lstm.predict_proba(attack_windows[2] * 100)
    assert np.all((p >= 0) & (p <= 1))


def test_zero_head_gives_one_half():
    net = ds.build_sequence_net("GRU", 3, seed=0)
    net.layers[-1].params["W"][:] = 0
    model = ds.SequenceClassifier(net, 4, 3)
    p, flag = ds.predict_sequence(model, np.random.default_rng(0).normal(size=(4, 3)))
    assert p[0] == 0.5 and flag[0] == 1


def test_round_trip_and_batch_consistency(lstm, attack_windows):
    X = attack_windows[2][:25]
    back = model_from_dict(lstm.to_dict())
    assert np.array_equal(back.predict_proba(X), lstm.predict_proba(X))
    single = np.array([lstm.predict_proba(x)[0] for x in X])
    # no batch statistics; only BLAS blocking can differ with batch shape
    np.testing.assert_allclose(ds.batch_predict(lstm, list(X)), single, rtol=1e-12, atol=0)
    assert back.curve == lstm.curve


def test_lstm_and_cnn_lstm_share_input_and_output_shapes():
    X = np.zeros((5, 4, 8))
    a = ds.build_sequence_net("LSTM", 8).predict(X)
    b = ds.build_sequence_net("CNN_LSTM", 8).predict(X)
    assert a.shape == b.shape == (5, 1)


def test_monotone_rescaling_keeps_flags(lstm, attack_windows):
    p = lstm.predict_proba(attack_windows[2])
    rescaled = p ** 3 / (p ** 3 + (1 - p) ** 3)  # strictly monotone, fixes 0.5
    assert np.array_equal(rescaled >= 0.5, lstm.flag(attack_windows[2]) == 1)


def test_single_class_training_is_refused():
    X = np.zeros((10, 4, 2))
    with pytest.raises(ValueError, match="single class"):
        ds.train_sequence_classifier("LSTM", (X, np.zeros(10, dtype=int)))


def test_window_list_input():
    m = fd.FeatureMatrix(np.random.default_rng(0).normal(size=(30, 2)), ("a", "b"),
                         labels=np.r_[np.zeros(15), np.ones(15)].astype(int))
    model = ds.train_sequence_classifier("GRU", fd.make_windows(m, 4), TrainConfig(epochs=2))
    assert model.window == 4 and model.n_features == 2


def test_logreg_separable_oracle():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 400)
    X = (np.where(y == 1, 2.0, -2.0)[:, None] + 0.1 * rng.normal(size=(400, 4)))[:, :, None]
    model = ds.train_logreg((X, y), TrainConfig(epochs=20, learning_rate=0.05, seed=1))
    assert accuracy(model, X, y) >= 0.99
    assert model.w.shape == (4,)


def test_logreg_zero_weights_give_one_half():
    model = ds.LogRegModel(ds.build_logreg_net(4, 3), 4, 3)
    model.net.layers[1].params["W"][:] = 0
    assert model.w.tolist() == [0.0] * 12 and model.b == 0.0
    assert np.all(ds.predict_logreg(model, np.ones((2, 4, 3)))[0] == 0.5)
