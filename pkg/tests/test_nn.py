import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import gradcheck_cases
from iomt_detect import nn
from iomt_detect.nn.optim import assign, clip_by_global_norm


def test_identity_dense():
    layer = nn.Dense(3, 3)
    layer.params["W"] = np.eye(3)
    x = np.array([[1.0, -2.0, 3.5]])
    assert np.array_equal(nn.Sequential([layer]).predict(x), x)


def test_zero_lstm_stays_at_zero():
    lstm = nn.LSTM(3, 4)  # no rng: all weights zero
    steps = lstm.run(np.random.default_rng(0).normal(size=(2, 5, 3)))
    for s in steps:
        assert np.all(s["i"] == 0.5) and np.all(s["f"] == 0.5) and np.all(s["o"] == 0.5)
        assert np.all(s["g"] == 0) and np.all(s["c"] == 0) and np.all(s["h"] == 0)


def test_lstm_probe_keeps_cell_constant():
    lstm = nn.LSTM(3, 4, np.random.default_rng(1))
    lstm.force_gates = {"f": 1.0, "i": 0.0}
    c0 = np.random.default_rng(2).normal(size=(2, 4))
    steps = lstm.run(np.random.default_rng(3).normal(size=(2, 6, 3)), c0=c0)
    for s in steps:
        assert np.array_equal(s["c"], c0)


def test_conv_valid_length():
    conv = nn.Conv1D(2, 5, 2, rng=np.random.default_rng(0))
    out, _ = conv.forward(np.zeros((7, 4, 2)))
    assert out.shape == (7, 3, 5)


def test_hand_chain_rule():
    layer = nn.Dense(1, 1)
    layer.params["W"] = np.array([[2.0]])
    net = nn.Sequential([layer])
    out, cache = net.forward(np.array([[1.0]]))
    # squared loss (out - 0)^2 -> dL/dout = 2 * out
    grads = net.backward(cache, 2 * out)
    assert grads["0.W"][0, 0] == 4.0


def test_zero_upstream_gradient_gives_zero_grads():
    net = gradcheck_cases(0)["cnn-lstm"][0]
    x = np.random.default_rng(0).normal(size=(3, 4, 3))
    out, cache = net.forward(x)
    grads = net.backward(cache, np.zeros_like(out))
    assert all(np.all(g == 0) for g in grads.values())


def test_stale_cache_is_rejected():
    net = gradcheck_cases(0)["logreg"][0]
    x = np.ones((1, 4, 3))
    out, cache = net.forward(x)
    assign(net, {"1.b": np.array([1.0])})
    with pytest.raises(nn.StaleCacheError):
        net.backward(cache, np.ones_like(out))
    other = gradcheck_cases(0)["logreg"][0]
    _, cache2 = other.forward(x)
    with pytest.raises(nn.StaleCacheError):
        net.backward(cache2, np.ones_like(out))


@pytest.mark.parametrize("name", ["autoencoder", "lstm", "gru", "cnn-lstm", "logreg"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradients_match_finite_differences(name, seed):
    net, loss, x, y = gradcheck_cases(seed)[name]
    assert nn.grad_check(net, loss, x, y) < 1e-4


def test_grad_check_with_l2():
    net, loss, x, y = gradcheck_cases(5)["logreg"]
    assert nn.grad_check(net, loss, x, y, l2=0.1) < 1e-4


def test_grad_check_restores_parameters():
    net, loss, x, y = gradcheck_cases(0)["gru"]
    before = {k: v.copy() for k, v in net.params().items()}
    nn.grad_check(net, loss, x, y)
    assert all(np.array_equal(before[k], v) for k, v in net.params().items())


def test_adam_zero_gradient_is_a_no_op():
    p = {"w": np.array([1.0, -2.0])}
    new, _ = nn.adam_step(p, {"w": np.zeros(2)}, nn.AdamState(), nn.TrainConfig())
    assert np.array_equal(new["w"], p["w"])


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=5), st.booleans())
def test_adam_first_step_moves_by_learning_rate(mags, negative):
    g = np.array(mags) * (-1 if negative else 1)
    cfg = nn.TrainConfig(learning_rate=0.01)
    new, state = nn.adam_step({"w": np.zeros_like(g)}, {"w": g}, nn.AdamState(), cfg)
    # bias-corrected first step: m_hat/sqrt(v_hat) = sign(g), up to eps
    assert np.allclose(new["w"], -0.01 * np.sign(g), rtol=1e-4)
    assert state.t == 1


def test_adam_is_pure_and_deterministic():
    p, g = {"w": np.array([0.5])}, {"w": np.array([0.3])}
    s = nn.AdamState()
    a = nn.adam_step(p, g, s, nn.TrainConfig())
    b = nn.adam_step(p, g, s, nn.TrainConfig())
    assert np.array_equal(a[0]["w"], b[0]["w"]) and s.t == 0 and p["w"][0] == 0.5


def test_clip_by_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped = clip_by_global_norm(grads, 1.0)
    assert np.isclose(np.sqrt(clipped["a"] ** 2 + clipped["b"] ** 2), 1.0)
    assert clip_by_global_norm(grads, 10.0) is grads


def test_glorot_bounds():
    layer = nn.Dense(30, 20, rng=np.random.default_rng(0))
    bound = np.sqrt(6 / 50)
    assert np.abs(layer.params["W"]).max() <= bound
    assert np.all(layer.params["b"] == 0)


def test_training_is_bit_deterministic():
    def run():
        net, loss, x, y = gradcheck_cases(4)["cnn-lstm"]
        hist = nn.fit(net, loss, x, y, nn.TrainConfig(epochs=3, batch_size=2, seed=9))
        return hist, net.params()
    h1, p1 = run()
    h2, p2 = run()
    assert h1 == h2
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)


def test_fit_reduces_loss():
    net, loss, x, y = gradcheck_cases(0)["autoencoder"]
    hist = nn.fit(net, loss, x, y, nn.TrainConfig(epochs=50, learning_rate=0.01, seed=0))
    assert hist[-1] < hist[0]


def test_sequential_round_trip():
    net, _, x, _ = gradcheck_cases(3)["gru"]
    back = nn.Sequential.from_dict(net.to_dict())
    assert np.array_equal(back.predict(x), net.predict(x))


def test_train_config_validation_and_round_trip():
    cfg = nn.TrainConfig(learning_rate=0.1, epochs=3, gradient_clip=5.0)
    assert nn.TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        nn.TrainConfig(batch_size=0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-50, 50))
def test_bce_is_stable_and_matches_definition(z):
    loss, grad = nn.bce_with_logits(np.array([[z]]), np.array([[1.0]]))
    p = 1 / (1 + np.exp(-z))
    assert np.isfinite(loss)
    assert np.isclose(grad[0, 0], p - 1)
