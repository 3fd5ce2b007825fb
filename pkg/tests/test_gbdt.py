import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iomt_detect import gbdt
from iomt_detect.modelio import model_from_dict

XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([0, 1, 1, 0])


def leaves_match_identity(model, X):
    """Every leaf weight equals -G/(H+lambda) for the rows it received."""
    for tree, (g, h) in zip(model.trees, model.trace):
        leaf = tree.apply(X)
        for node in np.unique(leaf):
            G, H = g[leaf == node].sum(), h[leaf == node].sum()
            if not np.isclose(tree.leaf_weight[node], -G / (H + model.lam), rtol=1e-12, atol=1e-15):
                return False
    return True


def test_single_leaf_squared_loss_is_the_mean():
    m = gbdt.fit_gbdt(np.array([[0.0], [1.0]]), np.array([1.0, 3.0]), n_rounds=1,
                      learning_rate=1.0, max_depth=0, lam=0.0, objective="squared")
    g, h = m.trace[0]
    assert g.tolist() == [-1.0, -3.0] and h.tolist() == [1.0, 1.0]
    assert m.trees[0].leaf_weight == [2.0]


def test_huge_lambda_leaves_base_score():
    X = np.random.default_rng(0).normal(size=(30, 2))
    y = (X[:, 0] > 0).astype(int)
    m = gbdt.fit_gbdt(X, y, n_rounds=5, lam=1e12, base_score=0.25)
    assert np.allclose(m.margin(X), 0.25, atol=1e-9)


def test_xor_is_learned():
    m = gbdt.fit_gbdt(XOR_X, XOR_Y, n_rounds=10, max_depth=2)
    assert np.mean(m.flag(XOR_X) == XOR_Y) == 1.0


def test_best_split_examples():
    X = np.array([[0.0], [1.0]])
    g, h = np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    assert gbdt.best_split(X, g, h, lam=0.0) == (0, 0.5, 1.0)
    assert gbdt.best_split(np.array([[2.0], [2.0]]), g, h, lam=0.0)[0] is None
    assert gbdt.best_split(X, g, h, lam=0.0, gamma=5.0)[0] is None


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_leaf_weight_identity(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=60) > 0).astype(int)
    m = gbdt.fit_gbdt(X, y, n_rounds=5, max_depth=3, lam=rng.uniform(0, 3))
    assert leaves_match_identity(m, X)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=25, unique=True))
def test_memorizes_with_unlimited_depth(xs):
    X = np.array(xs)[:, None]
    y = np.random.default_rng(len(xs)).normal(size=len(xs))
    m = gbdt.fit_gbdt(X, y, n_rounds=1, learning_rate=1.0, max_depth=None, lam=0.0,
                      objective="squared")
    assert np.mean((m.predict_proba(X) - y) ** 2) < 1e-12


def test_logloss_never_increases_with_rounds():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(200, 4))
    y = (X[:, 0] * X[:, 1] + 0.3 * rng.normal(size=200) > 0).astype(int)
    m = gbdt.fit_gbdt(X, y, n_rounds=40, learning_rate=0.3, max_depth=3)
    margin = np.full(len(X), m.base_score)
    losses = [gbdt.logloss(1 / (1 + np.exp(-margin)), y)]
    for tree in m.trees:
        margin = margin + m.learning_rate * tree.predict(X)
        losses.append(gbdt.logloss(1 / (1 + np.exp(-margin)), y))
    assert np.all(np.diff(losses) <= 1e-9)


def test_round_trip_is_bit_exact():
    X = np.random.default_rng(1).normal(size=(50, 3))
    y = (X.sum(axis=1) > 0).astype(int)
    m = gbdt.fit_gbdt(X, y, n_rounds=8)
    back = model_from_dict(m.to_dict())
    assert np.array_equal(back.predict_proba(X), gbdt.predict_gbdt(m, X))


def test_input_validation():
    with pytest.raises(ValueError):
        gbdt.fit_gbdt(np.zeros((4, 1)), np.zeros(4))
    with pytest.raises(ValueError):
        gbdt.fit_gbdt(np.zeros((4, 1)), np.array([0, 1, 2, 1]))
    with pytest.raises(ValueError):
        gbdt.fit_gbdt(np.zeros((2, 1)), np.array([0, 1]), objective="hinge")
