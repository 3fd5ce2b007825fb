"""Layers with explicit forward/backward passes, float64 throughout.

Every layer keeps its trainable arrays in ``self.params`` and exposes

    forward(x)          -> (y, cache)
    backward(dy, cache) -> (dx, grads)

where ``grads`` has the same keys as ``params``. Sequence tensors are laid
out as (batch, time, features).
"""
from __future__ import annotations

import enum

import numpy as np


class Activation(str, enum.Enum):
    RELU = "RELU"
    TANH = "TANH"
    SIGMOID = "SIGMOID"
    LINEAR = "LINEAR"


def sigmoid(z):
    # split on sign so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _act(kind: Activation, z):
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.TANH:
        return np.tanh(z)
    if kind is Activation.SIGMOID:
        return sigmoid(z)
    return z


def _act_grad(kind: Activation, z, a):
    """d(act)/dz given pre-activation z and output a."""
    if kind is Activation.RELU:
        return (z > 0).astype(np.float64)
    if kind is Activation.TANH:
        return 1.0 - a * a
    if kind is Activation.SIGMOID:
        return a * (1.0 - a)
    return np.ones_like(z)


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"
    params: dict[str, np.ndarray]

    def config(self) -> dict:
        return {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy, cache):
        raise NotImplementedError


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, activation=Activation.LINEAR,
                 rng: np.random.Generator | None = None):
        self.n_in, self.n_out = n_in, n_out
        self.activation = Activation(activation)
        W = (glorot(rng, (n_out, n_in), n_in, n_out) if rng is not None
             else np.zeros((n_out, n_in)))
        self.params = {"W": W, "b": np.zeros(n_out)}

    def config(self):
        return {"n_in": self.n_in, "n_out": self.n_out, "activation": self.activation.value}

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"dense layer expects (batch, {self.n_in}), got {x.shape}")
        z = x @ self.params["W"].T + self.params["b"]
        a = _act(self.activation, z)
        return a, (x, z, a)

    def backward(self, dy, cache):
        x, z, a = cache
        dz = dy * _act_grad(self.activation, z, a)
        grads = {"W": dz.T @ x, "b": dz.sum(axis=0)}
        return dz @ self.params["W"], grads


class Flatten(Layer):
    kind = "flatten"

    def __init__(self):
        self.params = {}

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), {}


class Conv1D(Layer):
    """Valid (unpadded) 1-D convolution over the time axis."""

    kind = "conv1d"

    def __init__(self, c_in: int, c_out: int, k: int, activation=Activation.RELU,
                 rng: np.random.Generator | None = None):
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.activation = Activation(activation)
        K = (glorot(rng, (c_out, c_in, k), c_in * k, c_out * k) if rng is not None
             else np.zeros((c_out, c_in, k)))
        self.params = {"K": K, "b": np.zeros(c_out)}

    def config(self):
        return {"c_in": self.c_in, "c_out": self.c_out, "k": self.k,
                "activation": self.activation.value}

    def _patches(self, x):
        T_out = x.shape[1] - self.k + 1
        # (B, T_out, k, C_in)
        return np.stack([x[:, j:j + T_out, :] for j in range(self.k)], axis=2)

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.c_in:
            raise ValueError(f"conv1d expects (batch, time, {self.c_in}), got {x.shape}")
        if x.shape[1] < self.k:
            raise ValueError(f"sequence length {x.shape[1]} shorter than kernel {self.k}")
        P = self._patches(x)
        z = np.einsum("btjc,ocj->bto", P, self.params["K"]) + self.params["b"]
        a = _act(self.activation, z)
        return a, (x.shape, P, z, a)

    def backward(self, dy, cache):
        shape, P, z, a = cache
        dz = dy * _act_grad(self.activation, z, a)
        grads = {"K": np.einsum("bto,btjc->ocj", dz, P), "b": dz.sum(axis=(0, 1))}
        dP = np.einsum("bto,ocj->btjc", dz, self.params["K"])
        dx = np.zeros(shape)
        T_out = dz.shape[1]
        for j in range(self.k):
            dx[:, j:j + T_out, :] += dP[:, :, j, :]
        return dx, grads


class LSTM(Layer):
    """Single-layer LSTM returning the final hidden state.

    Gate blocks are stacked in the order input, forget, output, candidate:
    ``W`` is (4H, D), ``U`` is (4H, H), ``b`` is (4H,).

    ``force_gates`` pins gate activations to constants (e.g.
    ``{"f": 1.0, "i": 0.0}``); it is a probe for tests, and backward is only
    exact when it is unset.
    """

    kind = "lstm"
    GATES = ("i", "f", "o", "g")

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator | None = None):
        self.n_in, self.hidden = n_in, hidden
        H = hidden
        if rng is not None:
            W = np.concatenate([glorot(rng, (H, n_in), n_in, H) for _ in range(4)])
            U = np.concatenate([glorot(rng, (H, H), H, H) for _ in range(4)])
        else:
            W, U = np.zeros((4 * H, n_in)), np.zeros((4 * H, H))
        self.params = {"W": W, "U": U, "b": np.zeros(4 * H)}
        self.force_gates: dict[str, float] | None = None

    def config(self):
        return {"n_in": self.n_in, "hidden": self.hidden}

    def run(self, x, h0=None, c0=None):
        """Unroll over time; returns per-step dicts of gates and states."""
        B, T, D = x.shape
        if D != self.n_in:
            raise ValueError(f"lstm expects {self.n_in} input features, got {D}")
        H = self.hidden
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        h = np.zeros((B, H)) if h0 is None else np.array(h0, dtype=np.float64)
        c = np.zeros((B, H)) if c0 is None else np.array(c0, dtype=np.float64)
        steps = []
        for t in range(T):
            z = x[:, t, :] @ W.T + h @ U.T + b
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            o = sigmoid(z[:, 2 * H:3 * H])
            g = np.tanh(z[:, 3 * H:])
            if self.force_gates:
                fg = self.force_gates
                i = np.full_like(i, fg["i"]) if "i" in fg else i
                f = np.full_like(f, fg["f"]) if "f" in fg else f
                o = np.full_like(o, fg["o"]) if "o" in fg else o
                g = np.full_like(g, fg["g"]) if "g" in fg else g
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            steps.append({"x": x[:, t, :], "h_prev": h, "c_prev": c, "i": i, "f": f,
                          "o": o, "g": g, "c": c_new, "tc": tc, "h": h_new})
            h, c = h_new, c_new
        return steps

    def forward(self, x):
        steps = self.run(x)
        return steps[-1]["h"], (x.shape, steps)

    def backward(self, dy, cache):
        shape, steps = cache
        B, T, D = shape
        W, U = self.params["W"], self.params["U"]
        dW, dU, db = np.zeros_like(W), np.zeros_like(U), np.zeros_like(self.params["b"])
        dx = np.zeros(shape)
        dh = dy
        dc = np.zeros_like(dy)
        for t in reversed(range(T)):
            s = steps[t]
            do = dh * s["tc"]
            dc = dc + dh * s["o"] * (1.0 - s["tc"] ** 2)
            di = dc * s["g"]
            dg = dc * s["i"]
            df = dc * s["c_prev"]
            dz = np.concatenate([
                di * s["i"] * (1 - s["i"]),
                df * s["f"] * (1 - s["f"]),
                do * s["o"] * (1 - s["o"]),
                dg * (1 - s["g"] ** 2),
            ], axis=1)
            dW += dz.T @ s["x"]
            dU += dz.T @ s["h_prev"]
            db += dz.sum(axis=0)
            dx[:, t, :] = dz @ W
            dh = dz @ U
            dc = dc * s["f"]
        return dx, {"W": dW, "U": dU, "b": db}


class GRU(Layer):
    """Single-layer GRU returning the final hidden state.

    Blocks are stacked update, reset, candidate. The candidate uses
    ``tanh(W_n x + U_n (r * h) + b_n)`` and ``h' = (1 - z) h + z h_cand``.
    """

    kind = "gru"

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator | None = None):
        self.n_in, self.hidden = n_in, hidden
        H = hidden
        if rng is not None:
            W = np.concatenate([glorot(rng, (H, n_in), n_in, H) for _ in range(3)])
            U = np.concatenate([glorot(rng, (H, H), H, H) for _ in range(3)])
        else:
            W, U = np.zeros((3 * H, n_in)), np.zeros((3 * H, H))
        self.params = {"W": W, "U": U, "b": np.zeros(3 * H)}

    def config(self):
        return {"n_in": self.n_in, "hidden": self.hidden}

    def run(self, x, h0=None):
        B, T, D = x.shape
        if D != self.n_in:
            raise ValueError(f"gru expects {self.n_in} input features, got {D}")
        H = self.hidden
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        h = np.zeros((B, H)) if h0 is None else np.array(h0, dtype=np.float64)
        steps = []
        for t in range(T):
            xt = x[:, t, :]
            wx = xt @ W.T + b
            z = sigmoid(wx[:, :H] + h @ U[:H].T)
            r = sigmoid(wx[:, H:2 * H] + h @ U[H:2 * H].T)
            rh = r * h
            n = np.tanh(wx[:, 2 * H:] + rh @ U[2 * H:].T)
            h_new = (1 - z) * h + z * n
            steps.append({"x": xt, "h_prev": h, "z": z, "r": r, "rh": rh, "n": n, "h": h_new})
            h = h_new
        return steps

    def forward(self, x):
        steps = self.run(x)
        return steps[-1]["h"], (x.shape, steps)

    def backward(self, dy, cache):
        shape, steps = cache
        H = self.hidden
        W, U = self.params["W"], self.params["U"]
        dW, dU, db = np.zeros_like(W), np.zeros_like(U), np.zeros_like(self.params["b"])
        dx = np.zeros(shape)
        dh = dy
        for t in reversed(range(shape[1])):
            s = steps[t]
            dn = dh * s["z"]
            dz = dh * (s["n"] - s["h_prev"])
            dh_prev = dh * (1 - s["z"])
            dan = dn * (1 - s["n"] ** 2)
            drh = dan @ U[2 * H:]
            dr = drh * s["h_prev"]
            dh_prev += drh * s["r"]
            daz = dz * s["z"] * (1 - s["z"])
            dar = dr * s["r"] * (1 - s["r"])
            dU[:H] += daz.T @ s["h_prev"]
            dU[H:2 * H] += dar.T @ s["h_prev"]
            dU[2 * H:] += dan.T @ s["rh"]
            da = np.concatenate([daz, dar, dan], axis=1)
            dW += da.T @ s["x"]
            db += da.sum(axis=0)
            dx[:, t, :] = da @ W
            dh_prev += daz @ U[:H] + dar @ U[H:2 * H]
            dh = dh_prev
        return dx, {"W": dW, "U": dU, "b": db}


LAYER_TYPES = {cls.kind: cls for cls in (Dense, Flatten, Conv1D, LSTM, GRU)}
