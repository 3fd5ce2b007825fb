import numpy as np

from .network import Sequential
from .optim import assign, l2_penalty, loss_and_grads


def grad_check(net: Sequential, loss_fn, x, y, epsilon: float = 1e-5,
               l2: float = 0.0, floor: float = 1e-7) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    Relative error per entry is ``|a - n| / max(|a|, |n|, floor)``; the floor
    keeps entries whose true gradient is ~0 from dividing roundoff by zero.
    Parameters are restored afterwards.
    """
    _, analytic = loss_and_grads(net, loss_fn, x, y, l2)
    worst = 0.0
    for key, p in net.params().items():
        base = p.copy()
        num = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            for sign in (1, -1):
                bumped = base.copy()
                bumped[idx] += sign * epsilon
                assign(net, {key: bumped})
                val = loss_fn(net.predict(x), y)[0] + l2_penalty(net, l2)[0]
                num[idx] += sign * val
            num[idx] /= 2 * epsilon
        assign(net, {key: base})
        a = analytic[key]
        rel = np.abs(a - num) / np.maximum(np.maximum(np.abs(a), np.abs(num)), floor)
        worst = max(worst, float(rel.max(initial=0.0)))
    return worst

