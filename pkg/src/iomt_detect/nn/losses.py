"""Loss functions returning (value, gradient w.r.t. the prediction)."""
import numpy as np

from .layers import sigmoid


def mse(pred, target):
    """Mean over rows of ||pred - target||^2 / d."""
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def bce_with_logits(logits, target):
    """Binary cross-entropy on raw logits, averaged over rows.

    ``logits`` and ``target`` are (batch, 1) or (batch,).
    """
    z = logits.reshape(-1)
    y = np.asarray(target, dtype=np.float64).reshape(-1)
    # log(1 + e^z) - y z, computed without overflow
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    grad = (sigmoid(z) - y) / len(z)
    return float(loss.mean()), grad.reshape(logits.shape)
