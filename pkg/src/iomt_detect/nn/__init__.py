"""Small numpy neural-network substrate: dense, conv1d, LSTM and GRU layers."""
from .gradcheck import grad_check
from .layers import GRU, LSTM, Activation, Conv1D, Dense, Flatten, sigmoid
from .losses import bce_with_logits, mse
from .network import Sequential, StaleCacheError
from .optim import AdamState, Optimizer, TrainConfig, adam_step, fit, loss_and_grads

__all__ = [
    "Activation", "AdamState", "Conv1D", "Dense", "Flatten", "GRU", "LSTM", "Optimizer",
    "Sequential", "StaleCacheError", "TrainConfig", "adam_step", "bce_with_logits", "fit",
    "grad_check", "loss_and_grads", "mse", "sigmoid",
]
