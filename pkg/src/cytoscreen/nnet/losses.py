"""Losses on network outputs. Each returns ``(loss, dLoss/dOutput)``, averaged over the batch."""

import numpy as np


def one_hot(y, n_classes, dtype=np.float32):
    y = np.asarray(y, dtype=int)
    out = np.zeros((y.size, n_classes), dtype=dtype)
    out[np.arange(y.size), y] = 1
    return out


def mse(output, target):
    """Mean of ``(output - target)**2`` over every output unit of every sample."""
    diff = output - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


def cross_entropy(output, target, eps=1e-12):
    """Categorical cross-entropy for probability outputs (i.e. after softmax)."""
    p = np.maximum(output, eps)
    n = output.shape[0]
    loss = float(-(target * np.log(p)).sum() / n)
    return loss, -(target / p) / n


LOSSES = {"mse_one_hot": mse, "mse": mse, "cross_entropy": cross_entropy}


def get_loss(name):
    try:
        return LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; choose from {sorted(LOSSES)}") from None
