"""Central finite-difference verification of analytic gradients (64-bit)."""

import numpy as np

from .losses import get_loss


def _loss(net, x, target, loss_fn):
    return loss_fn(net.forward(x, "infer"), target)[0]


def relative_error(analytic, numeric, floor=1e-8):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def check_gradients(net, x, target, loss="mse", eps=1e-5, check_input=True, floor=1e-8):
    """Compare backprop against central differences for every parameter (and the input).

    The network must be free of stochastic layers in the span being checked,
    since the loss is evaluated in inference mode. Returns
    ``{name: max relative error}``; the input gradient is reported as ``"input"``.
    The default step sits near the cube root of float64 epsilon, where
    truncation and rounding errors of the central difference balance.
    """
    net = net.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    loss_fn = get_loss(loss)

    out = net.forward(x, "train", rng=np.random.default_rng(0), cache_from=0 if check_input else None)
    _, g = loss_fn(out, target)
    dx = net.backward(g, need_input_grad=check_input)
    analytic = {f"{l.name}.{k}": v.copy() for l in net.trainable_layers for k, v in l.grads.items()}

    errors = {}
    for name, layer, key, arr in net.parameters(trainable_only=True):
        num = np.zeros_like(arr)
        flat, nflat = arr.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            lp = _loss(net, x, target, loss_fn)
            flat[i] = old - eps
            lm = _loss(net, x, target, loss_fn)
            flat[i] = old
            nflat[i] = (lp - lm) / (2 * eps)
        errors[name] = float(relative_error(analytic[name], num, floor).max())

    if dx is not None:
        num = np.zeros_like(x)
        flat, nflat = x.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            lp = _loss(net, x, target, loss_fn)
            flat[i] = old - eps
            lm = _loss(net, x, target, loss_fn)
            flat[i] = old
            nflat[i] = (lp - lm) / (2 * eps)
        errors["input"] = float(relative_error(dx, num, floor).max())
    return errors
