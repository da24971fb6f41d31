"""Minibatch SGD with momentum over a :class:`Network`."""

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import InvalidInputError, InvalidParameterError, TrainingError
from .losses import get_loss, one_hot


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    lr_decay: float = 0.1
    lr_decay_epoch: int | None = 150
    seed: int = 0
    loss: str = "mse_one_hot"
    early_stop: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidParameterError(f"epochs must be >= 1, got {self.epochs}")
        if not self.lr >= 0:
            raise InvalidParameterError(f"lr must be non-negative, got {self.lr}")
        if self.batch_size < 1:
            raise InvalidParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        get_loss(self.loss)

    def lr_at(self, epoch):
        if self.lr_decay_epoch is not None and epoch >= self.lr_decay_epoch:
            return self.lr * self.lr_decay
        return self.lr

    def to_dict(self):
        return asdict(self)


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)

    def to_csv(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
            for e in range(len(self.train_loss)):
                w.writerow([e + 1, repr(self.train_loss[e]), repr(self.train_acc[e]),
                            repr(self.val_loss[e]) if self.val_loss else "",
                            repr(self.val_acc[e]) if self.val_acc else ""])


def precompute_prefix(net, X, batch_size=32):
    """Run the frozen prefix once; valid only when it holds no stochastic layer."""
    fp = net.frozen_prefix
    if fp == 0:
        return np.asarray(X, dtype=net.dtype), 0
    if any(l.stochastic for l in net.layers[:fp]):
        return np.asarray(X, dtype=net.dtype), 0
    out = [net.forward(X[i:i + batch_size], "infer", stop=fp) for i in range(0, len(X), batch_size)]
    return np.concatenate(out, axis=0), fp


def _evaluate(net, F, y, start, loss_fn, batch_size):
    probs = net.predict_proba(F, batch_size=batch_size, start=start)
    loss, _ = loss_fn(probs, one_hot(y, probs.shape[1], probs.dtype))
    return loss, float(np.mean(probs.argmax(axis=1) == y))


def train(net, X, y, cfg=None, X_val=None, y_val=None, features=False):
    """Fit the trainable layers of ``net`` in place and return a :class:`History`.

    ``X`` holds network inputs, or (``features=True``) outputs of the frozen
    prefix computed beforehand. Parameters of frozen layers are never touched.
    """
    cfg = cfg or TrainConfig()
    y = np.asarray(y, dtype=int)
    if len(y) == 0:
        raise InvalidInputError("training data is empty")
    if len(X) != len(y):
        raise InvalidInputError(f"{len(X)} inputs but {len(y)} labels")
    loss_fn = get_loss(cfg.loss)
    n_classes = int(np.prod(net.output_shape))

    if features:
        F, start = np.asarray(X, dtype=net.dtype), net.frozen_prefix
    else:
        F, start = precompute_prefix(net, X, cfg.batch_size)
    F_val = None
    if X_val is not None and len(X_val):
        if features or not start:
            F_val = np.asarray(X_val, dtype=net.dtype)
        else:
            F_val = precompute_prefix(net, X_val, cfg.batch_size)[0]
        y_val = np.asarray(y_val, dtype=int)

    rng = np.random.default_rng(cfg.seed)
    velocity = {}
    hist = History()
    targets = one_hot(y, n_classes, net.dtype)
    best_val, stale = -np.inf, 0

    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(len(y))
        tot_loss, correct = 0.0, 0
        for b in range(0, len(order), cfg.batch_size):
            idx = order[b:b + cfg.batch_size]
            out = net.forward(F[idx], "train", rng=rng, start=start)
            loss, grad = loss_fn(out, targets[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite at epoch {epoch + 1}", epoch=epoch + 1)
            net.backward(grad)
            for layer in net.trainable_layers:
                for key, g in layer.grads.items():
                    p = layer.params[key]
                    v = velocity.setdefault(id(p), np.zeros_like(p))
                    v *= cfg.momentum
                    v -= lr * g
                    p += v
                layer.grads = {}
            tot_loss += loss * len(idx)
            correct += int(np.sum(out.argmax(axis=1) == y[idx]))
        hist.train_loss.append(tot_loss / len(y))
        hist.train_acc.append(correct / len(y))
        if F_val is not None:
            vl, va = _evaluate(net, F_val, y_val, start, loss_fn, cfg.batch_size)
            hist.val_loss.append(vl)
            hist.val_acc.append(va)
            if cfg.early_stop:
                if va > best_val:
                    best_val, stale = va, 0
                else:
                    stale += 1
                    if stale >= cfg.early_stop:
                        break
    return hist
