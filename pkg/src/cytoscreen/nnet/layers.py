"""Layer library. Tensors are numpy arrays in NCHW layout (or (N, D) after a dense layer)."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import InvalidParameterError, ShapeError, StateError


def _pair(v):
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv_output_size(n, k, stride=1, pad=0, dilation=1):
    return (n + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def _windows(xp, kh, kw, stride, dilation):
    """Strided view (N, C, Ho, Wo, kh, kw) of the windows of a padded input."""
    ekh, ekw = dilation * (kh - 1) + 1, dilation * (kw - 1) + 1
    v = sliding_window_view(xp, (ekh, ekw), axis=(2, 3))
    return v[:, :, ::stride, ::stride, ::dilation, ::dilation]


class Layer:
    kind = "layer"
    stochastic = False

    def __init__(self, name=None, trainable=True):
        self.name = name
        self.trainable = trainable
        self.params = {}
        self.grads = {}
        self.in_shape = None
        self.out_shape = None
        self._cache = None

    @property
    def has_params(self):
        return bool(self.params)

    def build(self, in_shape, rng, dtype):
        self.in_shape = tuple(in_shape)
        self.out_shape = self.in_shape
        return self.out_shape

    def forward(self, x, train=False, rng=None, cache=False):
        raise NotImplementedError

    def backward(self, grad, need_input_grad=True):
        raise NotImplementedError

    def _need_cache(self):
        if self._cache is None:
            raise StateError(f"layer {self.name!r}: backward called without a cached training forward pass")
        return self._cache

    def clear_cache(self):
        self._cache = None

    def spec(self):
        return {"kind": self.kind, "name": self.name, "trainable": self.trainable}

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, out={self.out_shape})"


class Conv2D(Layer):
    kind = "conv"

    def __init__(self, filters, kernel, stride=1, pad=0, dilation=1, name=None, trainable=True):
        super().__init__(name, trainable)
        self.filters = int(filters)
        self.kernel = _pair(kernel)
        self.stride = int(stride)
        self.pad = int(pad)
        self.dilation = int(dilation)

    def build(self, in_shape, rng, dtype):
        if len(in_shape) != 3:
            raise ShapeError(f"layer {self.name!r}: conv expects (C, H, W) input, got {in_shape}")
        c, h, w = in_shape
        kh, kw = self.kernel
        ho = conv_output_size(h, kh, self.stride, self.pad, self.dilation)
        wo = conv_output_size(w, kw, self.stride, self.pad, self.dilation)
        if ho < 1 or wo < 1:
            raise ShapeError(f"layer {self.name!r}: kernel {self.kernel} does not fit input {in_shape}")
        fan_in = c * kh * kw
        limit = np.sqrt(6.0 / fan_in)
        self.params = {
            "w": rng.uniform(-limit, limit, size=(self.filters, c, kh, kw)).astype(dtype),
            "b": np.zeros(self.filters, dtype=dtype),
        }
        self.in_shape = tuple(in_shape)
        self.out_shape = (self.filters, ho, wo)
        return self.out_shape

    def forward(self, x, train=False, rng=None, cache=False):
        kh, kw = self.kernel
        p = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = _windows(xp, kh, kw, self.stride, self.dilation)
        n, c, ho, wo = win.shape[:4]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
        w = self.params["w"]
        out = cols @ w.reshape(self.filters, -1).T
        out += self.params["b"]
        if cache:
            self._cache = (cols, xp.shape, (n, ho, wo))
        return out.reshape(n, ho, wo, self.filters).transpose(0, 3, 1, 2)

    def backward(self, grad, need_input_grad=True):
        cols, xp_shape, (n, ho, wo) = self._need_cache()
        kh, kw = self.kernel
        w = self.params["w"]
        g2 = grad.transpose(0, 2, 3, 1).reshape(n * ho * wo, self.filters)
        if self.trainable:
            self.grads = {"w": (g2.T @ cols).reshape(w.shape), "b": g2.sum(axis=0)}
        if not need_input_grad:
            return None
        c = xp_shape[1]
        # (c, kh, kw, n, ho, wo) straight from the matmul, accumulated channel-first
        gf = np.ascontiguousarray(grad.transpose(1, 0, 2, 3)).reshape(self.filters, -1)
        dcols = (w.reshape(self.filters, -1).T @ gf).reshape(c, kh, kw, n, ho, wo)
        dxt = np.zeros((c, n) + tuple(xp_shape[2:]), dtype=grad.dtype)
        s, d = self.stride, self.dilation
        for i in range(kh):
            for j in range(kw):
                dxt[:, :, i * d:i * d + s * (ho - 1) + 1:s, j * d:j * d + s * (wo - 1) + 1:s] += dcols[:, i, j]
        dxp = dxt.transpose(1, 0, 2, 3)
        p = self.pad
        return dxp[:, :, p:xp_shape[2] - p, p:xp_shape[3] - p] if p else dxp

    def spec(self):
        return {**super().spec(), "filters": self.filters, "kernel": list(self.kernel),
                "stride": self.stride, "pad": self.pad, "dilation": self.dilation}


class MaxPool2D(Layer):
    kind = "maxpool"

    def __init__(self, window=2, stride=None, name=None):
        super().__init__(name, trainable=False)
        self.window = int(window)
        self.stride = int(stride if stride is not None else window)

    def build(self, in_shape, rng, dtype):
        if len(in_shape) != 3:
            raise ShapeError(f"layer {self.name!r}: pooling expects (C, H, W) input, got {in_shape}")
        c, h, w = in_shape
        ho = conv_output_size(h, self.window, self.stride)
        wo = conv_output_size(w, self.window, self.stride)
        if ho < 1 or wo < 1:
            raise ShapeError(f"layer {self.name!r}: window {self.window} does not fit input {in_shape}")
        self.in_shape = tuple(in_shape)
        self.out_shape = (c, ho, wo)
        return self.out_shape

    def _pool(self, x, cache):
        k = self.window
        win = _windows(x, k, k, self.stride, 1)
        n, c, ho, wo = win.shape[:4]
        flat = win.reshape(n, c, ho, wo, k * k)
        idx = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        if cache:
            self._cache = (idx, x.shape)
        return out

    def forward(self, x, train=False, rng=None, cache=False):
        return self._pool(x, cache)

    def _scatter(self, grad, idx, x_shape, valid=None):
        k, s = self.window, self.stride
        ho, wo = idx.shape[2:]
        dx = np.zeros(x_shape, dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                sel = idx == i * k + j
                if valid is not None:
                    sel &= valid
                dx[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += grad * sel
        return dx

    def backward(self, grad, need_input_grad=True):
        idx, x_shape = self._need_cache()
        if not need_input_grad:
            return None
        return self._scatter(grad, idx, x_shape)

    def spec(self):
        return {**super().spec(), "window": self.window, "stride": self.stride}


def maxpool_dropout_forward(x, window, stride, p, rng=None, keep=None):
    """Max-pooling dropout on an NCHW tensor.

    Every input activation is kept with probability ``1 - p`` (or per the
    explicit boolean ``keep`` mask) before each window's max is taken. A
    window whose activations were all dropped outputs 0.

    Returns ``(out, argmax_index, valid)``.
    """
    if not 0.0 <= p < 1.0:
        raise InvalidParameterError(f"dropout probability must lie in [0, 1), got {p}")
    if keep is None:
        keep = rng.random(x.shape) >= p if p > 0 else np.ones(x.shape, dtype=bool)
    masked = np.where(keep, x, -np.inf)
    win = _windows(masked, window, window, stride, 1)
    n, c, ho, wo = win.shape[:4]
    flat = win.reshape(n, c, ho, wo, window * window)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    valid = np.isfinite(out)
    out = np.where(valid, out, 0).astype(x.dtype, copy=False)
    return out, idx, valid


class MaxPoolDropout(MaxPool2D):
    """Max pooling with per-activation dropout in training; plain max pooling at inference."""

    kind = "maxpool_dropout"
    stochastic = True

    def __init__(self, window=2, stride=None, p=0.5, name=None):
        super().__init__(window, stride, name)
        if not 0.0 <= p < 1.0:
            raise InvalidParameterError(f"dropout probability must lie in [0, 1), got {p}")
        self.p = float(p)

    def forward(self, x, train=False, rng=None, cache=False):
        if not train or self.p == 0.0:
            return self._pool(x, cache)
        out, idx, valid = maxpool_dropout_forward(x, self.window, self.stride, self.p, rng)
        if cache:
            self._cache = (idx, x.shape, valid)
        return out

    def backward(self, grad, need_input_grad=True):
        cache = self._need_cache()
        if not need_input_grad:
            return None
        idx, x_shape = cache[:2]
        valid = cache[2] if len(cache) > 2 else None
        return self._scatter(grad, idx, x_shape, valid)

    def spec(self):
        return {**super().spec(), "p": self.p}


class ReLU(Layer):
    kind = "relu"

    def __init__(self, name=None):
        super().__init__(name, trainable=False)

    def forward(self, x, train=False, rng=None, cache=False):
        pos = x > 0
        if cache:
            self._cache = pos
        return x * pos

    def backward(self, grad, need_input_grad=True):
        pos = self._need_cache()
        return grad * pos if need_input_grad else None


class Dense(Layer):
    """Fully connected layer; flattens any trailing dimensions of its input."""

    kind = "fc"

    def __init__(self, units, name=None, trainable=True):
        super().__init__(name, trainable)
        self.units = int(units)

    def build(self, in_shape, rng, dtype):
        fan_in = int(np.prod(in_shape))
        limit = np.sqrt(6.0 / fan_in)
        self.params = {
            "w": rng.uniform(-limit, limit, size=(fan_in, self.units)).astype(dtype),
            "b": np.zeros(self.units, dtype=dtype),
        }
        self.in_shape = tuple(in_shape)
        self.out_shape = (self.units,)
        return self.out_shape

    def forward(self, x, train=False, rng=None, cache=False):
        x2 = x.reshape(x.shape[0], -1)
        if cache:
            self._cache = (x2, x.shape)
        return x2 @ self.params["w"] + self.params["b"]

    def backward(self, grad, need_input_grad=True):
        x2, x_shape = self._need_cache()
        if self.trainable:
            self.grads = {"w": x2.T @ grad, "b": grad.sum(axis=0)}
        if not need_input_grad:
            return None
        return (grad @ self.params["w"].T).reshape(x_shape)

    def spec(self):
        return {**super().spec(), "units": self.units}


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by ``1 / (1 - p)`` during training."""

    kind = "dropout"
    stochastic = True

    def __init__(self, p=0.5, name=None):
        super().__init__(name, trainable=False)
        if not 0.0 <= p < 1.0:
            raise InvalidParameterError(f"dropout probability must lie in [0, 1), got {p}")
        self.p = float(p)

    def forward(self, x, train=False, rng=None, cache=False):
        if not train or self.p == 0.0:
            if cache:
                self._cache = 1.0
            return x
        scale = ((rng.random(x.shape) >= self.p) / (1.0 - self.p)).astype(x.dtype)
        if cache:
            self._cache = scale
        return x * scale

    def backward(self, grad, need_input_grad=True):
        scale = self._need_cache()
        return grad * scale if need_input_grad else None

    def spec(self):
        return {**super().spec(), "p": self.p}


class Softmax(Layer):
    """Softmax over the last axis."""

    kind = "softmax"

    def __init__(self, name=None):
        super().__init__(name, trainable=False)

    def forward(self, x, train=False, rng=None, cache=False):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=-1, keepdims=True)
        if cache:
            self._cache = y
        return y

    def backward(self, grad, need_input_grad=True):
        y = self._need_cache()
        if not need_input_grad:
            return None
        return y * (grad - (grad * y).sum(axis=-1, keepdims=True))


LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, MaxPool2D, MaxPoolDropout, ReLU, Dense, Dropout, Softmax)}


def layer_from_spec(spec):
    spec = dict(spec)
    kind = spec.pop("kind")
    trainable = spec.pop("trainable", True)
    cls = LAYER_TYPES[kind]
    layer = cls(**spec)
    layer.trainable = trainable if layer.kind in ("conv", "fc") else False
    return layer
