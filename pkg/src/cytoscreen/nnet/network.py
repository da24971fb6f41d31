"""Sequential network with a frozen/trainable boundary."""

import copy
import hashlib

import numpy as np

from ..exceptions import ShapeError, StateError
from .layers import layer_from_spec


class Network:
    """An ordered stack of layers built for a fixed per-sample ``input_shape``.

    Parameters are named ``"<layer name>.<key>"`` (e.g. ``"conv1.w"``).
    Layers without an explicit name get ``<kind><index>`` names, counted per
    kind from 1.
    """

    def __init__(self, layers, input_shape, seed=0, dtype=np.float32):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self._name_layers()
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.build(shape, rng, self.dtype)
        self.output_shape = shape
        self._forward_ready = False

    def _name_layers(self):
        counts = {}
        seen = set()
        for layer in self.layers:
            counts[layer.kind] = counts.get(layer.kind, 0) + 1
            if layer.name is None:
                layer.name = f"{layer.kind}{counts[layer.kind]}"
            if layer.name in seen:
                raise ValueError(f"duplicate layer name {layer.name!r}")
            seen.add(layer.name)

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, name):
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    @property
    def frozen_prefix(self):
        """Index of the first layer holding trainable parameters."""
        for i, layer in enumerate(self.layers):
            if layer.has_params and layer.trainable:
                return i
        return len(self.layers)

    @property
    def trainable_layers(self):
        return [l for l in self.layers if l.has_params and l.trainable]

    def parameters(self, trainable_only=False):
        for layer in self.layers:
            if trainable_only and not layer.trainable:
                continue
            for key, arr in layer.params.items():
                yield f"{layer.name}.{key}", layer, key, arr

    def state_dict(self):
        return {name: arr.copy() for name, _, _, arr in self.parameters()}

    def load_state_dict(self, state, strict=True):
        own = {name: (layer, key) for name, layer, key, _ in self.parameters()}
        if strict and set(state) != set(own):
            raise KeyError(f"state mismatch: missing={sorted(set(own) - set(state))}, "
                           f"unexpected={sorted(set(state) - set(own))}")
        for name, arr in state.items():
            layer, key = own[name]
            if layer.params[key].shape != np.shape(arr):
                raise ShapeError(f"{name}: shape {np.shape(arr)} != {layer.params[key].shape}")
            layer.params[key] = np.array(arr, dtype=self.dtype)

    def param_digest(self, trainable=None):
        """SHA-256 over parameter bytes, optionally restricted by trainable flag."""
        h = hashlib.sha256()
        for name, layer, _, arr in self.parameters():
            if trainable is not None and layer.trainable != trainable:
                continue
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def freeze(self, names=None):
        for layer in self.layers:
            if names is None or layer.name in names:
                layer.trainable = False

    def astype(self, dtype):
        net = copy.deepcopy(self)
        net.dtype = np.dtype(dtype)
        for layer in net.layers:
            layer.params = {k: v.astype(dtype) for k, v in layer.params.items()}
            layer.clear_cache()
        return net

    def copy(self):
        return copy.deepcopy(self)

    def spec(self):
        return {"input_shape": list(self.input_shape), "seed": self.seed,
                "layers": [layer.spec() for layer in self.layers]}

    @classmethod
    def from_spec(cls, spec, dtype=np.float32):
        layers = [layer_from_spec(s) for s in spec["layers"]]
        return cls(layers, spec["input_shape"], seed=spec.get("seed", 0), dtype=dtype)

    def _check_input(self, x, start):
        expected = self.input_shape if start == 0 else self.layers[start - 1].out_shape
        if tuple(x.shape[1:]) != tuple(expected):
            name = self.layers[start].name if start < len(self.layers) else "output"
            raise ShapeError(f"layer {name!r}: expected input (N, {', '.join(map(str, expected))}), "
                             f"got {tuple(x.shape)}")

    def forward(self, x, mode="infer", rng=None, start=0, stop=None, cache_from=None):
        """Evaluate layers ``[start, stop)`` on a batch ``x``.

        In ``"train"`` mode stochastic layers are active and every layer at or
        after the frozen prefix (or ``cache_from``) caches what ``backward``
        needs.
        """
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        stop = len(self.layers) if stop is None else stop
        x = np.asarray(x, dtype=self.dtype)
        self._check_input(x, start)
        train = mode == "train"
        if train and rng is None:
            rng = np.random.default_rng(self.seed)
        first_cached = max(self.frozen_prefix if cache_from is None else cache_from, start)
        for i in range(start, stop):
            layer = self.layers[i]
            x = layer.forward(x, train=train, rng=rng, cache=train and i >= first_cached)
        if train:
            self._forward_ready = True
            self._cached_span = (first_cached, stop)
        return x

    def backward(self, grad, need_input_grad=False):
        """Back-propagate ``dLoss/dOutput``; fills ``layer.grads`` of trainable layers.

        With ``need_input_grad`` the gradient is propagated to the network
        input (all layers must then have been cached) and returned.
        """
        if not self._forward_ready:
            raise StateError("backward() needs a preceding forward pass in train mode")
        first, stop = self._cached_span
        if need_input_grad and first > 0:
            raise StateError("input gradient requested but the frozen prefix was not cached")
        g = np.asarray(grad, dtype=self.dtype)
        for i in range(stop - 1, first - 1, -1):
            need = need_input_grad or i > first
            g = self.layers[i].backward(g, need_input_grad=need)
        self._forward_ready = False
        for layer in self.layers:
            layer.clear_cache()
        return g if need_input_grad else None

    def gradients(self):
        return {f"{l.name}.{k}": g for l in self.trainable_layers for k, g in l.grads.items()}

    def predict_proba(self, x, batch_size=64, start=0):
        outs = [self.forward(x[i:i + batch_size], "infer", start=start)
                for i in range(0, len(x), batch_size)]
        return np.concatenate(outs, axis=0)

    def summary(self):
        lines = [f"input {self.input_shape}"]
        for layer in self.layers:
            n = sum(a.size for a in layer.params.values())
            flag = "" if not layer.has_params else (" trainable" if layer.trainable else " frozen")
            lines.append(f"{layer.name:<16} {layer.kind:<16} -> {layer.out_shape}  params={n}{flag}")
        return "\n".join(lines)

