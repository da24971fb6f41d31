"""Portable weight archive.

Layout (little-endian)::

    b"CYTOWGT1" | uint32 header length | UTF-8 JSON header | tensor blob

The header is ``{"format_version": 1, "tensors": [{"name", "shape", "dtype",
"offset"}, ...]}`` with offsets counted in bytes from the start of the blob.
"""

import json
import struct
from pathlib import Path

import numpy as np

from ..exceptions import WeightLoadError

MAGIC = b"CYTOWGT1"
FORMAT_VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_archive(path, tensors):
    """Write ``{name: array}`` in insertion order."""
    entries, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        dtype = "float64" if arr.dtype == np.float64 else "float32"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype, "offset": offset})
        blobs.append(data)
        offset += len(data)
    header = json.dumps({"format_version": FORMAT_VERSION, "tensors": entries},
                        separators=(",", ":")).encode("utf-8")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_archive(path):
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise WeightLoadError(f"{path}: not a weight archive (bad magic)")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise WeightLoadError(f"{path}: unsupported format version {header.get('format_version')}")
    blob = memoryview(raw)[12 + hlen:]
    out, spans = {}, []
    for e in header["tensors"]:
        dt = np.dtype(_DTYPES[e["dtype"]])
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        start, end = e["offset"], e["offset"] + count * dt.itemsize
        if end > len(blob):
            raise WeightLoadError(f"{path}: tensor {e['name']!r} runs past end of file", [e["name"]])
        spans.append((start, end, e["name"]))
        out[e["name"]] = np.frombuffer(blob[start:end], dtype=dt).reshape(e["shape"]).copy()
    spans.sort()
    for (s0, e0, n0), (s1, _, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise WeightLoadError(f"{path}: tensors {n0!r} and {n1!r} overlap", [n0, n1])
    return out


def save_weights(net, path):
    save_archive(path, net.state_dict())


def load_weights(net, path_or_tensors, mapping=None, freeze=True):
    """Copy archive tensors into ``net``.

    ``mapping`` maps archive names to network parameter names (default:
    identity over all archive names). Layers that receive a tensor are frozen
    when ``freeze`` is set. All offending names are reported together.
    """
    tensors = path_or_tensors if isinstance(path_or_tensors, dict) else load_archive(path_or_tensors)
    mapping = mapping or {name: name for name in tensors}
    params = {name: (layer, key) for name, layer, key, _ in net.parameters()}
    problems, offenders = [], []
    for src, dst in mapping.items():
        if src not in tensors:
            problems.append(f"{src}: missing from archive")
            offenders.append(src)
        elif dst not in params:
            problems.append(f"{src}: network has no parameter {dst!r}")
            offenders.append(src)
        else:
            layer, key = params[dst]
            if layer.params[key].shape != tensors[src].shape:
                problems.append(f"{src}: shape {tuple(tensors[src].shape)} != expected "
                                f"{tuple(layer.params[key].shape)}")
                offenders.append(src)
    if problems:
        raise WeightLoadError("cannot load weights: " + "; ".join(problems), offenders)
    for src, dst in mapping.items():
        layer, key = params[dst]
        layer.params[key] = tensors[src].astype(net.dtype)
        if freeze:
            layer.trainable = False
    return net
