"""Saving and loading fitted segmenters and classifiers (JSON description + weight archives)."""

import json
from pathlib import Path

import numpy as np

from .classification import CascadeClassifier, CascadeSpec, MultiCellClassifier, TransferClassifier
from .exceptions import StateError, WeightLoadError
from .nnet import Network, load_archive, save_weights
from .segmentation import SelectiveSegmenter

FORMAT_VERSION = 1


def _save_net(net, path):
    save_weights(net, path)
    return {"file": Path(path).name, "spec": net.spec()}


def _load_net(entry, directory):
    net = Network.from_spec(entry["spec"])
    tensors = load_archive(Path(directory) / entry["file"])
    try:
        net.load_state_dict(tensors)
    except (KeyError, ValueError) as exc:
        raise WeightLoadError(f"{entry['file']}: {exc}", list(tensors)) from exc
    return net


def _read_json(path, producer):
    path = Path(path)
    if not path.exists():
        raise StateError(f"{path} not found; run `cytoscreen {producer}` first")
    data = json.loads(path.read_text())
    if data.get("format_version") != FORMAT_VERSION:
        raise StateError(f"{path}: unsupported model format {data.get('format_version')!r}")
    return data


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _params(est):
    params = est.get_params(deep=False)
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()}


def save_segmenter(model, directory):
    model._check_fitted()
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    nets = {}
    for key, net in model.networks.items():
        nets[key] = None if net is None else _save_net(net, d / f"{key}.cwt")
    _write_json(d / "segmenter.json", {
        "format_version": FORMAT_VERSION, "params": _params(model), "threshold": model.threshold_,
        "route_counts": model.route_counts_, "networks": nets,
        "calibration_scores": None if model.calibration_scores_ is None else
        {repr(k): (v if v != float("-inf") else None) for k, v in model.calibration_scores_.items()},
    })


def load_segmenter(directory):
    d = Path(directory)
    data = _read_json(d / "segmenter.json", "train-seg")
    params = dict(data["params"])
    params["clahe_tiles"] = tuple(params["clahe_tiles"])
    m = SelectiveSegmenter(**params)
    m.threshold_ = data["threshold"]
    m.route_counts_ = data["route_counts"]
    m.calibration_scores_ = data["calibration_scores"]
    m.cnn_w_ = None if data["networks"]["cnn_w"] is None else _load_net(data["networks"]["cnn_w"], d)
    m.cnn_p_ = None if data["networks"]["cnn_p"] is None else _load_net(data["networks"]["cnn_p"], d)
    m.cnn_w_untrained_ = m.cnn_w_ is None
    m.cnn_p_untrained_ = m.cnn_p_ is None
    m.history_ = {}
    return m


def _classifier_entry(clf, directory, stem):
    return {"params": _params(clf), "classes": [str(c) for c in clf.classes_],
            "network": _save_net(clf.net_, Path(directory) / f"{stem}.cwt")}


def _classifier_from_entry(entry, directory, cls=TransferClassifier):
    clf = cls(**entry["params"])
    clf.net_ = _load_net(entry["network"], directory)
    clf.classes_ = np.array(entry["classes"], dtype=object)
    clf.frozen_digest_ = clf.net_.param_digest(trainable=False)
    return clf


def save_classifier(clf, directory, stem="classifier"):
    clf._check_fitted()
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_json(d / f"{stem}.json", {"format_version": FORMAT_VERSION, "kind": type(clf).__name__,
                                     **_classifier_entry(clf, d, stem)})


def load_classifier(directory, stem="classifier", producer="train-clf"):
    data = _read_json(Path(directory) / f"{stem}.json", producer)
    cls = MultiCellClassifier if data.get("kind") == "MultiCellClassifier" else TransferClassifier
    return _classifier_from_entry(data, directory, cls)


def save_cascade(model, directory):
    model._check_fitted()
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    spec = model._spec()
    _write_json(d / "cascade.json", {
        "format_version": FORMAT_VERSION,
        "refine_leaves": model.refine_leaves,
        "base": _params(model._base()),
        "classes": list(spec.classes),
        "stages": [{"name": st.name, "left": sorted(st.left, key=spec.classes.index),
                    "right": sorted(st.right, key=spec.classes.index),
                    **_classifier_entry(m, d, f"stage{i + 1}")}
                   for i, (st, m) in enumerate(zip(spec.stages, model.stage_models_))],
        "leaves": [{"members": sorted(leaf, key=spec.classes.index),
                    **_classifier_entry(m, d, "leaf_" + "_".join(sorted(leaf, key=spec.classes.index)))}
                   for leaf, m in model.leaf_models_.items()],
    })


def load_cascade(directory):
    d = Path(directory)
    data = _read_json(d / "cascade.json", "train-clf")
    spec = CascadeSpec([(s["name"], s["left"], s["right"]) for s in data["stages"]], data["classes"])
    model = CascadeClassifier(spec=spec, base=TransferClassifier(**data["base"]),
                              refine_leaves=data["refine_leaves"])
    model.stage_models_ = [_classifier_from_entry(s, d) for s in data["stages"]]
    model.leaf_models_ = {frozenset(l["members"]): _classifier_from_entry(l, d) for l in data["leaves"]}
    model.classes_ = np.array(spec.classes, dtype=object)
    return model
