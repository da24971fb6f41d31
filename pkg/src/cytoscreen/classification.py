"""Frozen-feature transfer classifiers, the abnormality cascade and multi-cell classification.

A ``convNT`` network is a frozen AlexNet-geometry bank truncated after conv
layer N (1, 3 or 5) followed by a trainable head. Inputs are resized to
227x227 with bilinear interpolation.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone

from . import imgproc
from ._validation import check_image, check_images, check_mask
from .dataset import ABNORMAL_CLASSES, CLASSES, NORMAL_CLASSES, binary_label
from .detection import UNMATCHED, DetectorConfig, detect_nuclei, label_detections
from .exceptions import ConfigurationError, InvalidInputError, InvalidParameterError, StateError
from .metrics import EvalReport
from .nnet import (Conv2D, Dense, MaxPool2D, MaxPoolDropout, Network, ReLU, Softmax,
                   TrainConfig, load_weights, train)
from .segmentation import mask_background

log = logging.getLogger(__name__)

INPUT_SIZE = 227
DEPTHS = ("conv1", "conv3", "conv5")
CAFFE_MEAN_BGR = (104.0, 117.0, 123.0)
BINARY_LABELS = ("normal", "abnormal")


def _frozen_bank(depth):
    if depth not in DEPTHS:
        raise InvalidParameterError(f"depth must be one of {DEPTHS}, got {depth!r}")
    layers = [Conv2D(96, 11, stride=4, name="conv1", trainable=False), ReLU(name="relu1"),
              MaxPool2D(3, 2, name="pool1")]
    if depth in ("conv3", "conv5"):
        layers += [Conv2D(256, 5, pad=2, name="conv2", trainable=False), ReLU(name="relu2"),
                   MaxPool2D(3, 2, name="pool2"),
                   Conv2D(384, 3, pad=1, name="conv3", trainable=False), ReLU(name="relu3")]
    if depth == "conv5":
        layers += [Conv2D(384, 3, pad=1, name="conv4", trainable=False), ReLU(name="relu4"),
                   Conv2D(256, 3, pad=1, name="conv5", trainable=False), ReLU(name="relu5"),
                   MaxPool2D(3, 2, name="pool5")]
    return layers


def _fc_head(n_classes, hidden):
    return [Dense(hidden, name="fc1"), ReLU(name="relu_fc1"), Dense(n_classes, name="fc2"),
            Softmax(name="prob")]


def _multicell_head(n_classes, hidden, filters, n_convs, p):
    layers = []
    for i in range(n_convs):
        layers += [Conv2D(filters, 3, pad=1, name=f"tconv{i + 1}"),
                   MaxPoolDropout(2, 2, p, name=f"mpdrop{i + 1}"), ReLU(name=f"relu_t{i + 1}")]
    return layers + _fc_head(n_classes, hidden)


def _load_frozen(net, weights):
    if weights is None:
        return net
    frozen = [name for name, layer, _, _ in net.parameters() if not layer.trainable]
    load_weights(net, weights, mapping={n: n for n in frozen}, freeze=True)
    return net


def build_convnt(depth="conv1", n_classes=7, weights=None, seed=0, hidden=256):
    """Frozen bank truncated at ``depth`` plus a fresh fc-hidden/fc-n_classes head.

    ``weights`` is an archive path or a ``{name: array}`` dict holding every
    frozen tensor (``conv1.w``, ``conv1.b``, ...); without it the bank is a
    seeded random initialization.
    """
    if n_classes < 2:
        raise InvalidParameterError(f"n_classes must be >= 2, got {n_classes}")
    net = Network(_frozen_bank(depth) + _fc_head(n_classes, hidden), (3, INPUT_SIZE, INPUT_SIZE), seed=seed)
    return _load_frozen(net, weights)


def build_multicell_net(n_classes=2, weights=None, seed=0, hidden=256, filters=32, n_convs=2, p=0.5):
    """Frozen conv1 bank, ``n_convs`` trainable conv/max-pool-dropout/relu blocks, fc head."""
    net = Network(_frozen_bank("conv1") + _multicell_head(n_classes, hidden, filters, n_convs, p),
                  (3, INPUT_SIZE, INPUT_SIZE), seed=seed)
    return _load_frozen(net, weights)


def prepare_input(images, preprocessing="unit", size=INPUT_SIZE):
    """Resize to ``size``x``size`` and convert to a float32 NCHW batch.

    ``"unit"`` maps [0, 255] to [-0.5, 0.5]; ``"caffe"`` uses BGR order minus
    the usual per-channel mean, for archives converted from Caffe models.
    """
    out = np.empty((len(images), 3, size, size), dtype=np.float32)
    for i, img in enumerate(images):
        img = check_image(img)
        if img.ndim == 2:
            img = np.repeat(img[:, :, None], 3, axis=2)
        if img.shape[:2] != (size, size):
            img = imgproc.resize_bilinear(img, (size, size))
        x = img.astype(np.float32)
        if preprocessing == "unit":
            x = x / 255.0 - 0.5
        elif preprocessing == "caffe":
            x = x[:, :, ::-1] - np.asarray(CAFFE_MEAN_BGR, np.float32)
        else:
            raise InvalidParameterError(f"unknown preprocessing {preprocessing!r}")
        out[i] = x.transpose(2, 0, 1)
    return out


def extract_features(net, images, preprocessing="unit", batch_size=16, out=None):
    """Run the frozen prefix of ``net`` over ``images`` in batches.

    ``out`` may be a preallocated (e.g. memory-mapped) array to fill.
    """
    fp = net.frozen_prefix
    shape = net.layers[fp - 1].out_shape if fp else net.input_shape
    if out is None:
        out = np.empty((len(images),) + tuple(shape), dtype=net.dtype)
    for i in range(0, len(images), batch_size):
        x = prepare_input(images[i:i + batch_size], preprocessing)
        out[i:i + len(x)] = net.forward(x, "infer", stop=fp)
    return out


@dataclass
class Prediction:
    id: str
    label: str
    scores: dict
    path: tuple = ()
    true: str | None = None

    def to_dict(self):
        return {"id": self.id, "label": self.label, "true": self.true,
                "scores": {k: float(v) for k, v in self.scores.items()}, "path": list(self.path)}


class TransferClassifier(ClassifierMixin, BaseEstimator):
    """convNT classifier: frozen bank + trainable head, trained with momentum SGD.

    Features of the frozen bank are computed once per ``fit``/``predict``
    call; only the head sees the training loop. The default ``lr`` is lower
    than the engine default because conv1 features have ~70k dimensions and
    larger steps saturate a two-way softmax under MSE.
    """

    def __init__(self, depth="conv1", head="fc", hidden=256, weights=None, preprocessing="unit",
                 epochs=200, batch_size=32, lr=0.001, momentum=0.9, lr_decay=0.1, lr_decay_epoch=150,
                 loss="mse_one_hot", conv_filters=32, n_convs=2, dropout_p=0.5, seed=0,
                 feature_cache=None):
        self.depth = depth
        self.head = head
        self.hidden = hidden
        self.weights = weights
        self.preprocessing = preprocessing
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.momentum = momentum
        self.lr_decay = lr_decay
        self.lr_decay_epoch = lr_decay_epoch
        self.loss = loss
        self.conv_filters = conv_filters
        self.n_convs = n_convs
        self.dropout_p = dropout_p
        self.seed = seed
        self.feature_cache = feature_cache

    def build(self, n_classes):
        if self.head == "fc":
            return build_convnt(self.depth, n_classes, self.weights, self.seed, self.hidden)
        if self.head == "multicell":
            if self.depth != "conv1":
                raise InvalidParameterError("the multi-cell head sits on the conv1 bank")
            return build_multicell_net(n_classes, self.weights, self.seed, self.hidden,
                                       self.conv_filters, self.n_convs, self.dropout_p)
        raise InvalidParameterError(f"head must be 'fc' or 'multicell', got {self.head!r}")

    def train_config(self):
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, momentum=self.momentum,
                           lr_decay=self.lr_decay, lr_decay_epoch=self.lr_decay_epoch, seed=self.seed,
                           loss=self.loss)

    def transform(self, X):
        """Frozen-bank features of ``X`` (images)."""
        net = self.net_ if hasattr(self, "net_") else self.build(2)
        return extract_features(net, check_images(X), self.preprocessing)

    def _encode(self, y):
        y = list(y)
        if not y:
            raise InvalidInputError("no training labels")
        known = [c for c in CLASSES if c in set(y)]
        rest = sorted(set(y) - set(known), key=str)
        self.classes_ = np.array(known + rest, dtype=object)
        if len(self.classes_) < 2:
            raise ConfigurationError(f"need at least two classes to train, got {list(self.classes_)}")
        index = {c: i for i, c in enumerate(self.classes_)}
        return np.array([index[v] for v in y])

    def _fit_features(self, F, y, F_val=None, y_val=None):
        codes = self._encode(y)
        self.net_ = self.build(len(self.classes_))
        self.frozen_digest_ = self.net_.param_digest(trainable=False)
        val = None
        if F_val is not None and len(F_val):
            index = {c: i for i, c in enumerate(self.classes_)}
            val = (F_val, np.array([index[v] for v in y_val]))
        self.history_ = train(self.net_, F, codes, self.train_config(),
                              *(val or (None, None)), features=True)
        return self

    def _features(self, net, X, name):
        X = check_images(X)
        out = None
        if self.feature_cache is not None:
            fp = net.frozen_prefix
            shape = (len(X),) + tuple(net.layers[fp - 1].out_shape)
            path = Path(self.feature_cache) / f"{name}-{net.param_digest(trainable=False)[:16]}.npy"
            path.parent.mkdir(parents=True, exist_ok=True)
            out = np.lib.format.open_memmap(path, mode="w+", dtype=net.dtype, shape=shape)
        return extract_features(net, X, self.preprocessing, out=out)

    def fit(self, X, y, X_val=None, y_val=None):
        """Extract frozen features (optionally into a memory-mapped cache) and train the head."""
        net = self.build(2)
        F = self._features(net, X, "train")
        F_val = self._features(net, X_val, "val") if X_val is not None else None
        return self._fit_features(F, y, F_val, y_val)

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise StateError(f"{type(self).__name__} is not fitted; call fit() first")

    def predict_proba_features(self, F):
        self._check_fitted()
        return self.net_.predict_proba(np.asarray(F, self.net_.dtype), batch_size=64,
                                       start=self.net_.frozen_prefix)

    def predict_proba(self, X):
        self._check_fitted()
        return self.predict_proba_features(extract_features(self.net_, check_images(X), self.preprocessing))

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]

    def predict_features(self, F):
        proba = self.predict_proba_features(F)
        return self.classes_[proba.argmax(axis=1)]


class MultiCellClassifier(TransferClassifier):
    """Binary normal/abnormal classifier for detected nuclei: conv1 bank + conv/max-pool-dropout head."""

    def __init__(self, depth="conv1", head="multicell", hidden=256, weights=None, preprocessing="unit",
                 epochs=60, batch_size=32, lr=0.01, momentum=0.9, lr_decay=0.1, lr_decay_epoch=150,
                 loss="mse_one_hot", conv_filters=32, n_convs=2, dropout_p=0.5, seed=0,
                 feature_cache=None):
        super().__init__(depth, head, hidden, weights, preprocessing, epochs, batch_size, lr, momentum,
                         lr_decay, lr_decay_epoch, loss, conv_filters, n_convs, dropout_p, seed,
                         feature_cache)


# -- cascade ---------------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    name: str
    left: frozenset
    right: frozenset

    @property
    def union(self):
        return self.left | self.right


class CascadeSpec:
    """Ordered binary stages; each stage after the first splits one side of an earlier stage."""

    def __init__(self, stages, classes=CLASSES):
        self.classes = tuple(classes)
        self.stages = tuple(Stage(n, frozenset(l), frozenset(r)) for n, l, r in stages)
        self._validate()

    def _validate(self):
        if not self.stages:
            raise ConfigurationError("a cascade needs at least one stage")
        sides = []
        for i, st in enumerate(self.stages):
            if not st.left or not st.right:
                raise ConfigurationError(f"stage {st.name!r} has an empty side")
            if st.left & st.right:
                raise ConfigurationError(f"stage {st.name!r} sides overlap: {sorted(st.left & st.right)}")
            unknown = st.union - set(self.classes)
            if unknown:
                raise ConfigurationError(f"stage {st.name!r} uses unknown classes {sorted(unknown)}")
            if i == 0:
                if st.union != set(self.classes):
                    raise ConfigurationError(f"first stage {st.name!r} must cover every class")
            elif st.union not in sides:
                raise ConfigurationError(f"stage {st.name!r} does not refine a side of an earlier stage")
            if st.union in [s.union for s in self.stages[:i]]:
                raise ConfigurationError(f"stage {st.name!r} repeats an earlier split")
            sides += [st.left, st.right]
        leaves = self.leaves
        flat = [c for leaf in leaves for c in leaf]
        if sorted(flat, key=self.classes.index) != list(self.classes):
            raise ConfigurationError("cascade leaves do not partition the classes")

    @property
    def leaves(self):
        unions = {st.union for st in self.stages}
        out = []
        for st in self.stages:
            for side in (st.left, st.right):
                if side not in unions:
                    out.append(side)
        return out

    def stage_for(self, classes):
        for i, st in enumerate(self.stages):
            if st.union == classes:
                return i
        return None

    def walk(self, decide):
        """Follow decisions from the root. ``decide(stage_index) -> "L" | "R"``.

        Returns ``(leaf set, path)`` with path entries like ``"1R"``.
        """
        i, path = 0, []
        while True:
            side = decide(i)
            if side not in ("L", "R"):
                raise InvalidInputError(f"stage decision must be 'L' or 'R', got {side!r}")
            path.append(f"{i + 1}{side}")
            st = self.stages[i]
            chosen = st.left if side == "L" else st.right
            nxt = self.stage_for(chosen)
            if nxt is None:
                return chosen, tuple(path)
            i = nxt


HERLEV_CASCADE = CascadeSpec([
    ("normal_vs_abnormal", NORMAL_CLASSES, ABNORMAL_CLASSES),
    ("cis_vs_dysplasia", ("cis",), ("ldys", "mdys", "sdys")),
    ("ldys_vs_higher", ("ldys",), ("mdys", "sdys")),
    ("mdys_vs_sdys", ("mdys",), ("sdys",)),
])


class CascadeClassifier(ClassifierMixin, BaseEstimator):
    """Hierarchical classifier: one binary convNT network per stage.

    Leaves with several classes (the normal side of the first stage) get a
    multi-class network of their own when ``refine_leaves`` is set; otherwise
    the leaf's first class in canonical order is reported.
    """

    def __init__(self, spec=None, base=None, refine_leaves=True):
        self.spec = spec
        self.base = base
        self.refine_leaves = refine_leaves

    def _spec(self):
        return self.spec or HERLEV_CASCADE

    def _base(self):
        return self.base if self.base is not None else TransferClassifier()

    def _clone_base(self):
        # every stage keeps the base seed so all stages share one frozen bank
        return clone(self._base())

    def fit(self, X, y):
        y = np.asarray(list(y), dtype=object)
        extractor = self._base().build(2)
        self.extractor_digest_ = extractor.param_digest(trainable=False)
        F = extract_features(extractor, check_images(X), self._base().preprocessing)
        return self._fit_features(F, y)

    def _fit_features(self, F, y):
        spec = self._spec()
        y = np.asarray(list(y), dtype=object)
        self.stage_models_ = []
        self.stage_members_ = []
        for i, st in enumerate(spec.stages):
            member = np.array([v in st.union for v in y])
            sides = np.array(["L" if v in st.left else "R" for v in y[member]], dtype=object)
            missing = [s for s, cls in (("left", st.left), ("right", st.right)) if not np.any(np.isin(y, list(cls)))]
            if missing:
                raise ConfigurationError(
                    f"stage {i + 1} ({st.name}) has no training records on its {' and '.join(missing)} side")
            est = self._clone_base()
            est._fit_features(F[member], sides)
            self.stage_models_.append(est)
            self.stage_members_.append(np.flatnonzero(member))
        self.leaf_models_ = {}
        if self.refine_leaves:
            for leaf in spec.leaves:
                if len(leaf) < 2:
                    continue
                member = np.array([v in leaf for v in y])
                present = set(y[member])
                if len(present) < 2:
                    raise ConfigurationError(f"leaf {sorted(leaf)} has fewer than two classes in training data")
                est = self._clone_base()
                est._fit_features(F[member], y[member])
                self.leaf_models_[leaf] = est
        self.classes_ = np.array([c for c in spec.classes if c in set(y)], dtype=object)
        return self

    def _check_fitted(self):
        if not hasattr(self, "stage_models_"):
            raise StateError("CascadeClassifier is not fitted; call fit() first")

    def predict_features(self, F, ids=None):
        """Per-record :class:`Prediction` with the stage path taken."""
        self._check_fitted()
        spec = self._spec()
        probs = [m.predict_proba_features(F) for m in self.stage_models_]
        sides = [m.classes_ for m in self.stage_models_]
        leaf_probs = {leaf: m.predict_proba_features(F) for leaf, m in self.leaf_models_.items()}
        out = []
        for n in range(len(F)):
            def decide(i):
                return sides[i][int(np.argmax(probs[i][n]))]
            leaf, path = spec.walk(decide)
            scores = {f"stage{int(p[:-1])}_{p[-1]}": float(probs[int(p[:-1]) - 1][n][list(sides[int(p[:-1]) - 1]).index(p[-1])])
                      for p in path}
            if len(leaf) == 1:
                label = next(iter(leaf))
            elif leaf in leaf_probs:
                m = self.leaf_models_[leaf]
                pr = leaf_probs[leaf][n]
                label = m.classes_[int(np.argmax(pr))]
                scores.update({f"leaf_{c}": float(p) for c, p in zip(m.classes_, pr)})
            else:
                label = min(leaf, key=spec.classes.index)
            out.append(Prediction(ids[n] if ids is not None else str(n), label, scores, path))
        return out

    def predict(self, X):
        F = extract_features(self.stage_models_[0].net_, check_images(X), self._base().preprocessing)
        return np.array([p.label for p in self.predict_features(F)], dtype=object)


# -- evaluation helpers ------------------------------------------------------------

def classify_flat(model, records, features=None, name="flat"):
    """Predictions and an :class:`EvalReport` for a fitted :class:`TransferClassifier`."""
    if features is None:
        probs = model.predict_proba([r.image for r in records])
    else:
        probs = model.predict_proba_features(features)
    preds = []
    for r, p in zip(records, probs):
        label = model.classes_[int(np.argmax(p))]
        preds.append(Prediction(r.id, label, dict(zip(model.classes_, map(float, p))), (), r.label))
    labels = [c for c in CLASSES if c in set(model.classes_) | {r.label for r in records}]
    labels += sorted((set(model.classes_) | {r.label for r in records}) - set(labels), key=str)
    report = EvalReport.from_labels(name, [r.label for r in records], [p.label for p in preds], labels)
    return preds, report


def to_binary(labels):
    return ["abnormal" if binary_label(l) else "normal" for l in labels]


def binary_report(name, y_true, y_pred):
    return EvalReport.from_labels(name, to_binary(y_true), to_binary(y_pred), BINARY_LABELS)


def multicell_training_set(slides, det_cfg=None):
    """Crops of detected nuclei labeled by annotation overlap; unmatched detections are dropped."""
    crops, labels, meta = [], [], []
    for s in slides:
        res = detect_nuclei(s.image, det_cfg)
        label_detections(res.detections, s.annotations)
        for d in res.detections:
            if d.label == UNMATCHED:
                continue
            crops.append(d.bbox.crop(s.image))
            labels.append(d.label)
            meta.append((s.id, d))
    return crops, labels, meta


def classify_multicell(slide, clf, det_cfg=None):
    """Detect nuclei on one slide and classify each padded crop as normal/abnormal.

    Returns ``(predictions, warnings)``.
    """
    det_cfg = det_cfg or DetectorConfig()
    res = detect_nuclei(slide.image, det_cfg)
    if not res.detections:
        return [], list(res.warnings)
    label_detections(res.detections, slide.annotations)
    probs = clf.predict_proba([d.bbox.crop(slide.image) for d in res.detections])
    preds = []
    for k, (d, p) in enumerate(zip(res.detections, probs)):
        label = clf.classes_[int(np.argmax(p))]
        preds.append(Prediction(f"{slide.id}/{k + 1}", label, dict(zip(clf.classes_, map(float, p))),
                                true=d.label))
    return preds, list(res.warnings)


@dataclass
class AblationResult:
    reports: dict = field(default_factory=dict)

    def accuracies(self):
        return {k: r.accuracy for k, r in self.reports.items()}


def ablate_segmentation(train_recs, test_recs, base=None, seg_model=None, conditions=None):
    """Train and evaluate the same classifier on raw, gt-masked and predicted-masked cells.

    ``seg_model`` is any object with ``predict(images) -> masks``; without it
    the predicted-mask condition is skipped.
    """
    base = base if base is not None else TransferClassifier()
    conditions = conditions or (("raw", "gt_masked", "predicted_masked") if seg_model is not None
                                else ("raw", "gt_masked"))

    def images(recs, cond):
        if cond == "raw":
            return [r.image for r in recs]
        if cond == "gt_masked":
            return [mask_background(r.image, check_mask(r.gt_mask)) for r in recs]
        if cond == "predicted_masked":
            if seg_model is None:
                raise ConfigurationError("predicted_masked condition needs a segmentation model")
            masks = seg_model.predict([r.image for r in recs])
            return [mask_background(r.image, m) for r, m in zip(recs, masks)]
        raise InvalidParameterError(f"unknown ablation condition {cond!r}")

    out = AblationResult()
    for cond in conditions:
        clf = clone(base).fit(images(train_recs, cond), [r.label for r in train_recs])
        probs = clf.predict_proba(images(test_recs, cond))
        pred = clf.classes_[probs.argmax(axis=1)]
        labels = [c for c in CLASSES if c in set(clf.classes_) | {r.label for r in test_recs}]
        out.reports[cond] = EvalReport.from_labels(cond, [r.label for r in test_recs], list(pred), labels)
    return out
