"""Segmentation and classification metrics, trial aggregation and report tables."""

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_mask, check_same_shape
from .dataset import CLASSES
from .exceptions import InvalidInputError

TABLE3_COLUMNS = CLASSES + ("Average",)


@dataclass(frozen=True)
class SegScore:
    precision: float
    recall: float
    f: float
    zsi: float
    tp: int
    fp: int
    fn: int

    def to_dict(self):
        return asdict(self)


def _counts(pred, gt):
    pred = check_mask(pred)
    gt = check_mask(gt)
    check_same_shape(pred, gt)
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    return tp, fp, fn


def _zsi_from_counts(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2.0 * tp / denom


def pixel_fscore(pred, gt):
    """Pixel precision, recall and F-score of ``pred`` against ``gt``.

    Both masks empty scores 1 everywhere; exactly one empty scores 0.
    """
    tp, fp, fn = _counts(pred, gt)
    if tp + fp + fn == 0:
        return SegScore(1.0, 1.0, 1.0, 1.0, 0, 0, 0)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return SegScore(p, r, f, _zsi_from_counts(tp, fp, fn), tp, fp, fn)


def zsi(pred, gt):
    """Zijdenbos similarity index 2|A and B| / (|A| + |B|); 1 when both are empty."""
    return _zsi_from_counts(*_counts(pred, gt))


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = true, cols = predicted
    labels: tuple

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.labels = tuple(self.labels)
        n = len(self.labels)
        if self.counts.shape != (n, n):
            raise InvalidInputError(f"counts shape {self.counts.shape} does not match {n} labels")
        if (self.counts < 0).any():
            raise InvalidInputError("confusion counts must be non-negative")

    @classmethod
    def from_labels(cls, y_true, y_pred, labels):
        labels = tuple(labels)
        index = {l: i for i, l in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for t, p in zip(y_true, y_pred):
            counts[index[t], index[p]] += 1
        return cls(counts, labels)

    @property
    def total(self):
        return int(self.counts.sum())

    def to_dict(self):
        return {"labels": list(self.labels), "counts": self.counts.tolist()}


def accuracy(cm):
    """``(overall, per_class)``; per-class recall is ``None`` for classes with no true records."""
    if cm.total == 0:
        raise InvalidInputError("accuracy of an empty confusion matrix is undefined")
    overall = float(np.trace(cm.counts) / cm.total)
    rows = cm.counts.sum(axis=1)
    per_class = {l: (float(cm.counts[i, i] / rows[i]) if rows[i] else None) for i, l in enumerate(cm.labels)}
    return overall, per_class


@dataclass
class EvalReport:
    name: str
    accuracy: float
    per_class: dict
    confusion: ConfusionMatrix
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_labels(cls, name, y_true, y_pred, labels, **extra):
        cm = ConfusionMatrix.from_labels(y_true, y_pred, labels)
        overall, per_class = accuracy(cm)
        return cls(name, overall, per_class, cm, dict(extra))

    def scalars(self):
        out = {"accuracy": self.accuracy}
        out.update({k: v for k, v in self.extra.items() if isinstance(v, (int, float))})
        return out

    def to_dict(self):
        return {"name": self.name, "accuracy": self.accuracy, "per_class": self.per_class,
                "confusion": self.confusion.to_dict(), "extra": self.extra}


def aggregate_trials(reports):
    """Mean and (population) standard deviation of each scalar metric across trials.

    Accepts :class:`EvalReport` objects or plain ``{metric: value}`` dicts.
    """
    reports = list(reports)
    if not reports:
        raise InvalidInputError("aggregate_trials needs at least one report")
    rows = [r.scalars() if isinstance(r, EvalReport) else dict(r) for r in reports]
    keys = sorted(set().union(*rows))
    out = {}
    for k in keys:
        vals = np.array([r[k] for r in rows if r.get(k) is not None], dtype=np.float64)
        if vals.size:
            out[k] = {"mean": float(vals.mean()), "std": float(vals.std()), "n": int(vals.size),
                      "values": vals.tolist()}
    return out


def class_fscore_table(labels, fscores, classes=CLASSES):
    """Per-class mean of per-image F-scores plus their macro ``Average`` (Table-style row).

    Classes without images are ``None`` and excluded from the average.
    """
    labels = list(labels)
    fscores = np.asarray(fscores, dtype=np.float64)
    row = {}
    for c in classes:
        sel = [f for l, f in zip(labels, fscores) if l == c]
        row[c] = float(np.mean(sel)) if sel else None
    present = [v for v in row.values() if v is not None]
    row["Average"] = float(np.mean(present)) if present else None
    return row


def pooled_fscore(preds, gts):
    """F-score over pixels pooled across all images (alternative to per-image averaging)."""
    tp = fp = fn = 0
    for p, g in zip(preds, gts):
        a, b, c = _counts(p, g)
        tp, fp, fn = tp + a, fp + b, fn + c
    if tp + fp + fn == 0:
        return 1.0
    return _zsi_from_counts(tp, fp, fn)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return obj


def write_json(path, obj):
    """Deterministic JSON (sorted keys, fixed separators, trailing newline)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_csv(path, rows, columns):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if row.get(c) is None else row.get(c) for c in columns])
    return path
