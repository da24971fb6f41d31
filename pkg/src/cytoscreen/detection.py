"""Nucleus detection in multi-cell images and matching of detections to annotations."""

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import imgproc
from ._validation import check_image

log = logging.getLogger(__name__)

UNMATCHED = "unmatched"


@dataclass(frozen=True)
class DetectorConfig:
    median_window: int = 5
    clahe_tiles: tuple = (8, 8)
    clip_limit: float = 2.0
    threshold: str = "otsu"
    fixed_threshold: int | None = None
    min_area: int = 30
    pad: int = 20

    def to_dict(self):
        return {"median_window": self.median_window, "clahe_tiles": list(self.clahe_tiles),
                "clip_limit": self.clip_limit, "threshold": self.threshold,
                "fixed_threshold": self.fixed_threshold, "min_area": self.min_area, "pad": self.pad}


@dataclass
class Detection:
    bbox: imgproc.BBox
    component: int
    area: int
    centroid: tuple  # (x, y)
    label: str = UNMATCHED

    def to_dict(self):
        return {"bbox": self.bbox.to_dict(), "component": self.component, "area": self.area,
                "centroid": [float(self.centroid[0]), float(self.centroid[1])], "label": self.label}


@dataclass
class DetectionResult:
    mask: np.ndarray
    labels: imgproc.LabelMap
    detections: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def nucleus_mask(img, cfg=None):
    """V channel, median filter, CLAHE, then a global threshold selecting the dark side."""
    cfg = cfg or DetectorConfig()
    img = check_image(img)
    v = imgproc.rgb_to_v_channel(img) if img.ndim == 3 else img
    v = imgproc.median_filter(v, cfg.median_window)
    h, w = v.shape
    tiles = (min(cfg.clahe_tiles[0], h), min(cfg.clahe_tiles[1], w))
    v = imgproc.clahe(v, tiles, cfg.clip_limit)
    mask = imgproc.global_threshold(v, cfg.threshold, cfg.fixed_threshold)
    if cfg.min_area > 1:
        mask = imgproc.remove_small_components(mask, cfg.min_area)
    return mask


def detect_nuclei(img, cfg=None):
    """Connected components of the nucleus mask with padded bounding boxes."""
    cfg = cfg or DetectorConfig()
    mask = nucleus_mask(img, cfg)
    lbl = imgproc.connected_components(mask)
    dets = []
    for comp in range(1, lbl.component_count + 1):
        ys, xs = np.nonzero(lbl.labels == comp)
        dets.append(Detection(imgproc.padded_bbox(lbl, comp, cfg.pad), comp, int(xs.size),
                              (float(xs.mean()), float(ys.mean()))))
    res = DetectionResult(mask, lbl, dets)
    if not dets:
        res.warnings.append("no nuclei detected")
        log.warning("no nuclei detected")
    return res


def match_label(bbox, annotations):
    """Label of a detection from the annotations whose centroids fall inside its box.

    Several matches take the majority label; a tie goes to ``"abnormal"``.
    No match gives ``"unmatched"``.
    """
    inside = [a.label for a in annotations if bbox.contains(a.x, a.y)]
    if not inside:
        return UNMATCHED
    counts = Counter(inside).most_common()
    top = [l for l, c in counts if c == counts[0][1]]
    if len(top) > 1:
        return "abnormal" if "abnormal" in top else sorted(top)[0]
    return top[0]


def label_detections(detections, annotations):
    for d in detections:
        d.label = match_label(d.bbox, annotations)
    return detections


def crop_detections(img, detections):
    return [d.bbox.crop(img) for d in detections]
