"""GLCM homogeneity and the homogeneity-based routing of single-cell images."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._validation import check_image
from .exceptions import InvalidInputError, InvalidParameterError
from .imgproc import rgb_to_gray

DEFAULT_OFFSETS = ((1, 0), (0, 1), (1, 1), (1, -1))
THRESHOLD_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


class Route(str, Enum):
    PREPROCESS = "preprocess"
    NO_PREPROCESS = "no_preprocess"


@dataclass(frozen=True)
class GlcmConfig:
    levels: int = 8
    offsets: tuple = DEFAULT_OFFSETS
    symmetric: bool = True
    normalized: bool = True

    def __post_init__(self):
        if self.levels < 2:
            raise InvalidParameterError(f"levels must be >= 2, got {self.levels}")
        if not self.offsets:
            raise InvalidParameterError("offsets must be non-empty")
        offsets = tuple((int(dx), int(dy)) for dx, dy in self.offsets)
        if any(o == (0, 0) for o in offsets):
            raise InvalidParameterError("offset (0, 0) is not allowed")
        object.__setattr__(self, "offsets", offsets)


@dataclass(frozen=True)
class SeparationRule:
    homogeneity_threshold: float

    def __post_init__(self):
        if not 0.0 <= self.homogeneity_threshold <= 1.0:
            raise InvalidParameterError(
                f"homogeneity_threshold must lie in [0, 1], got {self.homogeneity_threshold}")


def quantize(gray, levels):
    return (gray.astype(np.int64) * levels) // 256


def glcm(img, cfg=None):
    """Gray-level co-occurrence matrix summed over ``cfg.offsets``.

    An offset ``(dx, dy)`` pairs pixel ``(x, y)`` with ``(x + dx, y + dy)``.
    Colour input is converted to luma first.
    """
    cfg = cfg or GlcmConfig()
    gray = rgb_to_gray(check_image(img))
    h, w = gray.shape
    q = quantize(gray, cfg.levels)
    L = cfg.levels
    counts = np.zeros(L * L, dtype=np.float64)
    for dx, dy in cfg.offsets:
        if abs(dx) >= w or abs(dy) >= h:
            raise InvalidInputError(f"image {h}x{w} too small for offset ({dx}, {dy})")
        a = q[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
        b = q[max(0, dy):h + min(0, dy), max(0, dx):w + min(0, dx)]
        counts += np.bincount((a * L + b).ravel(), minlength=L * L)
    m = counts.reshape(L, L)
    if cfg.symmetric:
        m = m + m.T
    if cfg.normalized:
        m = m / m.sum()
    return m


def homogeneity(m):
    """Inverse difference moment ``sum P[i, j] / (1 + |i - j|)`` of a normalized GLCM."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"GLCM must be square, got shape {m.shape}")
    if np.any(m < 0) or abs(m.sum() - 1.0) > 1e-9:
        raise InvalidInputError("GLCM must be normalized (non-negative, summing to 1)")
    i, j = np.indices(m.shape)
    return float((m / (1.0 + np.abs(i - j))).sum())


def image_homogeneity(img, cfg=None):
    cfg = cfg or GlcmConfig()
    if not cfg.normalized:
        cfg = GlcmConfig(cfg.levels, cfg.offsets, cfg.symmetric, True)
    return homogeneity(glcm(img, cfg))


def route(img, rule, cfg=None):
    h = image_homogeneity(img, cfg)
    return Route.PREPROCESS if h >= rule.homogeneity_threshold else Route.NO_PREPROCESS


def calibrate_threshold(score_fn, grid=THRESHOLD_GRID):
    """Pick the grid threshold with the highest ``score_fn(threshold)``.

    Ties go to the smallest threshold. Returns ``(best, {threshold: score})``.
    """
    scores = {float(t): float(score_fn(float(t))) for t in grid}
    best = max(scores, key=lambda t: (scores[t], -t))
    return best, scores
