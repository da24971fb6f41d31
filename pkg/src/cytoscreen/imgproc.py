"""Classical image operators used by nucleus detection and preprocessing.

Images are numpy ``uint8`` arrays, (H, W) for one channel and (H, W, 3) for
RGB. Binary masks are boolean (H, W) arrays. All window operators replicate
edge pixels at the border.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ._validation import check_image, check_mask
from .exceptions import InvalidParameterError, NotFoundError

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class LabelMap:
    labels: np.ndarray
    component_count: int

    @property
    def shape(self):
        return self.labels.shape


@dataclass(frozen=True)
class BBox:
    """Inclusive pixel box ``[x0, x1] x [y0, y1]``."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self):
        return self.x1 - self.x0 + 1

    @property
    def height(self):
        return self.y1 - self.y0 + 1

    def contains(self, x, y):
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def crop(self, img):
        return img[self.y0:self.y1 + 1, self.x0:self.x1 + 1]

    def to_dict(self):
        return {"x0": self.x0, "y0": self.y0, "x1": self.x1, "y1": self.y1}


def rgb_to_v_channel(img):
    """HSV value channel of an 8-bit RGB image: per-pixel ``max(R, G, B)``."""
    img = check_image(img, channels=3)
    return img.max(axis=2)


def rgb_to_gray(img):
    """ITU-R 601 luma, rounded to uint8. Gray input is returned unchanged."""
    img = check_image(img)
    if img.ndim == 2:
        return img
    gray = img.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    return np.clip(np.rint(gray), 0, 255).astype(np.uint8)


def median_filter(img, window=5):
    img = check_image(img, channels=1)
    if int(window) != window or window < 3 or window % 2 == 0:
        raise InvalidParameterError(f"median window must be an odd integer >= 3, got {window}")
    return ndimage.median_filter(img, size=int(window), mode="nearest")


def _tile_edges(n, parts):
    return np.linspace(0, n, parts + 1).round().astype(int)


def _clahe_luts(img, tiles, clip_limit):
    rows, cols = tiles
    ye, xe = _tile_edges(img.shape[0], rows), _tile_edges(img.shape[1], cols)
    luts = np.empty((rows, cols, 256), dtype=np.float64)
    for r in range(rows):
        for c in range(cols):
            tile = img[ye[r]:ye[r + 1], xe[c]:xe[c + 1]]
            hist = np.bincount(tile.ravel(), minlength=256).astype(np.float64)
            npix = tile.size
            if np.isfinite(clip_limit):
                limit = clip_limit * npix / 256.0
                excess = np.maximum(hist - limit, 0.0).sum()
                hist = np.minimum(hist, limit) + excess / 256.0
            luts[r, c] = 255.0 * np.cumsum(hist) / npix
    centers_y = (ye[:-1] + ye[1:] - 1) / 2.0
    centers_x = (xe[:-1] + xe[1:] - 1) / 2.0
    return luts, centers_y, centers_x


def _interp_axis(coords, centers):
    """Neighbouring tile indices and blend weight for each coordinate."""
    n = len(centers)
    i0 = np.clip(np.searchsorted(centers, coords, side="right") - 1, 0, n - 1)
    i1 = np.minimum(i0 + 1, n - 1)
    span = centers[i1] - centers[i0]
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(span > 0, (coords - centers[i0]) / np.where(span > 0, span, 1), 0.0)
    return i0, i1, np.clip(w, 0.0, 1.0)


def clahe(img, tiles=(8, 8), clip_limit=2.0):
    """Contrast-limited adaptive histogram equalization.

    Parameters
    ----------
    img : (H, W) uint8 array
    tiles : (rows, cols)
        Number of contextual regions. Each tile must hold at least one pixel.
    clip_limit : float
        Relative clip level: a tile histogram bin is capped at
        ``clip_limit * tile_pixels / 256`` and the excess is spread uniformly
        over all 256 bins. ``np.inf`` disables clipping.

    Returns
    -------
    (H, W) uint8 array. Each pixel is the bilinear blend of the equalization
    mappings of the four nearest tile centres.
    """
    img = check_image(img, channels=1)
    if not clip_limit > 0:
        raise InvalidParameterError(f"clip_limit must be positive, got {clip_limit}")
    rows, cols = (int(t) for t in tiles)
    if rows < 1 or cols < 1:
        raise InvalidParameterError(f"tiles must be >= (1, 1), got {tiles}")
    if rows > img.shape[0] or cols > img.shape[1]:
        raise InvalidParameterError(f"tiles {tiles} exceed image size {img.shape}")

    luts, cy, cx = _clahe_luts(img, (rows, cols), clip_limit)
    r0, r1, wy = _interp_axis(np.arange(img.shape[0], dtype=np.float64), cy)
    c0, c1, wx = _interp_axis(np.arange(img.shape[1], dtype=np.float64), cx)

    v = img
    R0, R1 = r0[:, None], r1[:, None]
    C0, C1 = c0[None, :], c1[None, :]
    WY, WX = wy[:, None], wx[None, :]
    top = (1 - WX) * luts[R0, C0, v] + WX * luts[R0, C1, v]
    bottom = (1 - WX) * luts[R1, C0, v] + WX * luts[R1, C1, v]
    out = (1 - WY) * top + WY * bottom
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def otsu_threshold(img):
    """Otsu threshold ``t`` in [0, 255] for the split ``{v < t} | {v >= t}``.

    Between-class variance is compared in exact integer arithmetic; ties go
    to the smallest ``t``. A constant image yields ``t = 0`` (nothing below it).
    """
    img = check_image(img, channels=1)
    hist = np.bincount(img.ravel(), minlength=256).tolist()
    total = sum(hist)
    total_sum = sum(v * h for v, h in enumerate(hist))
    best_t, best_num, best_den = 0, 0, 1
    n0 = s0 = 0
    for t in range(256):
        if t > 0:
            n0 += hist[t - 1]
            s0 += (t - 1) * hist[t - 1]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        # sigma_b^2 * N^2 = (N*S0 - n0*S)^2 / (n0*n1)
        num = (total * s0 - n0 * total_sum) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def global_threshold(img, method="otsu", threshold=None):
    """Foreground mask of dark pixels, ``img < t``.

    ``method`` is ``"otsu"`` or ``"fixed"`` (then ``threshold`` is required).
    """
    img = check_image(img, channels=1)
    if method == "otsu":
        t = otsu_threshold(img)
    elif method == "fixed":
        if threshold is None:
            raise InvalidParameterError("fixed thresholding needs a threshold value")
        t = threshold
    else:
        raise InvalidParameterError(f"unknown threshold method {method!r}")
    return img < t


def connected_components(mask):
    """8-connected labeling; labels run from 1 in raster order of first pixel."""
    mask = check_mask(mask)
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    return LabelMap(labels.astype(np.int32), int(count))


def padded_bbox(lbl, component, pad=0):
    ys, xs = np.nonzero(lbl.labels == component)
    if component < 1 or ys.size == 0:
        raise NotFoundError(f"label {component} not present (component_count={lbl.component_count})")
    h, w = lbl.labels.shape
    return BBox(
        x0=max(int(xs.min()) - pad, 0),
        y0=max(int(ys.min()) - pad, 0),
        x1=min(int(xs.max()) + pad, w - 1),
        y1=min(int(ys.max()) + pad, h - 1),
    )


def component_bboxes(lbl, pad=0):
    """Padded boxes of every component, in label order."""
    h, w = lbl.labels.shape
    boxes = []
    for sl in ndimage.find_objects(lbl.labels):
        if sl is None:
            continue
        ys, xs = sl
        boxes.append(BBox(max(xs.start - pad, 0), max(ys.start - pad, 0),
                          min(xs.stop - 1 + pad, w - 1), min(ys.stop - 1 + pad, h - 1)))
    return boxes


def resize_bilinear(img, size):
    """Resize to ``size = (height, width)`` with half-pixel-centred bilinear sampling.

    Works on (H, W) or (H, W, C) arrays of any numeric dtype; uint8 input is
    rounded back to uint8.
    """
    arr = np.asarray(img)
    out_h, out_w = size
    in_h, in_w = arr.shape[:2]
    ys = np.clip((np.arange(out_h) + 0.5) * in_h / out_h - 0.5, 0, in_h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * in_w / out_w - 0.5, 0, in_w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    if arr.ndim == 3:
        wy, wx = wy[..., None], wx[..., None]
    a = arr.astype(np.float64)
    top = a[y0][:, x0] * (1 - wx) + a[y0][:, x1] * wx
    bot = a[y1][:, x0] * (1 - wx) + a[y1][:, x1] * wx
    out = top * (1 - wy) + bot * wy
    if arr.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out.astype(arr.dtype if np.issubdtype(arr.dtype, np.floating) else np.float64)


def resize_nearest(img, size):
    arr = np.asarray(img)
    out_h, out_w = size
    in_h, in_w = arr.shape[:2]
    ys = np.minimum(((np.arange(out_h) + 0.5) * in_h / out_h).astype(int), in_h - 1)
    xs = np.minimum(((np.arange(out_w) + 0.5) * in_w / out_w).astype(int), in_w - 1)
    return arr[ys][:, xs]


def fill_holes(mask):
    return ndimage.binary_fill_holes(check_mask(mask))


def remove_small_components(mask, min_area):
    if min_area <= 1:
        return check_mask(mask).copy()
    lbl = connected_components(mask)
    if lbl.component_count == 0:
        return lbl.labels > 0
    areas = np.bincount(lbl.labels.ravel(), minlength=lbl.component_count + 1)
    keep = areas >= min_area
    keep[0] = False
    return keep[lbl.labels]
