"""Patch-CNN nucleus segmentation of single-cell images with selective preprocessing.

Every pixel is classified from the patch centred on it as background (0),
edge (1) or nucleus (2). Images whose GLCM homogeneity reaches the routing
threshold are contrast-enhanced and go to one network; the rest go, raw, to
a second network.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator

from . import imgproc
from ._validation import check_image, check_images, check_mask
from .exceptions import ConfigurationError, InvalidInputError, ShapeError, StateError
from .metrics import pixel_fscore
from .nnet import Conv2D, Dense, MaxPool2D, Network, ReLU, Softmax, TrainConfig, train
from .nnet.layers import _windows
from .texture import GlcmConfig, Route, SeparationRule, calibrate_threshold, image_homogeneity

log = logging.getLogger(__name__)

BACKGROUND, EDGE, NUCLEUS = 0, 1, 2
CLASS_NAMES = ("background", "edge", "nucleus")


@dataclass(frozen=True)
class PatchSpec:
    """Patch geometry. A patch for centre (r, c) spans rows ``r - size//2 .. r + size - size//2 - 1``."""

    size: int = 32
    band: int = 2
    per_class: int = 8
    stride: int = 1
    near_fraction: float = 0.5

    def __post_init__(self):
        if self.size < 8:
            raise ValueError(f"patch size must be >= 8, got {self.size}")
        if self.band < 1:
            raise ValueError(f"edge band must be >= 1, got {self.band}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if not 0.0 <= self.near_fraction <= 1.0:
            raise ValueError(f"near_fraction must lie in [0, 1], got {self.near_fraction}")

    @property
    def before(self):
        return self.size // 2

    @property
    def after(self):
        return self.size - self.size // 2 - 1


@dataclass
class TriClassMap:
    classes: np.ndarray  # (H, W) int, 0=background 1=edge 2=nucleus
    scores: np.ndarray  # (H, W, K) class scores

    def __post_init__(self):
        if self.classes.shape != self.scores.shape[:2]:
            raise ShapeError("class map and score map disagree in size")


def boundary(mask):
    """Foreground pixels with at least one in-image background 4-neighbour."""
    mask = check_mask(mask)
    return mask & ~ndimage.binary_erosion(mask, border_value=1)


def label_pixels(gt, band=2):
    """Three-class ground truth: edge = within Chebyshev distance ``band`` of the boundary."""
    gt = check_mask(gt)
    edge = ndimage.binary_dilation(boundary(gt), structure=np.ones((2 * band + 1,) * 2, bool))
    out = np.full(gt.shape, BACKGROUND, dtype=np.int8)
    out[gt] = NUCLEUS
    out[edge] = EDGE
    return out


def _near_background(gt, band):
    """Background pixels within ``2 * band + 2`` (Chebyshev) of the boundary, outside the edge band."""
    ring = ndimage.binary_dilation(boundary(gt), structure=np.ones((4 * band + 5,) * 2, bool))
    edge = ndimage.binary_dilation(boundary(gt), structure=np.ones((2 * band + 1,) * 2, bool))
    return ring & ~edge & ~gt


def binary_pixels(gt):
    """Two-class ground truth in the same coding (background 0, nucleus 2)."""
    return np.where(check_mask(gt), NUCLEUS, BACKGROUND).astype(np.int8)


def preprocess(img, tiles=(8, 8), clip_limit=2.0):
    """Contrast enhancement: CLAHE on the luma, replicated to three channels."""
    gray = imgproc.rgb_to_gray(check_image(img))
    h, w = gray.shape
    tiles = (min(tiles[0], h), min(tiles[1], w))
    eq = imgproc.clahe(gray, tiles, clip_limit)
    return np.repeat(eq[:, :, None], 3, axis=2)


def pad_for_patches(img, spec):
    pads = ((spec.before, spec.after), (spec.before, spec.after))
    if img.ndim == 3:
        pads += ((0, 0),)
    return np.pad(img, pads, mode="edge")


def to_tensor(imgs):
    """uint8 (N, H, W, 3) -> float32 NCHW centred on zero."""
    x = np.asarray(imgs, dtype=np.float32) / 255.0 - 0.5
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2))


def extract_patches(image, gt_mask, spec=None, seed=0, n_classes=3):
    """Class-balanced patches around sampled centre pixels.

    Up to ``spec.near_fraction`` of the background budget is drawn from the
    ring of background pixels within ``band + 2`` of the edge band, the rest
    uniformly from the remaining background. Returns ``(patches (N, S, S, 3) uint8, labels (N,), centres (N, 2) as (row, col))``.
    With ``n_classes=2`` labels are 0 background / 1 nucleus; with 3 they are
    0 background / 1 edge / 2 nucleus.
    """
    spec = spec or PatchSpec()
    image = check_image(image, channels=3)
    gt_mask = check_mask(gt_mask, like=image)
    tri = label_pixels(gt_mask, spec.band) if n_classes == 3 else binary_pixels(gt_mask)
    rng = np.random.default_rng(seed)
    codes = (BACKGROUND, EDGE, NUCLEUS) if n_classes == 3 else (BACKGROUND, NUCLEUS)
    near = _near_background(gt_mask, spec.band)
    centres, labels = [], []

    def take(region, n, k):
        rows, cols = np.nonzero(region)
        if rows.size == 0 or n <= 0:
            return 0
        pick = np.sort(rng.choice(rows.size, size=min(n, rows.size), replace=False))
        centres.append(np.stack([rows[pick], cols[pick]], axis=1))
        labels.append(np.full(pick.size, k, dtype=np.int64))
        return pick.size

    for k, code in enumerate(codes):
        region = tri == code
        if code == BACKGROUND:
            # either pool tops up the other when it runs short
            n_near_avail = int(np.count_nonzero(region & near))
            n_far_avail = int(np.count_nonzero(region & ~near))
            n_near = min(int(round(spec.near_fraction * spec.per_class)), n_near_avail)
            n_far = min(spec.per_class - n_near, n_far_avail)
            n_near = min(spec.per_class - n_far, n_near_avail)
            take(region & near, n_near, k)
            take(region & ~near, n_far, k)
        else:
            take(region, spec.per_class, k)
    centres = np.concatenate(centres) if centres else np.zeros((0, 2), int)
    labels = np.concatenate(labels) if labels else np.zeros(0, np.int64)
    padded = pad_for_patches(image, spec)
    s = spec.size
    patches = np.stack([padded[r:r + s, c:c + s] for r, c in centres]) if len(centres) else \
        np.zeros((0, s, s, 3), np.uint8)
    return patches, labels, centres


def build_patch_cnn(n_classes=3, patch_size=32, width=32, hidden=128, seed=0):
    """Two blocks of (3x3 conv, 3x3 conv, 2x2 max-pool) followed by fc-hidden and fc-n_classes."""
    layers = [
        Conv2D(width, 3), ReLU(), Conv2D(width, 3), ReLU(), MaxPool2D(2),
        Conv2D(width, 3), ReLU(), Conv2D(width, 3), ReLU(), MaxPool2D(2),
        Dense(hidden), ReLU(), Dense(n_classes), Softmax(),
    ]
    return Network(layers, (3, patch_size, patch_size), seed=seed)


def _dense_conv(x, w, b, dilation):
    f, c, kh, kw = w.shape
    win = _windows(x, kh, kw, 1, dilation)
    n, _, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    out = cols @ w.reshape(f, -1).T + b
    return out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)


def dense_forward(net, x):
    """Evaluate a patch network at every patch position of ``x`` at once.

    Valid convolutions keep stride 1; each k x k pooling becomes a stride-1
    pooling and multiplies the dilation of everything after it by k. The
    first dense layer becomes a dilated convolution with the kernel of its
    input map, later dense layers become 1x1 convolutions. The result equals
    running ``net`` on every patch separately.
    """
    d = 1
    for layer in net.layers:
        if isinstance(layer, Conv2D):
            if layer.stride != 1 or layer.pad != 0 or layer.dilation != 1:
                raise ConfigurationError(f"dense inference needs valid stride-1 convolutions ({layer.name})")
            x = _dense_conv(x, layer.params["w"], layer.params["b"], d)
        elif isinstance(layer, MaxPool2D):
            if layer.stride != layer.window:
                raise ConfigurationError(f"dense inference needs non-overlapping pooling ({layer.name})")
            k = layer.window
            win = _windows(x, k, k, 1, d)
            x = win.max(axis=(-2, -1))
            d *= layer.stride
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0)
        elif isinstance(layer, Dense):
            w = layer.params["w"]
            in_shape = layer.in_shape if len(layer.in_shape) == 3 else (layer.in_shape[0], 1, 1)
            kernel = w.T.reshape((w.shape[1],) + tuple(in_shape))
            x = _dense_conv(x, kernel, layer.params["b"], d)
        elif isinstance(layer, Softmax):
            z = x - x.max(axis=1, keepdims=True)
            e = np.exp(z)
            x = e / e.sum(axis=1, keepdims=True)
        else:
            raise ConfigurationError(f"layer kind {layer.kind!r} not supported for dense inference")
    return x


def dense_scores(net, image, spec, rows_per_chunk=48):
    """Per-pixel class scores (H, W, K) for an RGB image (already preprocessed if needed)."""
    padded = pad_for_patches(image, spec)
    h, w = image.shape[:2]
    s = spec.size
    if spec.stride == 1:
        out = []
        for r0 in range(0, h, rows_per_chunk):
            r1 = min(r0 + rows_per_chunk, h)
            x = to_tensor(padded[None, r0:r1 + s - 1])
            out.append(dense_forward(net, x)[0])
        return np.concatenate(out, axis=1).transpose(1, 2, 0)
    rows = np.arange(0, h, spec.stride)
    cols = np.arange(0, w, spec.stride)
    patches = np.stack([padded[r:r + s, c:c + s] for r in rows for c in cols])
    probs = net.predict_proba(to_tensor(patches), batch_size=256)
    grid = probs.reshape(len(rows), len(cols), -1)
    ri = np.minimum(np.arange(h) // spec.stride, len(rows) - 1)
    ci = np.minimum(np.arange(w) // spec.stride, len(cols) - 1)
    return grid[ri][:, ci]


def largest_component(mask):
    """Keep the largest 8-connected component (ties: centroid nearest the image centre)."""
    lbl = imgproc.connected_components(mask)
    if lbl.component_count == 0:
        return np.zeros_like(lbl.labels, dtype=bool)
    labels = lbl.labels
    idx = np.arange(1, lbl.component_count + 1)
    areas = ndimage.sum_labels(np.ones_like(labels), labels, idx)
    cents = np.asarray(ndimage.center_of_mass(np.ones_like(labels), labels, idx)).reshape(-1, 2)
    centre = (np.asarray(labels.shape) - 1) / 2.0
    dist = np.hypot(*(cents - centre).T)
    best = min(range(len(idx)), key=lambda i: (-areas[i], dist[i], i))
    return labels == idx[best]


def postprocess(mask):
    """Largest component with holes filled. Idempotent."""
    return ndimage.binary_fill_holes(largest_component(mask))


def resolve_classes(classes, band=2, n_classes=3):
    """Binary nucleus map from a class map.

    Edge pixels join the nucleus; the merged region is then eroded by
    ``band`` so that the outer half of the edge band is given back to the
    background.
    """
    classes = np.asarray(classes)
    if n_classes == 2:
        return classes == NUCLEUS
    merged = ndimage.binary_fill_holes((classes == NUCLEUS) | (classes == EDGE))
    return ndimage.binary_erosion(merged, structure=np.ones((2 * band + 1,) * 2, bool), border_value=1)


def mask_background(img, mask):
    """Set every pixel outside ``mask`` to 255 in all channels."""
    img = check_image(img)
    mask = check_mask(mask)
    if mask.shape != img.shape[:2]:
        raise ShapeError(f"mask shape {mask.shape} does not match image shape {img.shape[:2]}")
    out = img.copy()
    out[~mask] = 255
    return out


def _fit_patch_net(images, masks, spec, n_classes, cfg, seed, width, hidden):
    X, y = [], []
    for i, (img, m) in enumerate(zip(images, masks)):
        p, lab, _ = extract_patches(img, m, spec, seed=seed * 100003 + i, n_classes=n_classes)
        X.append(p)
        y.append(lab)
    X = np.concatenate(X)
    y = np.concatenate(y)
    net = build_patch_cnn(n_classes, spec.size, width, hidden, seed=seed)
    hist = train(net, to_tensor(X), y, cfg)
    return net, hist


class SelectiveSegmenter(BaseEstimator):
    """Nucleus segmenter with homogeneity-routed preprocessing and two patch CNNs.

    Parameters
    ----------
    routing : {"selective", "none", "all"}
        ``"selective"`` routes each image by GLCM homogeneity; ``"none"``
        sends every image raw to one network; ``"all"`` preprocesses every
        image for one network.
    homogeneity_threshold : float or "auto"
        ``"auto"`` calibrates on a held-out fifth of the training images by
        maximizing mean F-score over the 0.05-step grid.
    n_classes : {3, 2}
        3 = background/edge/nucleus, 2 = background/nucleus.
    """

    def __init__(self, routing="selective", homogeneity_threshold="auto", n_classes=3,
                 patch_size=32, band=2, per_class=8, stride=1, near_fraction=0.5, width=32, hidden=128,
                 epochs=5, batch_size=32, lr=0.01, momentum=0.9, loss="cross_entropy",
                 glcm_levels=8, clahe_tiles=(8, 8), clip_limit=2.0, calibration_fraction=0.2,
                 seed=0):
        self.routing = routing
        self.homogeneity_threshold = homogeneity_threshold
        self.n_classes = n_classes
        self.patch_size = patch_size
        self.band = band
        self.per_class = per_class
        self.stride = stride
        self.near_fraction = near_fraction
        self.width = width
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.momentum = momentum
        self.loss = loss
        self.glcm_levels = glcm_levels
        self.clahe_tiles = clahe_tiles
        self.clip_limit = clip_limit
        self.calibration_fraction = calibration_fraction
        self.seed = seed

    # -- helpers -------------------------------------------------------------
    @property
    def patch_spec(self):
        return PatchSpec(self.patch_size, self.band, self.per_class, self.stride, self.near_fraction)

    def _glcm_cfg(self):
        return GlcmConfig(levels=self.glcm_levels)

    def _train_cfg(self, seed):
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                           momentum=self.momentum, lr_decay_epoch=None, seed=seed, loss=self.loss)

    def _prep(self, img):
        return preprocess(img, self.clahe_tiles, self.clip_limit)

    def route_of(self, img, threshold=None):
        if self.routing == "none":
            return Route.NO_PREPROCESS
        if self.routing == "all":
            return Route.PREPROCESS
        t = self.threshold_ if threshold is None else threshold
        return Route.PREPROCESS if image_homogeneity(img, self._glcm_cfg()) >= t else Route.NO_PREPROCESS

    def _fit_routes(self, images, masks, routes, seed):
        spec = self.patch_spec
        raw = [i for i, r in enumerate(routes) if r == Route.NO_PREPROCESS]
        pre = [i for i, r in enumerate(routes) if r == Route.PREPROCESS]
        nets, hists = {}, {}
        if raw:
            nets["w"], hists["w"] = _fit_patch_net([images[i] for i in raw], [masks[i] for i in raw], spec,
                                                   self.n_classes, self._train_cfg(seed), seed,
                                                   self.width, self.hidden)
        if pre:
            nets["p"], hists["p"] = _fit_patch_net([self._prep(images[i]) for i in pre], [masks[i] for i in pre],
                                                   spec, self.n_classes, self._train_cfg(seed + 1), seed + 1,
                                                   self.width, self.hidden)
        return nets, hists

    def _calibrate(self, images, masks, homs):
        rng = np.random.default_rng(self.seed + 7)
        n = len(images)
        n_cal = max(1, int(round(self.calibration_fraction * n)))
        perm = rng.permutation(n)
        cal, fit = perm[:n_cal], perm[n_cal:]
        if len(fit) == 0:
            raise ConfigurationError("too few training images to calibrate the routing threshold")
        fi = [images[i] for i in fit]
        fm = [masks[i] for i in fit]
        spec = self.patch_spec
        net_w, _ = _fit_patch_net(fi, fm, spec, self.n_classes, self._train_cfg(self.seed + 11),
                                  self.seed + 11, self.width, self.hidden)
        net_p, _ = _fit_patch_net([self._prep(i) for i in fi], fm, spec, self.n_classes,
                                  self._train_cfg(self.seed + 12), self.seed + 12, self.width, self.hidden)
        f_raw = np.array([pixel_fscore(self._segment_with(net_w, images[i], False), masks[i]).f
                          for i in cal])
        f_pre = np.array([pixel_fscore(self._segment_with(net_p, images[i], True), masks[i]).f
                          for i in cal])
        hom_cal = homs[cal]
        hom_all = homs

        def score(t):
            n_pre = int(np.sum(hom_all >= t))
            if n_pre == 0 or n_pre == len(hom_all):
                return -np.inf  # a starved route cannot be trained
            return float(np.mean(np.where(hom_cal >= t, f_pre, f_raw)))

        best, scores = calibrate_threshold(score)
        if not np.isfinite(scores[best]):
            raise ConfigurationError("no grid threshold leaves both routes with training images")
        return best, scores

    def _segment_with(self, net, img, preprocessed):
        x = self._prep(img) if preprocessed else img
        scores = dense_scores(net, x, self.patch_spec)
        k = scores.argmax(axis=2)
        classes = k * 2 if self.n_classes == 2 else k  # 2-class nets output (background, nucleus)
        return postprocess(resolve_classes(classes, self.band, self.n_classes))

    # -- estimator API -----------------------------------------------------------
    def fit(self, X, y):
        """``X``: RGB single-cell images; ``y``: boolean nucleus masks."""
        if self.routing not in ("selective", "none", "all"):
            raise ConfigurationError(f"routing must be selective|none|all, got {self.routing!r}")
        if self.n_classes not in (2, 3):
            raise ConfigurationError(f"n_classes must be 2 or 3, got {self.n_classes}")
        images = check_images(X)
        masks = [check_mask(m, like=img) for m, img in zip(y, images)]
        if len(masks) != len(images):
            raise InvalidInputError(f"{len(images)} images but {len(masks)} masks")

        self.calibration_scores_ = None
        if self.routing == "selective":
            homs = np.array([image_homogeneity(img, self._glcm_cfg()) for img in images])
            if self.homogeneity_threshold == "auto":
                self.threshold_, self.calibration_scores_ = self._calibrate(images, masks, homs)
            else:
                self.threshold_ = float(self.homogeneity_threshold)
            SeparationRule(self.threshold_)
        else:
            self.threshold_ = None
        routes = [self.route_of(img) for img in images]
        if self.routing == "selective":
            for name, r in (("no-preprocess (CNN_w)", Route.NO_PREPROCESS), ("preprocess (CNN_p)", Route.PREPROCESS)):
                if r not in routes:
                    raise ConfigurationError(
                        f"route {name} received no training images at threshold {self.threshold_}")
        nets, hists = self._fit_routes(images, masks, routes, self.seed)
        self.cnn_w_ = nets.get("w")
        self.cnn_p_ = nets.get("p")
        self.cnn_p_untrained_ = self.cnn_p_ is None
        self.cnn_w_untrained_ = self.cnn_w_ is None
        self.history_ = hists
        self.route_counts_ = {"preprocess": routes.count(Route.PREPROCESS),
                              "no_preprocess": routes.count(Route.NO_PREPROCESS)}
        return self

    def _check_fitted(self):
        if not hasattr(self, "history_"):
            raise StateError("SelectiveSegmenter is not fitted; call fit() first")

    def predict_map(self, img):
        """Route one image and classify every pixel; returns ``(TriClassMap, route)``."""
        self._check_fitted()
        img = check_image(img, channels=3)
        r = self.route_of(img)
        net = self.cnn_p_ if r == Route.PREPROCESS else self.cnn_w_
        if net is None:
            raise StateError(f"no network was trained for route {r.value}")
        x = self._prep(img) if r == Route.PREPROCESS else img
        scores = dense_scores(net, x, self.patch_spec)
        k = scores.argmax(axis=2)
        if self.n_classes == 2:
            full = np.zeros(scores.shape[:2] + (3,), dtype=scores.dtype)
            full[..., BACKGROUND], full[..., NUCLEUS] = scores[..., 0], scores[..., 1]
            return TriClassMap((k * 2).astype(np.int8), full), r
        return TriClassMap(k.astype(np.int8), scores), r

    def segment(self, img):
        """``(TriClassMap, final mask)`` for one image."""
        tri, _ = self.predict_map(img)
        return tri, postprocess(resolve_classes(tri.classes, self.band, self.n_classes))

    def predict(self, X):
        return [self.segment(img)[1] for img in check_images(X)]

    def score(self, X, y):
        """Mean per-image pixel F-score."""
        preds = self.predict(X)
        return float(np.mean([pixel_fscore(p, check_mask(g)).f for p, g in zip(preds, y)]))

    @property
    def networks(self):
        self._check_fitted()
        return {"cnn_w": self.cnn_w_, "cnn_p": self.cnn_p_}
