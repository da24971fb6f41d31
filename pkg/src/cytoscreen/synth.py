"""Synthetic Pap-smear-like cells for desk-scale runs.

Each class gets its own nucleus size, chromatin texture and cytoplasm size
and colour, loosely ordered by abnormality: abnormal nuclei are larger,
darker and more coarsely textured, and their cytoplasm is smaller. Nuclei
are rasterized ellipses, so ground-truth masks are exact.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .dataset import CLASSES, CellRecord, MultiCellRecord, NucleusAnnotation, binary_label


@dataclass(frozen=True)
class CellStyle:
    nucleus_radius: tuple
    aspect: tuple
    texture: float
    nucleus_rgb: tuple
    cyto_radius: tuple
    cyto_aspect: tuple
    cyto_rgb: tuple


STYLES = {
    "nsup": CellStyle((7.0, 8.5), (0.85, 1.0), 5.0, (85, 60, 125), (24, 29), (0.8, 1.0), (232, 168, 178)),
    "nint": CellStyle((8.0, 9.5), (0.8, 1.0), 7.0, (75, 70, 128), (22, 27), (0.8, 1.0), (172, 205, 214)),
    "ncol": CellStyle((8.0, 10.0), (0.6, 0.75), 8.0, (88, 72, 138), (25, 29), (0.5, 0.65), (198, 182, 218)),
    "ldys": CellStyle((10.0, 12.0), (0.75, 1.0), 18.0, (72, 56, 118), (21, 25), (0.75, 1.0), (182, 202, 228)),
    "mdys": CellStyle((12.0, 14.0), (0.75, 1.0), 24.0, (66, 50, 112), (20, 24), (0.75, 1.0), (166, 186, 222)),
    "sdys": CellStyle((14.0, 16.0), (0.7, 1.0), 30.0, (60, 45, 106), (20, 24), (0.75, 1.0), (150, 170, 215)),
    "cis": CellStyle((15.5, 18.0), (0.65, 0.95), 34.0, (55, 40, 100), (21, 25), (0.8, 1.0), (140, 158, 205)),
}
BACKGROUND_RGB = (236, 230, 240)


def ellipse_mask(shape, cx, cy, a, b, theta):
    """Pixels whose centres fall inside the ellipse (semi-axes a >= b, rotation theta)."""
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    c, s = np.cos(theta), np.sin(theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _smooth_noise(rng, shape, sigma):
    f = ndimage.gaussian_filter(rng.standard_normal(shape), sigma)
    return f / (f.std() + 1e-12)


def _draw_cell(canvas, cx, cy, label, rng, max_extent=None):
    """Paint one cell onto a float RGB canvas; returns (nucleus mask, cell mask, nucleus centre)."""
    st = STYLES[label]
    shape = canvas.shape[:2]
    jitter = lambda c: np.clip(np.asarray(c, float) + rng.normal(0, 6, 3), 0, 255)

    ca = rng.uniform(*st.cyto_radius)
    if max_extent is not None:
        ca = min(ca, max_extent)
    cb = ca * rng.uniform(*st.cyto_aspect)
    ctheta = rng.uniform(0, np.pi)
    cell = ellipse_mask(shape, cx, cy, ca, cb, ctheta)

    na = rng.uniform(*st.nucleus_radius)
    nb = na * rng.uniform(*st.aspect)
    # the nucleus must sit well inside the cytoplasm
    na = min(na, cb - 3.0)
    nb = min(nb, na)
    slack = max(cb - na - 3.0, 0.0)
    off = rng.uniform(-1, 1, 2) * min(slack, 3.0)
    ncx, ncy = cx + off[0], cy + off[1]
    ntheta = ctheta + rng.uniform(-0.3, 0.3)
    nucleus = ellipse_mask(shape, ncx, ncy, na, nb, ntheta)

    cyto_tex = 4.0 * _smooth_noise(rng, shape, 2.0)
    canvas[cell] = jitter(st.cyto_rgb)[None, :] + cyto_tex[cell][:, None]
    chrom = st.texture * _smooth_noise(rng, shape, 1.2)
    canvas[nucleus] = jitter(st.nucleus_rgb)[None, :] + chrom[nucleus][:, None]
    return nucleus, cell, (ncx, ncy)


def _finish(canvas, rng, noise=4.0):
    canvas = ndimage.gaussian_filter(canvas, sigma=(0.6, 0.6, 0))
    canvas += rng.normal(0, noise, canvas.shape)
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)


def _background(shape, rng):
    bg = np.asarray(BACKGROUND_RGB, float) + rng.normal(0, 3, 3)
    canvas = np.empty(shape + (3,), dtype=np.float64)
    canvas[:] = bg
    return canvas


def synth_cell(label, seed, index=0, size=64, return_cell_mask=False):
    rng = np.random.default_rng([seed, index, CLASSES.index(label)])
    canvas = _background((size, size), rng)
    c = (size - 1) / 2.0 + rng.uniform(-3, 3, 2)
    nucleus, cell, _ = _draw_cell(canvas, c[0], c[1], label, rng, max_extent=size / 2.0 - 3)
    image = _finish(canvas, rng)
    rec = CellRecord(image, nucleus, label, f"synth{seed}-{index:05d}")
    return (rec, cell) if return_cell_mask else rec


def synth_cells(n, seed=0, size=64, classes=CLASSES, return_cell_masks=False):
    """``n`` single-cell records with labels cycling through ``classes``.

    Record ``i`` depends only on ``(seed, i)``.
    """
    out = [synth_cell(classes[i % len(classes)], seed, i, size, return_cell_masks) for i in range(n)]
    if return_cell_masks:
        return [r for r, _ in out], [m for _, m in out]
    return out


def _grade(labels):
    abnormal = [l for l in labels if binary_label(l)]
    if not abnormal:
        return "Normal"
    worst = max(abnormal, key=CLASSES.index)
    return {"ldys": "LSIL", "mdys": "HSIL", "sdys": "HSIL", "cis": "SCC"}[worst]


def synth_slide(seed, index=0, size=256, n_cells=5, abnormal_fraction=0.5):
    """Multi-cell canvas with ``n_cells`` non-overlapping cells and centroid annotations."""
    rng = np.random.default_rng([seed, index, 7919])
    canvas = _background((size, size), rng)
    placed, anns, masks, labels = [], [], [], []
    attempts = 0
    while len(placed) < n_cells and attempts < 2000:
        attempts += 1
        r = 31.0
        cx, cy = rng.uniform(r, size - 1 - r, 2)
        if any((cx - px) ** 2 + (cy - py) ** 2 < (2 * r + 2) ** 2 for px, py in placed):
            continue
        abnormal = rng.random() < abnormal_fraction
        pool = CLASSES[3:] if abnormal else CLASSES[:3]
        label = pool[int(rng.integers(len(pool)))]
        nucleus, _, (ncx, ncy) = _draw_cell(canvas, cx, cy, label, rng, max_extent=r - 1)
        placed.append((cx, cy))
        labels.append(label)
        ys, xs = np.nonzero(nucleus)
        anns.append(NucleusAnnotation(float(xs.mean()), float(ys.mean()),
                                      "abnormal" if binary_label(label) else "normal"))
        masks.append(nucleus)
    image = _finish(canvas, rng)
    return MultiCellRecord(image, anns, _grade(labels), f"slide{seed}-{index:04d}", truth_masks=masks)


def synth_slides(n, seed=0, size=256, n_cells=5):
    return [synth_slide(seed, i, size, n_cells) for i in range(n)]


def synth_corpus(n, seed=0, slides=0):
    """Single cells plus (optionally) multi-cell slides from one seed."""
    return synth_cells(n, seed), synth_slides(slides, seed)
