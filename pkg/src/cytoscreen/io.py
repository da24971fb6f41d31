"""PNG/BMP image and mask I/O."""

from pathlib import Path

import numpy as np
from PIL import Image

from ._validation import check_image, check_mask
from .exceptions import DataError

IMAGE_SUFFIXES = (".png", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff")


def read_image(path, mode="RGB"):
    """Read an 8-bit image as (H, W, 3) (``mode="RGB"``) or (H, W) (``mode="L"``)."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert(mode), dtype=np.uint8).copy()
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc


def write_image(path, img):
    img = check_image(img)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    # optimize=False and no metadata keep PNG bytes stable across runs
    Image.fromarray(img).save(path, optimize=False)


def write_mask(path, mask):
    """Store a boolean mask as a single-channel {0, 255} image."""
    write_image(path, check_mask(mask).astype(np.uint8) * 255)


def read_mask(path):
    return read_image(path, mode="L") > 127


def write_label_png(path, labels):
    """Write a small-integer label map (e.g. 0=background, 1=edge, 2=nucleus) as 8-bit PNG."""
    arr = np.asarray(labels)
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
        raise ValueError("label values must fit in 8 bits")
    write_image(path, arr.astype(np.uint8))


def list_images(directory):
    directory = Path(directory)
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
