"""Input validation helpers for images, masks and image collections."""

import numpy as np

from .exceptions import ChannelMismatchError, InvalidInputError, ShapeError


def check_image(img, channels=None, name="image"):
    """Return ``img`` as a C-contiguous uint8 array of shape (H, W) or (H, W, 3).

    ``channels`` may be 1 or 3 to demand a specific layout.
    """
    arr = np.asarray(img)
    if arr.dtype == bool:
        raise InvalidInputError(f"{name} is boolean; expected 8-bit samples")
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
        raise ShapeError(f"{name} must be HxW or HxWx3, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be at least 1x1, got {arr.shape}")
    nch = 1 if arr.ndim == 2 else 3
    if channels is not None and nch != channels:
        raise ChannelMismatchError(f"{name} has {nch} channel(s), expected {channels}")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
            raise InvalidInputError(f"{name} contains non-finite values")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise InvalidInputError(f"{name} values outside [0, 255]")
        arr = arr.astype(np.uint8)
    return np.ascontiguousarray(arr)


def check_mask(mask, like=None, name="mask"):
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    arr = arr.astype(bool, copy=False)
    if like is not None:
        shape = np.asarray(like).shape[:2]
        if arr.shape != shape:
            raise ShapeError(f"{name} shape {arr.shape} does not match image shape {shape}")
    return arr


def check_same_shape(a, b, names=("pred", "gt")):
    if a.shape != b.shape:
        raise ShapeError(f"{names[0]} shape {a.shape} != {names[1]} shape {b.shape}")


def check_images(X, name="X"):
    """Validate a batch of RGB images given as a list or an (N, H, W, 3) array."""
    if isinstance(X, np.ndarray) and X.ndim == 4:
        items = list(X)
    else:
        items = list(X)
    if not items:
        raise InvalidInputError(f"{name} is empty")
    return [check_image(x, name=f"{name}[{i}]") for i, x in enumerate(items)]
