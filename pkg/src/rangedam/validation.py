"""Input validation helpers used by the container types and the estimators."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, ValidationError


def ensure_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")


def as_array(value, name: str, dtype=None, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(value, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    return arr


def check_image_stack(X, channels: int | None = None) -> np.ndarray:
    """Validate a stack of multichannel images shaped (n, C, H, W)."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[np.newaxis]
    if arr.ndim != 4:
        raise ShapeError(f"expected images shaped (n, C, H, W), got {arr.shape}")
    if channels is not None and arr.shape[1] != channels:
        raise ShapeError(f"expected {channels} channels, got {arr.shape[1]}")
    if arr.shape[2] < 1 or arr.shape[3] < 1:
        raise ShapeError(f"images need a nonempty spatial extent, got {arr.shape}")
    ensure_finite("image stack", arr)
    return arr


def check_label_stack(y, image_shape: tuple[int, ...]) -> np.ndarray:
    """Validate per-pixel labels shaped (n, H, W) against an image stack."""
    arr = np.asarray(y)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    if arr.ndim != 3:
        raise ShapeError(f"expected labels shaped (n, H, W), got {arr.shape}")
    n, _, h, w = image_shape
    if arr.shape != (n, h, w):
        raise ShapeError(f"labels shaped {arr.shape} do not match images shaped {image_shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise ValidationError("labels must be integers")
        arr = arr.astype(np.int64)
    return arr.astype(np.int64, copy=False)
