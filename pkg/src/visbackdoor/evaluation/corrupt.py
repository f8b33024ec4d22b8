"""Deployment-time image corruptions: bilinear rescale, JPEG at quality 50, random crop."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .jpeg import jpeg_roundtrip

CORRUPTIONS = ("resize80", "jpeg50", "crop20")
RESIZE_FACTOR = 0.8
CROP_AREA = 0.8


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres, edge clamped
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_bilinear(image: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear resize of an ``H x W x C`` image with half-pixel sampling."""
    img = np.asarray(image, dtype=np.float64)
    y0, y1, fy = _axis_weights(img.shape[0], h)
    x0, x1, fx = _axis_weights(img.shape[1], w)
    rows = img[y0] * (1 - fy)[:, None, None] + img[y1] * fy[:, None, None]
    return rows[:, x0] * (1 - fx)[None, :, None] + rows[:, x1] * fx[None, :, None]


def resize80(image: np.ndarray) -> np.ndarray:
    H, W = image.shape[:2]
    small = resize_bilinear(image, int(round(H * RESIZE_FACTOR)), int(round(W * RESIZE_FACTOR)))
    return np.clip(resize_bilinear(small, H, W), 0.0, 1.0)


def crop20(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Keep a random window of 80% of the area (same aspect) and resize it back."""
    H, W = image.shape[:2]
    side = np.sqrt(CROP_AREA)
    h, w = int(round(H * side)), int(round(W * side))
    top = int(rng.integers(0, H - h + 1))
    left = int(rng.integers(0, W - w + 1))
    return np.clip(resize_bilinear(image[top:top + h, left:left + w], H, W), 0.0, 1.0)


def corrupt(image: np.ndarray, kind: str, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Apply one corruption to a ``[0, 1]`` image; the input is never modified."""
    img = np.asarray(image, dtype=np.float64)
    if img.min(initial=0.0) < 0.0 or img.max(initial=1.0) > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    if kind == "resize80":
        return resize80(img)
    if kind == "jpeg50":
        return jpeg_roundtrip(img, 50)
    if kind == "crop20":
        if rng is None:
            raise ValueError("crop20 needs a random generator")
        return crop20(img, rng)
    raise ValueError(f"unknown corruption {kind!r}; expected one of {CORRUPTIONS}")
