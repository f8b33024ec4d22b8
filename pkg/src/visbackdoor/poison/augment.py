"""Flip / translate / crop-resize augmentation expressed as pixel index remaps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor

MAX_SHIFT = 4
CROP_FRACTION = 7 / 8


@dataclass(frozen=True)
class AugmentDraw:
    """One sampled augmentation: flip, then shift (zero fill), then crop window resized back."""

    flip: bool
    dy: int
    dx: int
    top: int
    left: int
    crop: int  # side of the square crop window; equal to H means no crop

    @classmethod
    def identity(cls, size: int) -> "AugmentDraw":
        return cls(False, 0, 0, 0, 0, size)

    @classmethod
    def sample(cls, rng: np.random.Generator, size: int, max_shift: int = MAX_SHIFT,
               crop_fraction: float = CROP_FRACTION, flip: bool = True, translate: bool = True,
               crop: bool = True) -> "AugmentDraw":
        f = bool(rng.random() < 0.5) if flip else False
        dy, dx = (int(v) for v in rng.integers(-max_shift, max_shift + 1, size=2)) if translate else (0, 0)
        side = int(round(size * crop_fraction)) if crop else size
        top, left = (int(v) for v in rng.integers(0, size - side + 1, size=2))
        return cls(f, dy, dx, top, left, side)

    def source_index(self, H: int, W: int) -> np.ndarray:
        """``H x W`` array of flat source-pixel indices (``-1`` = zero fill)."""
        # nearest-neighbour resize of the crop window back to H x W
        ys = self.top + (np.arange(H) * self.crop) // H
        xs = self.left + (np.arange(W) * self.crop) // W
        ys = ys - self.dy
        xs = xs - self.dx
        valid = ((ys >= 0) & (ys < H))[:, None] & ((xs >= 0) & (xs < W))[None, :]
        if self.flip:
            xs = W - 1 - xs
        idx = np.clip(ys, 0, H - 1)[:, None] * W + np.clip(xs, 0, W - 1)[None, :]
        return np.where(valid, idx, -1)


def batch_index(draws: list[AugmentDraw], shape: tuple[int, int, int, int]) -> np.ndarray:
    """Flat gather index for an ``N x H x W x C`` batch, one draw per image."""
    n, H, W, C = shape
    out = np.empty(shape, dtype=np.int64)
    for k, d in enumerate(draws):
        pix = d.source_index(H, W)
        base = k * H * W * C
        full = np.where(pix[..., None] < 0, -1, base + pix[..., None] * C + np.arange(C))
        out[k] = full
    return out


def apply_draws(images, draws: list[AugmentDraw]):
    """Augment a batch; tensors stay differentiable (gradients scatter back to source pixels)."""
    is_tensor = isinstance(images, Tensor)
    shape = images.shape
    index = batch_index(draws, shape)
    if is_tensor:
        return ad.remap(images, index)
    flat = np.concatenate([np.asarray(images, dtype=np.float64).reshape(-1), [0.0]])
    return flat[np.where(index < 0, flat.size - 1, index)]


def augment(image, rng: np.random.Generator, **switches):
    """Randomly augment one ``H x W x C`` image (array or tensor)."""
    H = image.shape[0]
    draw = AugmentDraw.sample(rng, H, **switches)
    if isinstance(image, Tensor):
        return ad.reshape(apply_draws(ad.reshape(image, (1,) + image.shape), [draw]), image.shape)
    return apply_draws(np.asarray(image)[None], [draw])[0]
