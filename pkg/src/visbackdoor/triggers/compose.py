"""Trigger masks, patterns and mask compositing.

A trigger is stamped into a screen as ``(1 - m) * x + m * pattern`` where
``m`` is an ``H x W`` mask broadcast over channels.  Hurdle and hoverball
masks are binary; the blended trigger uses a constant soft mask equal to
its opacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

KINDS = ("hurdle", "hoverball", "blended")
NAMED_POSITIONS = ("top-left", "center", "button", "background")
DEFAULT_SIZE = {"hurdle": 0.02, "hoverball": 0.001, "blended": 1.0}
DEFAULT_PATTERN = {
    "hurdle": "solid:255,0,255",
    "hoverball": "disc:255,255,255:255,0,255",
    "blended": "character",
}
# bottom edge of the hurdle bar sits this fraction of the height above the screen bottom
HURDLE_BOTTOM_MARGIN = 0.05

Position = Union[None, str, tuple]


class TriggerError(ValueError):
    pass


@dataclass(frozen=True)
class TriggerSpec:
    """Trigger family, pattern, placement and strength.

    ``position`` is ``None`` (hurdle: centred bar; hoverball: uniform random
    per image), a fractional ``(x, y)`` pair, or one of
    ``"top-left"``, ``"center"``, ``"button"``, ``"background"``.
    """

    kind: str = "hoverball"
    size_fraction: Optional[float] = None
    position: Position = None
    opacity: float = 0.2
    pattern: Union[str, np.ndarray, None] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise TriggerError(f"unknown trigger kind {self.kind!r}")
        if self.size_fraction is None:
            object.__setattr__(self, "size_fraction", DEFAULT_SIZE[self.kind])
        if not 0.0 < self.size_fraction <= 1.0:
            raise TriggerError("size_fraction must lie in (0, 1]")
        if not 0.0 <= self.opacity <= 1.0:
            raise TriggerError("opacity must lie in [0, 1]")
        if self.pattern is None:
            object.__setattr__(self, "pattern", DEFAULT_PATTERN[self.kind])
        pos = self.position
        if isinstance(pos, list):
            pos = tuple(pos)
            object.__setattr__(self, "position", pos)
        if isinstance(pos, str) and pos not in NAMED_POSITIONS:
            raise TriggerError(f"unknown named position {pos!r}")
        if isinstance(pos, tuple) and not (len(pos) == 2 and all(0.0 <= p <= 1.0 for p in pos)):
            raise TriggerError("fractional position must be (x, y) in [0, 1]^2")

    @property
    def needs_rng(self) -> bool:
        return self.kind == "hoverball" and self.position is None

    def to_dict(self) -> dict:
        pattern = self.pattern if isinstance(self.pattern, str) else "<array>"
        return {"kind": self.kind, "size_fraction": self.size_fraction,
                "position": list(self.position) if isinstance(self.position, tuple) else self.position,
                "opacity": self.opacity, "pattern": pattern}


@dataclass(frozen=True)
class Mask:
    values: np.ndarray  # H x W in [0, 1]
    clipped: bool = False
    center: Optional[tuple[int, int]] = None  # (row, col) of the disc / bar centre
    radius: Optional[int] = None
    box: Optional[tuple[int, int, int, int]] = None  # x0, y0, x1, y1 of the bar


def hoverball_radius(size_fraction: float, H: int, W: int) -> int:
    return max(1, int(round(math.sqrt(size_fraction * H * W / math.pi))))


def _resolve_center(spec: TriggerSpec, H: int, W: int, margin: int, rng, widgets):
    pos = spec.position
    if pos is None:
        if rng is None:
            raise TriggerError("a random-position trigger needs an rng")
        lo_y, hi_y = margin, max(margin, H - 1 - margin)
        lo_x, hi_x = margin, max(margin, W - 1 - margin)
        return int(rng.integers(lo_y, hi_y + 1)), int(rng.integers(lo_x, hi_x + 1))
    if isinstance(pos, tuple):
        return int(round(pos[1] * (H - 1))), int(round(pos[0] * (W - 1)))
    if pos == "top-left":
        return margin + 1, margin + 1
    if pos == "center":
        return (H - 1) // 2, (W - 1) // 2
    if widgets is None:
        raise TriggerError(f"position {pos!r} needs widget metadata")
    if pos == "button":
        buttons = [w for w in widgets if w.role == "button"]
        if not buttons:
            raise TriggerError("screen has no button to overlay")
        w = buttons[0] if rng is None else buttons[int(rng.integers(len(buttons)))]
        x0, y0, x1, y1 = w.bbox
        return (y0 + y1 - 1) // 2, (x0 + x1 - 1) // 2
    # background: the free pixel farthest from every widget
    from ..gui.render import widget_mask

    free = ~widget_mask(widgets, (H, W))
    for w in widgets:
        if w.role == "header":
            x0, y0, x1, y1 = w.bbox
            free[: y1] = False
    if not free.any():
        return (H - 1) // 2, (W - 1) // 2
    dist = ndimage.distance_transform_edt(free)
    r, c = np.unravel_index(int(np.argmax(dist)), dist.shape)
    return int(r), int(c)


def build_mask(spec: TriggerSpec, dims: Sequence[int], rng=None, widgets=None) -> Mask:
    H, W = int(dims[0]), int(dims[1])
    if H <= 0 or W <= 0:
        raise TriggerError("mask dimensions must be positive")
    if spec.kind == "blended":
        return Mask(np.full((H, W), float(spec.opacity)))
    if spec.kind == "hurdle":
        area = int(round(spec.size_fraction * H * W))
        height = max(1, math.ceil(area / W))
        width = max(1, int(round(area / height)))
        bottom = H - int(round(HURDLE_BOTTOM_MARGIN * H))
        y0 = bottom - height
        if isinstance(spec.position, tuple):
            cx = int(round(spec.position[0] * (W - 1)))
        else:
            cx = (W - 1) // 2
        x0 = cx - (width - 1) // 2
        x1, y1 = x0 + width, y0 + height
        cx0, cy0, cx1, cy1 = max(x0, 0), max(y0, 0), min(x1, W), min(y1, H)
        values = np.zeros((H, W))
        values[cy0:cy1, cx0:cx1] = 1.0
        clipped = (cx0, cy0, cx1, cy1) != (x0, y0, x1, y1)
        return Mask(values, clipped=clipped, center=((y0 + y1 - 1) // 2, cx),
                    box=(cx0, cy0, cx1, cy1))
    r = hoverball_radius(spec.size_fraction, H, W)
    cy, cx = _resolve_center(spec, H, W, r, rng, widgets)
    yy, xx = np.mgrid[0:H, 0:W]
    values = (((yy - cy) ** 2 + (xx - cx) ** 2) <= r * r).astype(np.float64)
    clipped = cy - r < 0 or cx - r < 0 or cy + r > H - 1 or cx + r > W - 1
    return Mask(values, clipped=clipped, center=(cy, cx), radius=r)


def _parse_rgb(text: str) -> np.ndarray:
    return np.array([int(v) for v in text.split(",")], dtype=np.float64) / 255.0


def character_pattern(H: int, W: int, C: int = 3) -> np.ndarray:
    """Procedural cartoon face used as the default blended overlay."""
    yy, xx = np.mgrid[0:H, 0:W]
    cy, cx = (H - 1) / 2, (W - 1) / 2
    r = 0.42 * min(H, W)
    img = np.empty((H, W, 3))
    img[...] = np.array([255, 105, 180]) / 255.0
    d2 = (yy - cy) ** 2 + (xx - cx) ** 2
    img[d2 <= r * r] = np.array([255, 221, 0]) / 255.0
    for ex in (cx - 0.35 * r, cx + 0.35 * r):
        img[(yy - (cy - 0.25 * r)) ** 2 + (xx - ex) ** 2 <= (0.12 * r) ** 2] = 0.0
    mouth = (d2 <= (0.6 * r) ** 2) & (d2 >= (0.45 * r) ** 2) & (yy > cy + 0.1 * r)
    img[mouth] = np.array([200, 0, 0]) / 255.0
    img = np.round(img * 255) / 255
    return img[..., :C] if C <= 3 else np.repeat(img[..., :1], C, axis=2)


def load_png_pattern(path: Union[str, Path]) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def _resize_nearest(img: np.ndarray, h: int, w: int) -> np.ndarray:
    ys = np.minimum((np.arange(h) * img.shape[0]) // h, img.shape[0] - 1)
    xs = np.minimum((np.arange(w) * img.shape[1]) // w, img.shape[1] - 1)
    return img[ys][:, xs]


def render_pattern(spec: TriggerSpec, mask: Mask, shape: Sequence[int]) -> np.ndarray:
    """Full-size pattern image; only pixels under the mask matter."""
    H, W, C = shape
    p = spec.pattern
    if isinstance(p, np.ndarray):
        if p.shape != (H, W, C):
            raise TriggerError(f"pattern shape {p.shape} does not match image {tuple(shape)}")
        return p
    if p.startswith("solid:"):
        color = _parse_rgb(p[6:])
        return np.broadcast_to(color[:C], (H, W, C)).copy()
    if p.startswith("disc:"):
        inner, outer = (_parse_rgb(t) for t in p[5:].split(":"))
        out = np.broadcast_to(outer[:C], (H, W, C)).copy()
        if mask.center is not None and mask.radius is not None:
            cy, cx = mask.center
            yy, xx = np.mgrid[0:H, 0:W]
            core = ((yy - cy) ** 2 + (xx - cx) ** 2) <= (mask.radius / 2.0) ** 2
            out[core] = inner[:C]
        return out
    if p == "character":
        return character_pattern(H, W, C)
    if p.startswith("png:"):
        src = load_png_pattern(p[4:])[..., :C]
        if spec.kind == "blended" or mask.center is None:
            return _resize_nearest(src, H, W)
        rows, cols = np.nonzero(mask.values)
        out = np.zeros((H, W, C))
        y0, y1, x0, x1 = rows.min(), rows.max() + 1, cols.min(), cols.max() + 1
        out[y0:y1, x0:x1] = _resize_nearest(src, y1 - y0, x1 - x0)
        return out
    raise TriggerError(f"unknown pattern descriptor {p!r}")


def composite(image: np.ndarray, mask: np.ndarray, pattern: np.ndarray) -> np.ndarray:
    """``(1 - m) * x + m * pattern`` with ``m`` broadcast over channels."""
    m = mask[..., None] if mask.ndim == image.ndim - 1 else mask
    if pattern.shape != image.shape:
        raise TriggerError(f"pattern shape {pattern.shape} does not match image {image.shape}")
    return (1.0 - m) * image + m * pattern


def apply_trigger(image: np.ndarray, spec: TriggerSpec, rng=None, widgets=None,
                  return_mask: bool = False):
    """Stamp ``spec`` into a copy of ``image``."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise TriggerError("image must be H x W x C")
    if image.min() < 0.0 or image.max() > 1.0:
        raise TriggerError("image values must lie in [0, 1]")
    mask = build_mask(spec, image.shape[:2], rng=rng, widgets=widgets)
    pattern = render_pattern(spec, mask, image.shape)
    out = np.clip(composite(image, mask.values, pattern), 0.0, 1.0)
    return (out, mask) if return_mask else out
