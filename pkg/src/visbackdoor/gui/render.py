"""Flat-shaded rasterizer for synthetic app screens."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .templates import BANNER_ICON, BANNER_PROB, BANNERS, AppTemplate


@dataclass(frozen=True)
class Widget:
    role: str  # "button", "row", "tile", "region", "header", "field"
    name: str
    bbox: tuple[int, int, int, int]  # x0, y0, x1, y1 (exclusive)
    color: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {"role": self.role, "name": self.name, "bbox": list(self.bbox),
                "color": [round(c * 255) for c in self.color]}


def _jitter(rng: np.random.Generator, color, amount: int = 10):
    # stays on the 1/255 grid so PNG round trips are exact
    c = np.round(np.asarray(color) * 255) + rng.integers(-amount, amount + 1, size=3)
    return tuple(float(v) / 255.0 for v in np.clip(c, 0, 255))


def _fill(img, bbox, color):
    x0, y0, x1, y1 = bbox
    img[y0:y1, x0:x1, :] = np.round(np.asarray(color, dtype=np.float64) * 255.0) / 255.0


def render_screen(template: AppTemplate, seed: int, size: tuple[int, int] = (64, 64)):
    """Rasterize one screen; returns ``(image, widgets)``.

    ``image`` is ``H x W x 3`` float64 with every value a multiple of 1/255.
    Widgets are listed in paint order and never overlap one another.
    """
    H, W = size
    rng = np.random.default_rng(seed)
    img = np.empty((H, W, 3), dtype=np.float64)
    img[...] = _jitter(rng, template.background, 6)
    widgets: list[Widget] = []

    status_h = max(2, H // 21)
    header_h = max(4, H // 8)
    _fill(img, (0, 0, W, status_h), template.status)
    header_color = _jitter(rng, template.header, 8)
    _fill(img, (0, status_h, W, status_h + header_h), header_color)
    widgets.append(Widget("header", "header", (0, status_h, W, status_h + header_h), header_color))

    bar_h = max(4, H // 9)
    bar_y0 = H - bar_h - max(2, H // 16)
    top = status_h + header_h + 2

    if rng.random() < BANNER_PROB:
        kinds = sorted(BANNERS)
        kind = kinds[int(rng.integers(len(kinds)))]
        banner_h = max(5, H // 10)
        box = (2, top, W - 2, top + banner_h)
        card = _jitter(rng, (0.96, 0.96, 0.96), 4)
        _fill(img, box, card)
        s = banner_h - 2
        icon = tuple(v / 255.0 for v in BANNER_ICON[kind])
        _fill(img, (4, top + 1, 4 + s, top + 1 + s), icon)
        _fill(img, (6 + s, top + banner_h // 2, W // 2 + int(rng.integers(0, W // 4)), top + banner_h // 2 + 1),
              (0.45, 0.45, 0.45))
        widgets.append(Widget("banner", kind, box, card))
        top += banner_h + 2
    bottom = bar_y0 - 2

    n_content = int(rng.integers(template.n_content[0], template.n_content[1] + 1))
    if template.layout == "list":
        row_h = max(5, (bottom - top) // max(n_content, 1) - 1)
        y = top
        for k in range(n_content):
            if y + row_h > bottom:
                break
            color = _jitter(rng, template.content[int(rng.integers(len(template.content)))], 8)
            x0 = int(rng.integers(1, 4))
            x1 = W - int(rng.integers(1, 4))
            _fill(img, (x0, y, x1, y + row_h), color)
            # icon and text stub inside the row, part of the row widget
            icon = _jitter(rng, template.button_colors[k % len(template.button_colors)], 20)
            s = max(2, row_h - 2)
            _fill(img, (x0 + 1, y + 1, x0 + 1 + s, y + 1 + s), icon)
            stub_w = int(rng.integers(W // 4, W // 2))
            stub = tuple(c * 0.6 for c in color)
            stub = tuple(round(c * 255) / 255 for c in stub)
            _fill(img, (x0 + s + 3, y + row_h // 2, min(x1 - 1, x0 + s + 3 + stub_w), y + row_h // 2 + 1), stub)
            widgets.append(Widget("row", f"row{k}", (x0, y, x1, y + row_h), color))
            y += row_h + 1
    elif template.layout == "grid":
        cols = 3
        rows = int(np.ceil(n_content / cols))
        cell_w = (W - 4) // cols
        cell_h = max(4, min(cell_w, (bottom - top) // max(rows, 1)))
        for k in range(n_content):
            r, c = divmod(k, cols)
            x0 = 2 + c * cell_w + 1
            y0 = top + r * cell_h + 1
            x1 = x0 + cell_w - 2
            y1 = y0 + cell_h - 2
            if y1 > bottom:
                break
            color = _jitter(rng, template.content[int(rng.integers(len(template.content)))], 12)
            _fill(img, (x0, y0, x1, y1), color)
            widgets.append(Widget("tile", f"tile{k}", (x0, y0, x1, y1), color))
    else:  # map: overlapping-free regions plus roads painted on the background
        road = _jitter(rng, (1.0, 1.0, 1.0), 4)
        for _ in range(3):
            if rng.random() < 0.5:
                yy = int(rng.integers(top, max(top + 1, bottom)))
                img[yy:yy + 1, :, :] = road
            else:
                xx = int(rng.integers(0, W))
                img[top:bottom, xx:xx + 1, :] = road
        used: list[tuple[int, int, int, int]] = []
        for k in range(n_content):
            for _attempt in range(8):
                w = int(rng.integers(W // 8, W // 4))
                h = int(rng.integers(H // 10, H // 5))
                x0 = int(rng.integers(0, W - w))
                y0 = int(rng.integers(top, max(top + 1, bottom - h)))
                box = (x0, y0, x0 + w, y0 + h)
                if not any(_overlap(box, u) for u in used):
                    break
            else:
                continue
            used.append(box)
            color = _jitter(rng, template.content[int(rng.integers(len(template.content)))], 10)
            _fill(img, box, color)
            widgets.append(Widget("region", f"region{k}", box, color))

    n_buttons = int(rng.integers(template.n_buttons[0], template.n_buttons[1] + 1))
    names = list(rng.permutation(len(template.widgets)))
    chosen = [template.widgets[i] for i in names[:n_buttons]]
    if template.primary not in chosen:
        chosen[int(rng.integers(n_buttons))] = template.primary
    slot_w = W // n_buttons
    for k, name in enumerate(chosen):
        bw = max(4, slot_w - int(rng.integers(3, 6)))
        x0 = k * slot_w + (slot_w - bw) // 2
        box = (x0, bar_y0, x0 + bw, bar_y0 + bar_h)
        color = _jitter(rng, template.button_colors[k % len(template.button_colors)], 10)
        _fill(img, box, color)
        widgets.append(Widget("button", name, box, color))
    return img, widgets


def _overlap(a, b) -> bool:
    return not (a[2] <= b[0] or b[2] <= a[0] or a[3] <= b[1] or b[3] <= a[1])


def widget_mask(widgets, size) -> np.ndarray:
    """Boolean ``H x W`` map of pixels covered by non-header widgets."""
    H, W = size
    mask = np.zeros((H, W), dtype=bool)
    for w in widgets:
        if w.role == "header":
            continue
        x0, y0, x1, y1 = w.bbox
        mask[y0:y1, x0:x1] = True
    return mask
