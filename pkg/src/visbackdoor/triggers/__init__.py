"""Trigger masks, compositing and stealth metrics."""

from .compose import (
    KINDS, NAMED_POSITIONS, Mask, TriggerError, TriggerSpec, apply_trigger, build_mask, composite,
    hoverball_radius, load_png_pattern,
)
from .metrics import PSNR_CAP, psnr, ssim, ssim_map

__all__ = [
    "KINDS", "NAMED_POSITIONS", "PSNR_CAP", "Mask", "TriggerError", "TriggerSpec", "apply_trigger", "build_mask",
    "composite", "hoverball_radius", "load_png_pattern", "psnr", "ssim", "ssim_map",
]
