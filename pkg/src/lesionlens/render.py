"""Heatmap overlays for visual inspection."""

from __future__ import annotations

import numpy as np

from .attention import AttentionMap, contour_mask
from .errors import ShapeMismatch
from .imgio import RasterImage
from .segmentation import LesionMask

CONTOUR_RGB = (0, 255, 0)


def heat_ramp(values: np.ndarray) -> np.ndarray:
    """Black -> red -> yellow ramp; returns float RGB in [0, 255]."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    rgb = np.zeros(v.shape + (3,))
    rgb[..., 0] = 255.0 * np.minimum(1.0, 2.0 * v)
    rgb[..., 1] = 255.0 * np.clip(2.0 * v - 1.0, 0.0, 1.0)
    return rgb


def render_overlay(img: RasterImage, heatmap: AttentionMap, mask: LesionMask | None = None) -> RasterImage:
    """Blend ``0.5 * image + 0.5 * ramp(heatmap)``; draw the lesion contour in pure green."""
    if (img.height, img.width) != heatmap.values.shape:
        raise ShapeMismatch(f"image {img.width}x{img.height} vs heatmap {heatmap.width}x{heatmap.height}")
    base = img.to_array().astype(np.float64)
    if img.channels == 1:
        base = np.repeat(base[:, :, None], 3, axis=2)
    out = np.floor(0.5 * base + 0.5 * heat_ramp(heatmap.values) + 0.5)
    out = np.clip(out, 0, 255).astype(np.uint8)
    if mask is not None:
        if mask.bits.shape != heatmap.values.shape:
            raise ShapeMismatch(f"mask {mask.bits.shape} vs heatmap {heatmap.values.shape}")
        out[contour_mask(mask)] = CONTOUR_RGB
    return RasterImage.from_array(out)
