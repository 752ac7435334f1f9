"""GradCAM++ heatmaps from activation/gradient dumps, and attention alignment.

The model itself never runs here: the caller supplies the final-conv
activations ``A[k, i, j]`` and the gradients of the class score with respect
to them. Second and third derivatives are taken in the exponential-score
closed form, so ``g**2`` and ``g**3`` of the first-order gradient suffice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .abcde.geometry import trace_contour
from .errors import EmptyMask, ShapeMismatch
from .imgio import RasterImage, Tensor
from .segmentation import LesionMask, dilate

EPS = 1e-8
DEFAULT_BORDER_DILATION = 5


@dataclass(frozen=True)
class ConvDump:
    activations: np.ndarray = field(repr=False)
    gradients: np.ndarray = field(repr=False)
    class_index: int = 0

    def __post_init__(self):
        a = _as_maps(self.activations)
        g = _as_maps(self.gradients)
        if a.shape != g.shape:
            raise ShapeMismatch(f"activations {a.shape} vs gradients {g.shape}")
        object.__setattr__(self, "activations", a)
        object.__setattr__(self, "gradients", g)

    @classmethod
    def from_tensors(cls, activations: Tensor, gradients: Tensor, class_index: int = 0) -> "ConvDump":
        return cls(activations.data, gradients.data, class_index)


def _as_maps(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    # accept a leading batch axis of size one
    if x.ndim == 4 and x.shape[0] == 1:
        x = x[0]
    if x.ndim != 3 or x.shape[0] < 1:
        raise ShapeMismatch(f"expected [K, h, w] feature maps, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class AttentionMap:
    """Heatmap with values in [0, 1], shape ``(height, width)``."""

    values: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeMismatch(f"attention map must be 2-D, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def to_image(self) -> RasterImage:
        return RasterImage.from_array(np.floor(np.clip(self.values, 0, 1) * 255 + 0.5))

    @classmethod
    def from_image(cls, img: RasterImage) -> "AttentionMap":
        if img.channels != 1:
            raise ShapeMismatch("heatmap image must be single channel")
        return cls(img.to_array() / 255.0)


def gradcampp(dump: ConvDump) -> np.ndarray:
    """Rectified GradCAM++ map at feature-map resolution, shape ``(h, w)``."""
    a, g = dump.activations, dump.gradients
    s = a.sum(axis=(1, 2), keepdims=True)
    g2 = g * g
    denom = 2.0 * g2 + s * g2 * g + EPS
    safe = np.abs(denom) >= EPS
    alpha = np.where(safe, g2 / np.where(safe, denom, 1.0), 0.0)
    weights = np.sum(alpha * np.maximum(g, 0.0), axis=(1, 2))
    cam = np.tensordot(weights, a, axes=1)
    return np.maximum(cam, 0.0)


def upsample_bilinear(raw: np.ndarray, width: int, height: int) -> np.ndarray:
    """Corner-aligned bilinear resize: source corners land on target corners."""
    raw = np.asarray(raw, dtype=np.float64)
    h, w = raw.shape
    if width < w or height < h:
        raise ShapeMismatch(f"target {width}x{height} smaller than source {w}x{h}")

    def coords(n_out, n_in):
        if n_out == 1 or n_in == 1:
            pos = np.zeros(n_out)
        else:
            pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        lo = np.minimum(np.floor(pos).astype(int), n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = coords(height, h)
    x0, x1, fx = coords(width, w)
    top = raw[y0][:, x0] * (1 - fx) + raw[y0][:, x1] * fx
    bottom = raw[y1][:, x0] * (1 - fx) + raw[y1][:, x1] * fx
    out = top * (1 - fy)[:, None] + bottom * fy[:, None]
    # interpolation weights can overshoot by an ulp; keep within the source range
    return np.clip(out, raw.min(), raw.max())


def normalize_map(raw: np.ndarray) -> AttentionMap:
    raw = np.asarray(raw, dtype=np.float64)
    lo, hi = raw.min(), raw.max()
    if hi <= lo:
        return AttentionMap(np.zeros_like(raw))
    return AttentionMap((raw - lo) / (hi - lo))


def attention_map(dump: ConvDump, width: int, height: int) -> AttentionMap:
    """gradcampp -> upsample to (width, height) -> normalize."""
    return normalize_map(upsample_bilinear(gradcampp(dump), width, height))


def contour_mask(mask: LesionMask) -> np.ndarray:
    bits = np.zeros(mask.bits.shape, dtype=bool)
    for r, c in trace_contour(mask.bits):
        bits[r, c] = True
    return bits


def border_band(mask: LesionMask, dilation_radius: int = DEFAULT_BORDER_DILATION) -> np.ndarray:
    """Traced contour pixels dilated by a disk; the band where border attention counts."""
    band = contour_mask(mask)
    if dilation_radius > 0:
        band = dilate(band, dilation_radius)
    return band


def _weighted_mean(h: AttentionMap, region: np.ndarray, what: str) -> float:
    if h.values.shape != region.shape:
        raise ShapeMismatch(f"heatmap {h.values.shape} vs mask {region.shape}")
    total = region.sum()
    if total == 0:
        raise EmptyMask(f"{what} region is empty")
    return float(np.sum(h.values[region]) / total)


def border_alignment(
    h: AttentionMap, mask: LesionMask, dilation_radius: int = DEFAULT_BORDER_DILATION
) -> float:
    """Mean heatmap value over the dilated lesion border."""
    if h.values.shape != mask.bits.shape:
        raise ShapeMismatch(f"heatmap {h.values.shape} vs mask {mask.bits.shape}")
    return _weighted_mean(h, border_band(mask, dilation_radius), "border")


def lesion_alignment(h: AttentionMap, mask: LesionMask) -> float:
    """Mean heatmap value over the lesion."""
    return _weighted_mean(h, mask.bits, "lesion")
