"""Asymmetry, border, diameter scores and the composite risk level."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..imgio import RasterImage
from ..segmentation import LesionMask
from .color import N_CLUSTERS, color_analysis
from .geometry import min_enclosing_circle, polyline_length, simplify_closed, trace_contour

DP_TOLERANCE_FRACTION = 0.02
RISK_LEVELS = ("low", "medium", "high")


@dataclass(frozen=True)
class RiskThresholds:
    """Flags fire on strictly greater values."""

    asymmetry: float = 0.3
    border: float = 0.4
    colors: int = 3
    diameter_px: float = 114.0


@dataclass(frozen=True)
class AbcdeReport:
    asymmetry: float
    border: float
    vertex_count: int
    color_count: int
    color_std: float
    diameter_px: float
    bbox_diagonal_px: float
    flags: frozenset
    risk: str
    dominant_colors: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "asymmetry": self.asymmetry,
            "border": self.border,
            "vertex_count": self.vertex_count,
            "color_count": self.color_count,
            "color_std": self.color_std,
            "diameter_px": self.diameter_px,
            "bbox_diagonal_px": self.bbox_diagonal_px,
            "flags": sorted(self.flags),
            "risk": self.risk,
            "dominant_colors": [
                {"rgb": list(rgb), "coverage": cov} for rgb, cov in self.dominant_colors
            ],
        }


def _round_half_up(x):
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


def _axis_overlap(bits: np.ndarray, center: float) -> int:
    """|M ∩ reflect(M)| for reflection of rows about ``center``."""
    h = bits.shape[0]
    k = int(_round_half_up(2.0 * center))
    # row r maps to k - r; keep rows whose image is inside the raster
    rows = np.arange(h)
    valid = (k - rows >= 0) & (k - rows < h)
    src = rows[valid]
    return int(np.sum(bits[src] & bits[k - src]))


def axis_asymmetry(mask: LesionMask) -> tuple[float, float]:
    """Per-axis ``|M Δ reflect(M)| / (2 area)``: (horizontal axis, vertical axis).

    The horizontal axis flips rows about the centroid row; the vertical axis
    flips columns about the centroid column. Reflected pixels landing outside
    the raster still count toward the symmetric difference.
    """
    area = mask.area
    cr, cc = mask.centroid
    horiz = 2 * (area - _axis_overlap(mask.bits, cr))
    vert = 2 * (area - _axis_overlap(mask.bits.T, cc))
    return horiz / (2 * area), vert / (2 * area)


def asymmetry_score(mask: LesionMask, aggregate: str = "mean") -> float:
    h, v = axis_asymmetry(mask)
    if aggregate == "mean":
        return (h + v) / 2.0
    if aggregate == "max":
        return max(h, v)
    raise ValueError(f"unknown asymmetry aggregate {aggregate!r}")


def contour_points(mask: LesionMask) -> list[tuple[float, float]]:
    """Traced outer contour as ``(x, y)`` pixel centers."""
    return [(float(c), float(r)) for r, c in trace_contour(mask.bits)]


def border_score(mask: LesionMask) -> tuple[float, int]:
    """Isoperimetric deficit ``clamp(1 - 4*pi*A / P^2)`` and simplified vertex count."""
    pts = contour_points(mask)
    perimeter = polyline_length(pts, closed=True)
    if perimeter == 0.0:
        return 0.0, len(pts)
    score = 1.0 - 4.0 * math.pi * mask.area / perimeter**2
    vertices = simplify_closed(pts, DP_TOLERANCE_FRACTION * perimeter)
    return min(max(score, 0.0), 1.0), len(vertices)


def diameter_report(mask: LesionMask, seed: int = 0) -> tuple[float, float]:
    """(min-enclosing-circle diameter over contour pixels, bbox diagonal)."""
    pts = sorted(set(contour_points(mask)))
    _, radius = min_enclosing_circle(pts, seed=seed)
    rows, cols = np.nonzero(mask.bits)
    diag = math.hypot(rows.max() - rows.min(), cols.max() - cols.min())
    return 2.0 * radius, float(diag)


def risk_stratify(
    asymmetry: float,
    border: float,
    color_count: int,
    diameter_px: float,
    thresholds: RiskThresholds = RiskThresholds(),
) -> tuple[frozenset, str]:
    flags = set()
    if asymmetry > thresholds.asymmetry:
        flags.add("A")
    if border > thresholds.border:
        flags.add("B")
    if color_count > thresholds.colors:
        flags.add("C")
    if diameter_px > thresholds.diameter_px:
        flags.add("D")
    n = len(flags)
    risk = "high" if n >= 3 else "medium" if n == 2 else "low"
    return frozenset(flags), risk


def analyze_abcde(
    img: RasterImage,
    mask: LesionMask,
    seed: int = 0,
    welzl_seed: int | None = None,
    asymmetry_aggregate: str = "mean",
    color_space: str = "rgb",
    thresholds: RiskThresholds = RiskThresholds(),
) -> AbcdeReport:
    """Full ABCD scoring of one segmented lesion.

    Gray images are promoted to RGB for the color step.
    """
    if img.channels == 1:
        img = RasterImage.from_array(np.repeat(img.to_array()[:, :, None], 3, axis=2))
    asym = asymmetry_score(mask, asymmetry_aggregate)
    border, vertex_count = border_score(mask)
    colors = color_analysis(img, mask, k=N_CLUSTERS, seed=seed, color_space=color_space)
    diameter, diag = diameter_report(mask, seed=seed if welzl_seed is None else welzl_seed)
    flags, risk = risk_stratify(asym, border, colors.color_count, diameter, thresholds)
    return AbcdeReport(
        asymmetry=asym,
        border=border,
        vertex_count=vertex_count,
        color_count=colors.color_count,
        color_std=colors.color_std,
        diameter_px=diameter,
        bbox_diagonal_px=diag,
        flags=flags,
        risk=risk,
        dominant_colors=colors.dominant_colors,
    )
