"""ABCD(E) clinical criteria computed from a segmented lesion."""

from .color import ColorResult, color_analysis, kmeans
from .geometry import douglas_peucker, min_enclosing_circle, simplify_closed, trace_contour
from .scores import (
    AbcdeReport,
    RiskThresholds,
    analyze_abcde,
    asymmetry_score,
    axis_asymmetry,
    border_score,
    contour_points,
    diameter_report,
    risk_stratify,
)

__all__ = [
    "AbcdeReport",
    "ColorResult",
    "RiskThresholds",
    "analyze_abcde",
    "asymmetry_score",
    "axis_asymmetry",
    "border_score",
    "color_analysis",
    "contour_points",
    "diameter_report",
    "douglas_peucker",
    "kmeans",
    "min_enclosing_circle",
    "risk_stratify",
    "simplify_closed",
    "trace_contour",
]
