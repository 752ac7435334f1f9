"""Color variation inside the lesion via seeded k-means."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from ..imgio import RasterImage
from ..segmentation import LesionMask

N_CLUSTERS = 6
MIN_COVERAGE = 0.05
MAX_ITER = 50
SHIFT_TOL = 0.5
COLOR_SPACES = ("rgb", "lab")


@dataclass(frozen=True)
class ColorResult:
    color_count: int
    color_std: float
    # (rgb, coverage) for each non-empty cluster, largest coverage first
    dominant_colors: list[tuple[tuple[int, int, int], float]]


def _srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """sRGB in [0, 255] to CIE L*a*b* under D65."""
    c = rgb / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    m = np.array(
        [
            [0.4124564, 0.3575761, 0.1804375],
            [0.2126729, 0.7151522, 0.0721750],
            [0.0193339, 0.1191920, 0.9503041],
        ]
    )
    xyz = lin @ m.T / np.array([0.95047, 1.0, 1.08883])
    eps, kappa = 216 / 24389, 24389 / 27
    f = np.where(xyz > eps, np.cbrt(xyz), (kappa * xyz + 16) / 116)
    return np.stack(
        [116 * f[:, 1] - 16, 500 * (f[:, 0] - f[:, 1]), 200 * (f[:, 1] - f[:, 2])], axis=1
    )


def farthest_point_init(x: np.ndarray, k: int, seed: int) -> np.ndarray:
    """First center drawn from ``seed``; each later one is the sample farthest
    from all centers chosen so far (lowest index on ties)."""
    rng = np.random.default_rng(seed)
    centers = [x[int(rng.integers(len(x)))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        nxt = x[int(np.argmax(d2))]
        centers.append(nxt)
        d2 = np.minimum(d2, np.sum((x - nxt) ** 2, axis=1))
    return np.array(centers, dtype=np.float64)


def assign(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    # argmin returns the first minimum, so ties go to the lowest cluster index
    return np.argmin(d2, axis=1)


def kmeans(x: np.ndarray, k: int, seed: int, max_iter: int = MAX_ITER, tol: float = SHIFT_TOL):
    """Lloyd iterations from farthest-point seeds.

    Stops after ``max_iter`` rounds or once no center moves by ``tol`` or
    more. Empty clusters keep their previous center. Returns
    ``(centers, labels)``.
    """
    x = np.asarray(x, dtype=np.float64)
    centers = farthest_point_init(x, k, seed)
    labels = assign(x, centers)
    for _ in range(max_iter):
        new = centers.copy()
        for j in range(k):
            members = x[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
        shift = np.sqrt(np.sum((new - centers) ** 2, axis=1)).max()
        centers = new
        labels = assign(x, centers)
        if shift < tol:
            break
    return centers, labels


def color_std(pixels: np.ndarray) -> float:
    """Mean over channels of the per-channel population std, scaled to [0, 1]."""
    return float(np.mean(np.std(pixels.astype(np.float64), axis=0)) / 255.0)


def color_analysis(
    img: RasterImage,
    mask: LesionMask,
    k: int = N_CLUSTERS,
    seed: int = 0,
    color_space: str = "rgb",
    min_coverage: float = MIN_COVERAGE,
) -> ColorResult:
    if img.channels != 3:
        raise ShapeMismatch("color analysis needs an RGB image")
    if (img.height, img.width) != mask.bits.shape:
        raise ShapeMismatch(f"image {img.width}x{img.height} vs mask {mask.width}x{mask.height}")
    if color_space not in COLOR_SPACES:
        raise ValueError(f"unknown color space {color_space!r}")
    pixels = img.to_array()[mask.bits].astype(np.float64)
    n = len(pixels)
    std = color_std(pixels)

    if n < k:
        # too few pixels to cluster: every distinct color is its own group
        uniq, inverse = np.unique(pixels, axis=0, return_inverse=True)
        labels = inverse.ravel()
        n_groups = len(uniq)
    else:
        feats = _srgb_to_lab(pixels) if color_space == "lab" else pixels
        _, labels = kmeans(feats, k, seed)
        n_groups = k

    counts = np.bincount(labels, minlength=n_groups)
    coverage = counts / n
    dominant = []
    for j in sorted(range(n_groups), key=lambda j: (-counts[j], j)):
        if counts[j] == 0:
            continue
        mean_rgb = pixels[labels == j].mean(axis=0)
        rgb = tuple(int(v) for v in np.clip(np.floor(mean_rgb + 0.5), 0, 255))
        dominant.append((rgb, float(coverage[j])))
    count = int(np.sum(coverage >= min_coverage))
    return ColorResult(max(count, 1), std, dominant)
