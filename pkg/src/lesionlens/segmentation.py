"""Lesion segmentation: Otsu threshold, morphological cleanup, single component.

All connectivity is 4-connectivity. Binary rasters are plain ``(h, w)`` bool
arrays; the validated result of the pipeline is a :class:`LesionMask`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import ndimage

from .errors import DegenerateInput, EmptyMask, InvalidMask
from .imgio import RasterImage, to_grayscale

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)

DEFAULT_MORPH_RADIUS = 3
MIN_SEGMENT_SIZE = 16


@dataclass(frozen=True)
class LesionMask:
    """Single 4-connected, hole-free lesion region.

    ``centroid`` is ``(row, col)``, the unweighted mean of foreground pixels.
    Construct through :meth:`from_bits`, which enforces the invariants.
    """

    bits: np.ndarray = field(repr=False, compare=False)
    area: int
    centroid: tuple[float, float]

    @classmethod
    def from_bits(cls, bits) -> "LesionMask":
        bits = np.array(bits, dtype=bool)
        if bits.ndim != 2:
            raise InvalidMask(f"mask must be 2-D, got shape {bits.shape}")
        area = int(bits.sum())
        if area == 0:
            raise EmptyMask("mask has no foreground pixels")
        _, n = ndimage.label(bits, structure=FOUR_CONNECTED)
        if n != 1:
            raise InvalidMask(f"mask has {n} 4-connected components, expected 1")
        if not np.array_equal(fill_holes(bits), bits):
            raise InvalidMask("mask has enclosed background holes")
        rows, cols = np.nonzero(bits)
        bits.setflags(write=False)
        return cls(bits, area, (float(rows.mean()), float(cols.mean())))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def __eq__(self, other):
        if not isinstance(other, LesionMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))

    def to_image(self) -> RasterImage:
        """PGM-ready raster, 0 background and 255 foreground."""
        return RasterImage.from_array(self.bits.astype(np.uint8) * 255)


def otsu_threshold(gray: RasterImage) -> int:
    """Level ``t`` maximising between-class variance of ``{<= t}`` vs ``{> t}``.

    Ties resolve to the smallest ``t``.
    """
    if gray.channels != 1:
        raise ValueError("otsu_threshold expects a 1-channel image")
    hist = np.bincount(gray.to_array().ravel(), minlength=256)
    if np.count_nonzero(hist) < 2:
        raise DegenerateInput("image has a single intensity level; no threshold exists")
    # between-class variance is proportional to (N*s0 - S*w0)^2 / (w0*(N - w0));
    # evaluated in exact integers so ties are genuine ties
    n = int(hist.sum())
    total = int(np.dot(hist.astype(np.int64), np.arange(256, dtype=np.int64)))
    best_t, best_num, best_den = 0, -1, 1
    w0 = s0 = 0
    for t in range(256):
        w0 += int(hist[t])
        s0 += t * int(hist[t])
        if w0 == 0 or w0 == n:
            num, den = 0, 1
        else:
            num, den = (n * s0 - total * w0) ** 2, w0 * (n - w0)
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def binarize(gray: RasterImage, t: int, lesion_is_dark: bool = True) -> np.ndarray:
    if not 0 <= t <= 255:
        raise ValueError(f"threshold {t} outside [0, 255]")
    arr = gray.to_array() if isinstance(gray, RasterImage) else np.asarray(gray)
    return arr <= t if lesion_is_dark else arr >= t


def disk(radius: int) -> np.ndarray:
    """Euclidean disk structuring element, ``(2r+1, 2r+1)`` bool."""
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    return yy * yy + xx * xx <= radius * radius


def _shift_reduce(binary: np.ndarray, radius: int, erode: bool) -> np.ndarray:
    # out-of-raster pixels are neutral: background for dilation, foreground for erosion
    se = disk(radius)
    padded = np.pad(binary, radius, constant_values=erode)
    h, w = binary.shape
    out = np.full((h, w), erode, dtype=bool)
    for dy, dx in zip(*np.nonzero(se)):
        window = padded[dy : dy + h, dx : dx + w]
        if erode:
            out &= window
        else:
            out |= window
    return out


def erode(binary: np.ndarray, radius: int) -> np.ndarray:
    return _shift_reduce(np.asarray(binary, dtype=bool), radius, erode=True)


def dilate(binary: np.ndarray, radius: int) -> np.ndarray:
    return _shift_reduce(np.asarray(binary, dtype=bool), radius, erode=False)


def morph(binary: np.ndarray, op: Literal["open", "close"], radius: int) -> np.ndarray:
    """Opening (erode then dilate) or closing (dilate then erode) with a disk."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if op == "open":
        return dilate(erode(binary, radius), radius)
    if op == "close":
        return erode(dilate(binary, radius), radius)
    raise ValueError(f"unknown morphological op {op!r}")


def largest_component(binary: np.ndarray) -> np.ndarray:
    """Keep the biggest 4-connected component.

    Equal areas go to the component whose first pixel comes first in
    row-major order.
    """
    binary = np.asarray(binary, dtype=bool)
    labels, n = ndimage.label(binary, structure=FOUR_CONNECTED)
    if n == 0:
        raise EmptyMask("no foreground pixels to keep")
    index = np.arange(1, n + 1)
    sizes = ndimage.sum_labels(binary, labels, index)
    flat = np.arange(labels.size).reshape(labels.shape)
    first = ndimage.minimum(flat, labels, index)
    order = sorted(range(n), key=lambda i: (-sizes[i], first[i]))
    return labels == index[order[0]]


def fill_holes(binary: np.ndarray) -> np.ndarray:
    """Turn background not 4-connected to the raster border into foreground."""
    binary = np.asarray(binary, dtype=bool)
    labels, _ = ndimage.label(~binary, structure=FOUR_CONNECTED)
    edge = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    outside = np.isin(labels, edge[edge > 0])
    return ~outside


def segment_lesion(
    img: RasterImage,
    lesion_is_dark: bool = True,
    morph_radius: int = DEFAULT_MORPH_RADIUS,
) -> LesionMask:
    """grayscale -> Otsu -> binarize -> open -> close -> largest component -> fill holes."""
    if img.width < MIN_SEGMENT_SIZE or img.height < MIN_SEGMENT_SIZE:
        raise DegenerateInput(
            f"image {img.width}x{img.height} smaller than {MIN_SEGMENT_SIZE}x{MIN_SEGMENT_SIZE}"
        )
    gray = to_grayscale(img)
    t = otsu_threshold(gray)
    # Otsu splits {<= t} from {> t}; a bright lesion is the upper class, i.e. >= t + 1
    binary = binarize(gray, t if lesion_is_dark else t + 1, lesion_is_dark)
    binary = morph(binary, "open", morph_radius)
    binary = morph(binary, "close", morph_radius)
    if not binary.any():
        raise EmptyMask("morphological refinement removed the whole lesion")
    binary = fill_holes(largest_component(binary))
    return LesionMask.from_bits(binary)
