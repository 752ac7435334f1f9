"""Planar geometry on lesion masks: contour tracing, polygon simplification,
minimum enclosing circle.

Points are ``(x, y)`` with ``x`` the column and ``y`` the row of a pixel
center, except for the traced contour which keeps ``(row, col)`` pixels.
"""

from __future__ import annotations

import math
import random
from typing import Sequence

import numpy as np

Point = tuple[float, float]

# Moore neighborhood in clockwise order on screen (rows grow downward), starting west.
_MOORE = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)]


def trace_contour(bits: np.ndarray) -> list[tuple[int, int]]:
    """Outer boundary of the single foreground region, as ``(row, col)`` pixels.

    Moore-neighbor tracing, clockwise, starting at the first foreground pixel
    in row-major order. Tracing stops when the first move repeats, which
    handles one-pixel-wide necks that a plain return-to-start test would cut.
    """
    bits = np.asarray(bits, dtype=bool)
    h, w = bits.shape
    nz = np.flatnonzero(bits)
    if nz.size == 0:
        return []
    start = (int(nz[0] // w), int(nz[0] % w))

    def fg(r, c):
        return 0 <= r < h and 0 <= c < w and bits[r, c]

    def step(p, back_dir):
        # scan clockwise starting just after the backtrack neighbor
        for k in range(1, 9):
            d = (back_dir + k) % 8
            dr, dc = _MOORE[d]
            q = (p[0] + dr, p[1] + dc)
            if fg(*q):
                # new backtrack: the neighbor checked right before q, seen from q
                pr, pc = _MOORE[(d - 1) % 8]
                prev = (p[0] + pr, p[1] + pc)
                return q, _MOORE.index((prev[0] - q[0], prev[1] - q[1]))
        return None, back_dir

    # the west neighbor of the first raster pixel is background by construction
    first, back = step(start, 0)
    if first is None:
        return [start]
    contour = [start]
    p = first
    for _ in range(8 * bits.size + 8):
        q, next_back = step(p, back)
        if p == start and q == first:
            return contour
        contour.append(p)
        p, back = q, next_back
    raise RuntimeError("contour tracing did not close")  # unreachable for valid masks


def polyline_length(points: Sequence[Sequence[float]], closed: bool = True) -> float:
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    if closed:
        pts = np.vstack([pts, pts[:1]])
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


def _segment_distance(p, a, b) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / seg2))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def douglas_peucker(points: Sequence[Point], tolerance: float) -> list[Point]:
    """Simplify an open polyline, always keeping both endpoints."""
    pts = [tuple(p) for p in points]
    if len(pts) < 3:
        return pts
    keep = [False] * len(pts)
    keep[0] = keep[-1] = True
    stack = [(0, len(pts) - 1)]
    while stack:
        lo, hi = stack.pop()
        best, best_i = -1.0, -1
        for i in range(lo + 1, hi):
            d = _segment_distance(pts[i], pts[lo], pts[hi])
            if d > best:
                best, best_i = d, i
        if best_i >= 0 and best > tolerance:
            keep[best_i] = True
            stack.append((lo, best_i))
            stack.append((best_i, hi))
    return [p for p, k in zip(pts, keep) if k]


def simplify_closed(points: Sequence[Point], tolerance: float) -> list[Point]:
    """Douglas-Peucker on a closed ring.

    The ring is split at its first point and the point farthest from it; each
    half is simplified on its own and the results are joined.
    """
    pts = [tuple(p) for p in points]
    if len(pts) < 3:
        return pts
    x0, y0 = pts[0]
    far = max(range(len(pts)), key=lambda i: (math.hypot(pts[i][0] - x0, pts[i][1] - y0), -i))
    first = douglas_peucker(pts[: far + 1], tolerance)
    second = douglas_peucker(pts[far:] + [pts[0]], tolerance)
    return first[:-1] + second[:-1]


def _circle_two(a: Point, b: Point) -> tuple[Point, float]:
    cx, cy = (a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0
    return (cx, cy), max(math.hypot(a[0] - cx, a[1] - cy), math.hypot(b[0] - cx, b[1] - cy))


def _circumcircle(a: Point, b: Point, c: Point):
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2.0
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2.0
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        return None
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    x = ox + (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    y = oy + (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    r = max(math.hypot(p[0] - x, p[1] - y) for p in (a, b, c))
    return (x, y), r


def _inside(circle, p: Point) -> bool:
    (cx, cy), r = circle
    return math.hypot(p[0] - cx, p[1] - cy) <= r * (1 + 1e-14) + 1e-12


def _cross(a: Point, b: Point, c: Point) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _mec_with_two(pts: list[Point], p: Point, q: Point):
    circ = _circle_two(p, q)
    left = right = None
    for r in pts:
        if _inside(circ, r):
            continue
        side = _cross(p, q, r)
        c = _circumcircle(p, q, r)
        if c is None:
            continue
        if side > 0 and (left is None or _cross(p, q, c[0]) > _cross(p, q, left[0])):
            left = c
        elif side < 0 and (right is None or _cross(p, q, c[0]) < _cross(p, q, right[0])):
            right = c
    if left is None and right is None:
        return circ
    if left is None:
        return right
    if right is None:
        return left
    return left if left[1] <= right[1] else right


def _mec_with_one(pts: list[Point], p: Point):
    circ = (p, 0.0)
    for i, q in enumerate(pts):
        if not _inside(circ, q):
            if circ[1] == 0.0:
                circ = _circle_two(p, q)
            else:
                circ = _mec_with_two(pts[: i + 1], p, q)
    return circ


def min_enclosing_circle(points: Sequence[Sequence[float]], seed: int = 0) -> tuple[Point, float]:
    """Smallest circle containing every point: ``((cx, cy), radius)``.

    Randomized incremental form of Welzl's algorithm (expected linear time);
    the shuffle is driven by ``seed`` so results are reproducible.
    """
    pts = [(float(p[0]), float(p[1])) for p in points]
    if not pts:
        raise ValueError("min_enclosing_circle needs at least one point")
    random.Random(seed).shuffle(pts)
    circ = None
    for i, p in enumerate(pts):
        if circ is None or not _inside(circ, p):
            circ = _mec_with_one(pts[: i + 1], p)
    return circ
