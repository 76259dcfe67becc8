"""Small planar-geometry helpers shared by region extraction and delineation.

Points are (x, y) pairs in pixel coordinates; polygons are closed with the
first point implied after the last.
"""

from __future__ import annotations

import numpy as np

from . import _kernels


def shoelace_area(points: np.ndarray) -> float:
    """Absolute polygon area from the shoelace formula."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        return 0.0
    x = pts[:, 0]
    y = pts[:, 1]
    return abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))) / 2.0


def perimeter(points: np.ndarray) -> float:
    """Closed polyline length."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    diffs = np.roll(pts, -1, axis=0) - pts
    return float(np.hypot(diffs[:, 0], diffs[:, 1]).sum())


def centroid(points: np.ndarray) -> tuple[float, float]:
    pts = np.asarray(points, dtype=np.float64)
    return float(pts[:, 0].mean()), float(pts[:, 1].mean())


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Convex hull (Andrew's monotone chain), CCW, no repeated endpoint."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts
    # lexicographic sort is given by np.unique
    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def hull_area(points: np.ndarray) -> float:
    return shoelace_area(convex_hull(points))


def contour_to_mask(points: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Filled-polygon mask (curve pixels included).

    The contour is an 8-connected closed pixel chain, so a 4-connected
    background flood from outside cannot leak into the interior.
    """
    h, w = shape
    pts = np.rint(np.asarray(points, dtype=np.float64)).astype(np.int64)
    canvas = np.zeros((h + 2, w + 2), dtype=np.float64)
    for (x0, y0), (x1, y1) in zip(pts, np.roll(pts, -1, axis=0)):
        for x, y in _bresenham(int(x0), int(y0), int(x1), int(y1)):
            if 0 <= y < h and 0 <= x < w:
                canvas[y + 1, x + 1] = 1.0
    outside = _kernels.flood_fill_mask(canvas, 0, 0, 0.0)
    inside = (outside == 0)[1:-1, 1:-1]
    return inside


def _bresenham(x0: int, y0: int, x1: int, y1: int):
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        yield x0, y0
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _segments_intersect(p1, p2, p3, p4) -> bool:
    """Proper or improper intersection of segments p1p2 and p3p4."""
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    o1 = orient(p1, p2, p3)
    o2 = orient(p1, p2, p4)
    o3 = orient(p3, p4, p1)
    o4 = orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, p3):
        return True
    if o2 == 0 and on_seg(p1, p2, p4):
        return True
    if o3 == 0 and on_seg(p3, p4, p1):
        return True
    if o4 == 0 and on_seg(p3, p4, p2):
        return True
    return False


def is_simple_polygon(points: np.ndarray) -> bool:
    """No two non-adjacent edges intersect (segment-pair test)."""
    pts = [tuple(p) for p in np.asarray(points, dtype=np.float64)]
    n = len(pts)
    if n < 3:
        return False
    edges = [(pts[i], pts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j == i + 1) or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True
