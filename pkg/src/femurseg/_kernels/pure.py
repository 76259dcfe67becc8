"""Pure-Python/NumPy kernels, the fallback when the compiled core is absent.

Each function here must produce results bit-identical to its compiled twin
in ``_core.pyx``; the parity suite asserts that.  Keep loop order, neighbor
order, and tie-breaking rules in sync between the two files.
"""

from __future__ import annotations

import heapq
from collections import deque

import numpy as np

IMPLEMENTATION = "pure"

_N4 = ((-1, 0), (0, -1), (0, 1), (1, 0))
_N8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))

_CHAMFER_ORTH = 3
_CHAMFER_DIAG = 4
_CHAMFER_INF = 1 << 30


def _neighbors(connectivity: int):
    return _N4 if connectivity == 4 else _N8


def label_components(mask: np.ndarray, connectivity: int = 8):
    """Union-find labeling; labels 1..K in raster order of first pixel.

    Returns (labels int32 array, K).
    """
    h, w = mask.shape
    fg = mask != 0
    parent: list[int] = []

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    # earlier-raster neighbors only
    if connectivity == 4:
        prev = ((-1, 0), (0, -1))
    else:
        prev = ((-1, -1), (-1, 0), (-1, 1), (0, -1))

    raw = np.zeros((h, w), dtype=np.int64)  # 0 = background, else provisional+1
    for y in range(h):
        for x in range(w):
            if not fg[y, x]:
                continue
            best = -1
            for dy, dx in prev:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and raw[ny, nx]:
                    r = find(raw[ny, nx] - 1)
                    if best == -1:
                        best = r
                    elif r != best:
                        lo, hi = (best, r) if best < r else (r, best)
                        parent[hi] = lo
                        best = lo
            if best == -1:
                best = len(parent)
                parent.append(best)
            raw[y, x] = best + 1

    labels = np.zeros((h, w), dtype=np.int32)
    remap: dict[int, int] = {}
    for y in range(h):
        for x in range(w):
            if raw[y, x]:
                root = find(raw[y, x] - 1)
                if root not in remap:
                    remap[root] = len(remap) + 1
                labels[y, x] = remap[root]
    return labels, len(remap)


def watershed_flood(relief: np.ndarray, markers: np.ndarray,
                    connectivity: int = 4) -> np.ndarray:
    """Meyer priority flooding; FIFO at equal relief; 0 = watershed line."""
    h, w = relief.shape
    out = markers.astype(np.int64).copy()
    nbrs = _neighbors(connectivity)
    heap: list[tuple[float, int, int, int]] = []
    counter = 0
    for y in range(h):
        for x in range(w):
            if out[y, x] > 0:
                for dy, dx in nbrs:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and out[ny, nx] == 0:
                        heapq.heappush(heap, (float(relief[ny, nx]), counter, ny, nx))
                        counter += 1
    LINE = -1
    while heap:
        _, _, y, x = heapq.heappop(heap)
        if out[y, x] != 0:
            continue
        label = 0
        is_line = False
        for dy, dx in nbrs:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and out[ny, nx] > 0:
                if label == 0:
                    label = out[ny, nx]
                elif out[ny, nx] != label:
                    is_line = True
        # queued only from labeled/line pixels; no region neighbor means the
        # front that queued us became a line, so we extend it
        out[y, x] = LINE if (is_line or label == 0) else label
        for dy, dx in nbrs:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and out[ny, nx] == 0:
                heapq.heappush(heap, (float(relief[ny, nx]), counter, ny, nx))
                counter += 1
    out[out == LINE] = 0
    return out.astype(np.int32)


def flood_fill_mask(data: np.ndarray, seed_y: int, seed_x: int,
                    tol: float) -> np.ndarray:
    """4-connected region of pixels within tol of the seed's value."""
    h, w = data.shape
    seed_val = float(data[seed_y, seed_x])
    mask = np.zeros((h, w), dtype=np.uint8)
    mask[seed_y, seed_x] = 1
    queue = deque([(seed_y, seed_x)])
    while queue:
        y, x = queue.popleft()
        for dy, dx in _N4:
            ny, nx = y + dy, x + dx
            if (0 <= ny < h and 0 <= nx < w and not mask[ny, nx]
                    and abs(float(data[ny, nx]) - seed_val) <= tol):
                mask[ny, nx] = 1
                queue.append((ny, nx))
    return mask


def chamfer_distance(mask: np.ndarray) -> np.ndarray:
    """3-4 chamfer distance (scaled by 1/3) of foreground to background."""
    h, w = mask.shape
    d = np.where(mask != 0, _CHAMFER_INF, 0).astype(np.int64)
    for y in range(h):
        for x in range(w):
            if d[y, x] == 0:
                continue
            best = d[y, x]
            if y > 0:
                if best > d[y - 1, x] + _CHAMFER_ORTH:
                    best = d[y - 1, x] + _CHAMFER_ORTH
                if x > 0 and best > d[y - 1, x - 1] + _CHAMFER_DIAG:
                    best = d[y - 1, x - 1] + _CHAMFER_DIAG
                if x < w - 1 and best > d[y - 1, x + 1] + _CHAMFER_DIAG:
                    best = d[y - 1, x + 1] + _CHAMFER_DIAG
            if x > 0 and best > d[y, x - 1] + _CHAMFER_ORTH:
                best = d[y, x - 1] + _CHAMFER_ORTH
            d[y, x] = best
    for y in range(h - 1, -1, -1):
        for x in range(w - 1, -1, -1):
            if d[y, x] == 0:
                continue
            best = d[y, x]
            if y < h - 1:
                if best > d[y + 1, x] + _CHAMFER_ORTH:
                    best = d[y + 1, x] + _CHAMFER_ORTH
                if x > 0 and best > d[y + 1, x - 1] + _CHAMFER_DIAG:
                    best = d[y + 1, x - 1] + _CHAMFER_DIAG
                if x < w - 1 and best > d[y + 1, x + 1] + _CHAMFER_DIAG:
                    best = d[y + 1, x + 1] + _CHAMFER_DIAG
            if x < w - 1 and best > d[y, x + 1] + _CHAMFER_ORTH:
                best = d[y, x + 1] + _CHAMFER_ORTH
            d[y, x] = best
    return (d.astype(np.float32)) / np.float32(3.0)


def mean_shift(img: np.ndarray, spatial_radius: int, range_radius: float,
               max_iter: int) -> np.ndarray:
    """Joint spatial-range mode seeking per pixel, flat kernel.

    The window is the Euclidean disk of spatial_radius around the current
    center; membership also requires |I(q) - v| <= range_radius.  Converges
    when the intensity shift drops below 0.5.
    """
    h, w = img.shape
    data = img.astype(np.float64)
    out = np.empty((h, w), dtype=np.float32)
    rs2 = float(spatial_radius * spatial_radius)
    rr = float(range_radius)
    for py in range(h):
        for px in range(w):
            cy, cx, v = float(py), float(px), float(data[py, px])
            for _ in range(max_iter):
                y0 = max(0, int(cy - spatial_radius))
                y1 = min(h - 1, int(cy + spatial_radius))
                x0 = max(0, int(cx - spatial_radius))
                x1 = min(w - 1, int(cx + spatial_radius))
                sy = sx = sv = 0.0
                n = 0
                for qy in range(y0, y1 + 1):
                    for qx in range(x0, x1 + 1):
                        dy = qy - cy
                        dx = qx - cx
                        if dy * dy + dx * dx > rs2:
                            continue
                        q = data[qy, qx]
                        if abs(q - v) > rr:
                            continue
                        sy += qy
                        sx += qx
                        sv += q
                        n += 1
                if n == 0:
                    break
                nv = sv / n
                shift = abs(nv - v)
                cy, cx, v = sy / n, sx / n, nv
                if shift < 0.5:
                    break
            out[py, px] = np.float32(v)
    return out
