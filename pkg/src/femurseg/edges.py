"""Edge detection and sharpening.

Gradient responses are returned as float scalar buffers; binary outputs
come only from Canny.  Gaussian kernels truncate at 3 sigma and are
renormalized; borders are edge-replicated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BadParam, TooSmall
from .image import BINARY, HU, UNIT, ImageBuffer, from_mask

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_PREWITT_X = np.array([[-1, 0, 1], [-1, 0, 1], [-1, 0, 1]], dtype=np.float64)


def _conv3(data: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    padded = np.pad(data, 1, mode="edge")
    out = np.zeros_like(data)
    for dy in range(3):
        for dx in range(3):
            k = kernel[dy, dx]
            if k:
                out += k * padded[dy:dy + data.shape[0], dx:dx + data.shape[1]]
    return out


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian truncated at 3 sigma, renormalized."""
    if sigma <= 0:
        raise BadParam("sigma must be > 0")
    radius = int(math.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def gaussian_blur(img: ImageBuffer, sigma: float) -> ImageBuffer:
    """Separable Gaussian smoothing with edge replication."""
    data = _blur_array(img.data.astype(np.float64), sigma)
    if img.kind == UNIT:
        return ImageBuffer(np.clip(np.floor(data + 0.5), 0, 255).astype(np.uint8), UNIT)
    return ImageBuffer(data.astype(np.float32), HU)


def _blur_array(data: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    padded = np.pad(data, ((0, 0), (r, r)), mode="edge")
    rows = sum(k[i] * padded[:, i:i + data.shape[1]] for i in range(len(k)))
    padded = np.pad(rows, ((r, r), (0, 0)), mode="edge")
    return sum(k[i] * padded[i:i + data.shape[0], :] for i in range(len(k)))


def gradient_edges(img: ImageBuffer, kind: str = "sobel") -> ImageBuffer:
    """Gradient magnitude (sobel/prewitt) or signed 4-neighbor Laplacian."""
    if img.kind == BINARY:
        raise BadParam("gradient_edges needs a scalar buffer")
    if img.height < 3 or img.width < 3:
        raise TooSmall("gradient_edges needs at least a 3x3 image")
    data = img.data.astype(np.float64)
    if kind in ("sobel", "prewitt"):
        kx = _SOBEL_X if kind == "sobel" else _PREWITT_X
        gx = _conv3(data, kx)
        gy = _conv3(data, kx.T)
        out = np.hypot(gx, gy)
    elif kind == "laplace":
        padded = np.pad(data, 1, mode="edge")
        out = (padded[:-2, 1:-1] + padded[2:, 1:-1]
               + padded[1:-1, :-2] + padded[1:-1, 2:] - 4.0 * data)
    else:
        raise BadParam(f"unknown gradient kind {kind!r}")
    return ImageBuffer(out.astype(np.float32), HU)


def canny(img: ImageBuffer, sigma: float = 1.0, low: float = 20.0,
          high: float = 60.0) -> ImageBuffer:
    """Canny edges: smooth, Sobel, 4-direction NMS, hysteresis linking."""
    if img.kind == BINARY:
        raise BadParam("canny needs a scalar buffer")
    if sigma <= 0:
        raise BadParam("sigma must be > 0")
    if not 0 <= low < high:
        raise BadParam(f"need 0 <= low < high, got low={low} high={high}")
    data = _blur_array(img.data.astype(np.float64), sigma)
    gx = _conv3(data, _SOBEL_X)
    gy = _conv3(data, _SOBEL_X.T)
    mag = np.hypot(gx, gy)
    angle = np.arctan2(gy, gx)
    # quantize to 4 directions: 0 = E/W, 1 = NE/SW, 2 = N/S, 3 = NW/SE
    quadrant = np.round(angle / (np.pi / 4.0)).astype(np.int64) % 4
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    h, w = mag.shape
    keep = np.zeros((h, w), dtype=bool)
    for q, (dy, dx) in offsets.items():
        sel = quadrant == q
        plus = np.full((h, w), -np.inf)
        minus = np.full((h, w), -np.inf)
        ys0, ys1 = max(0, dy), min(h, h + dy)
        xs0, xs1 = max(0, dx), min(w, w + dx)
        plus[ys0 - dy:ys1 - dy, xs0 - dx:xs1 - dx] = mag[ys0:ys1, xs0:xs1]
        minus[ys0:ys1, xs0:xs1] = mag[ys0 - dy:ys1 - dy, xs0 - dx:xs1 - dx]
        keep |= sel & (mag >= plus) & (mag > minus)
    keep[0, :] = keep[-1, :] = False
    keep[:, 0] = keep[:, -1] = False
    strong = keep & (mag >= high)
    candidate = keep & (mag >= low)
    if not candidate.any():
        return from_mask(np.zeros((h, w), dtype=bool))
    labels, count = _kernels.label_components(candidate.astype(np.uint8), 8)
    strong_labels = np.unique(labels[strong])
    strong_labels = strong_labels[strong_labels > 0]
    final = np.isin(labels, strong_labels) & candidate
    return from_mask(final)


@dataclass(frozen=True)
class CircleHit:
    center: tuple[int, int]  # (x, y)
    radius: int
    votes: int


def _circle_offsets(r: int) -> np.ndarray:
    """Midpoint-circle perimeter offsets (dy, dx), deterministic order."""
    pts = set()
    x, y, err = r, 0, 1 - r
    while x >= y:
        for sx, sy in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            pts.add((sy * y, sx * x))
            pts.add((sy * x, sx * y))
        y += 1
        if err < 0:
            err += 2 * y + 1
        else:
            x -= 1
            err += 2 * (y - x) + 1
    return np.array(sorted(pts), dtype=np.int64)


def hough_circles(edge_mask: ImageBuffer, r_min: int, r_max: int,
                  vote_threshold: int) -> list[CircleHit]:
    """Circle Hough transform over a (cx, cy, r) accumulator.

    Local accumulator maxima above vote_threshold, strongest first, with
    weaker hits suppressed within r_min of a kept center.
    """
    if edge_mask.kind != BINARY:
        raise BadParam("hough_circles needs a binary edge mask")
    if not 1 <= r_min <= r_max:
        raise BadParam(f"need 1 <= r_min <= r_max, got {r_min}..{r_max}")
    if vote_threshold < 1:
        raise BadParam("vote_threshold must be >= 1")
    h, w = edge_mask.shape
    ys, xs = np.nonzero(edge_mask.data)
    radii = np.arange(r_min, r_max + 1)
    acc = np.zeros((len(radii), h, w), dtype=np.int32)
    for ri, r in enumerate(radii):
        offs = _circle_offsets(int(r))
        for dy, dx in offs:
            cy = ys - dy
            cx = xs - dx
            ok = (cy >= 0) & (cy < h) & (cx >= 0) & (cx < w)
            np.add.at(acc[ri], (cy[ok], cx[ok]), 1)
    # 3x3x3 local maxima at or above the threshold
    padded = np.pad(acc, 1, mode="constant")
    is_max = np.ones_like(acc, dtype=bool)
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dz == dy == dx == 0:
                    continue
                shifted = padded[1 + dz:1 + dz + len(radii),
                                 1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
                is_max &= acc >= shifted
    cand = np.argwhere(is_max & (acc >= vote_threshold))
    hits = sorted(
        ((int(acc[ri, cy, cx]), int(radii[ri]), int(cy), int(cx))
         for ri, cy, cx in cand),
        key=lambda t: (-t[0], t[1], t[2], t[3]),
    )
    kept: list[CircleHit] = []
    for votes, r, cy, cx in hits:
        if any(math.hypot(k.center[0] - cx, k.center[1] - cy) < r_min for k in kept):
            continue
        kept.append(CircleHit(center=(cx, cy), radius=r, votes=votes))
    return kept


def unsharp_mask(img: ImageBuffer, sigma: float = 1.0, amount: float = 1.0) -> ImageBuffer:
    """out = in + amount * (in - gaussian(in, sigma)), clamped for display buffers."""
    if img.kind == BINARY:
        raise BadParam("unsharp_mask needs a scalar buffer")
    if sigma <= 0:
        raise BadParam("sigma must be > 0")
    if amount < 0:
        raise BadParam("amount must be >= 0")
    data = img.data.astype(np.float64)
    sharp = data + amount * (data - _blur_array(data, sigma))
    if img.kind == UNIT:
        return ImageBuffer(np.clip(np.floor(sharp + 0.5), 0, 255).astype(np.uint8), UNIT)
    return ImageBuffer(sharp.astype(np.float32), HU)
