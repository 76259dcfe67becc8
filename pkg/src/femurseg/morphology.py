"""Binary morphology: the eight classic operators plus Zhang-Suen thinning.

Border convention: outside the image counts as background, for both
dilation and erosion (erosion shrinks shapes that touch the border).
This is pinned by golden tests, do not change it silently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadParam, NotBinary
from .image import ImageBuffer, from_mask

MORPH_OPS = ("dilate", "erode", "open", "close", "gradient", "tophat", "blackhat")


@dataclass(frozen=True)
class StructuringElement:
    shape: str = "rect"  # rect | cross | ellipse
    width: int = 3
    height: int = 3

    def __post_init__(self):
        if self.shape not in ("rect", "cross", "ellipse"):
            raise BadParam(f"unknown SE shape {self.shape!r}")
        if self.width < 1 or self.height < 1 or self.width % 2 == 0 or self.height % 2 == 0:
            raise BadParam("SE width/height must be odd and >= 1")

    def offsets(self) -> list[tuple[int, int]]:
        """(dy, dx) offsets of set SE cells relative to the center anchor."""
        ry, rx = self.height // 2, self.width // 2
        offs = []
        for dy in range(-ry, ry + 1):
            for dx in range(-rx, rx + 1):
                if self.shape == "rect":
                    keep = True
                elif self.shape == "cross":
                    keep = dy == 0 or dx == 0
                else:  # inscribed ellipse through the cell centers
                    ay = (dy / ry) ** 2 if ry else (0.0 if dy == 0 else np.inf)
                    ax = (dx / rx) ** 2 if rx else (0.0 if dx == 0 else np.inf)
                    keep = ay + ax <= 1.0
                if keep:
                    offs.append((dy, dx))
        return offs

    def reflected(self) -> "StructuringElement":
        # all supported shapes are symmetric about the center
        return self


def _require_binary(img: ImageBuffer) -> np.ndarray:
    if img.kind != "binary":
        raise NotBinary(f"morphology needs a binary buffer, got {img.kind!r}")
    return img.mask()


def _shift(mask: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Shift with background (False) fill."""
    out = np.zeros_like(mask)
    h, w = mask.shape
    ys = slice(max(0, dy), min(h, h + dy))
    xs = slice(max(0, dx), min(w, w + dx))
    ys_src = slice(max(0, -dy), min(h, h - dy))
    xs_src = slice(max(0, -dx), min(w, w - dx))
    out[ys, xs] = mask[ys_src, xs_src]
    return out


def _dilate(mask: np.ndarray, se: StructuringElement) -> np.ndarray:
    out = np.zeros_like(mask)
    for dy, dx in se.offsets():
        out |= _shift(mask, dy, dx)
    return out


def _erode(mask: np.ndarray, se: StructuringElement) -> np.ndarray:
    out = np.ones_like(mask)
    for dy, dx in se.offsets():
        out &= _shift(mask, -dy, -dx)
    return out


def morph(img: ImageBuffer, op: str, se: StructuringElement | None = None,
          iterations: int = 1) -> ImageBuffer:
    """Apply a binary morphological operator.

    open = erode then dilate, close = dilate then erode,
    gradient = dilate - erode, tophat = in - open, blackhat = close - in.
    ``iterations`` repeats the whole operator.
    """
    mask = _require_binary(img)
    if se is None:
        se = StructuringElement()
    if iterations < 1:
        raise BadParam("iterations must be >= 1")
    if op not in MORPH_OPS:
        raise BadParam(f"unknown morphological op {op!r}")
    out = mask
    for _ in range(iterations):
        if op == "dilate":
            out = _dilate(out, se)
        elif op == "erode":
            out = _erode(out, se)
        elif op == "open":
            out = _dilate(_erode(out, se), se)
        elif op == "close":
            out = _erode(_dilate(out, se), se)
        elif op == "gradient":
            out = _dilate(out, se) & ~_erode(out, se)
        elif op == "tophat":
            out = out & ~_dilate(_erode(out, se), se)
        elif op == "blackhat":
            out = _erode(_dilate(out, se), se) & ~out
    return from_mask(out)


def _zhang_suen_pass(mask: np.ndarray, step: int) -> np.ndarray:
    """One Zhang-Suen sub-iteration; returns pixels to delete."""
    padded = np.pad(mask, 1, mode="constant").astype(np.uint8)
    # neighborhood P2..P9 clockwise from north
    p2 = padded[:-2, 1:-1]
    p3 = padded[:-2, 2:]
    p4 = padded[1:-1, 2:]
    p5 = padded[2:, 2:]
    p6 = padded[2:, 1:-1]
    p7 = padded[2:, :-2]
    p8 = padded[1:-1, :-2]
    p9 = padded[:-2, :-2]
    ring = [p2, p3, p4, p5, p6, p7, p8, p9]
    b = sum(ring)
    a = sum(((ring[i] == 0) & (ring[(i + 1) % 8] == 1)) for i in range(8))
    cond = mask & (b >= 2) & (b <= 6) & (a == 1)
    if step == 0:
        cond &= (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
    else:
        cond &= (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
    return cond


def thinning(img: ImageBuffer) -> ImageBuffer:
    """Zhang-Suen iterative thinning to an 8-connected one-pixel skeleton."""
    mask = _require_binary(img).copy()
    while True:
        removed = False
        for step in (0, 1):
            to_del = _zhang_suen_pass(mask, step)
            if to_del.any():
                mask &= ~to_del
                removed = True
        if not removed:
            break
    return from_mask(mask)
