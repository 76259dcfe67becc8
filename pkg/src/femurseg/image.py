"""Image buffer type and intensity point operations.

``ImageBuffer`` is the currency every operator consumes and produces:
a single-channel 2-D raster tagged with its domain kind.  Point operations
work on the 8-bit display domain; calibrated HU slices go through
``window_level`` first.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import BadParam, DegenerateHistogram

# buffer kinds
HU = "hu"          # calibrated Hounsfield units, float32
UNIT = "unit"      # 8-bit display domain 0..255, uint8
BINARY = "binary"  # {0, 255}, uint8

BINARY_MAX = 255

# display window/level presets (width, level) in HU
WINDOW_SOFT_TISSUE = (400.0, 40.0)
WINDOW_BONE = (1500.0, 300.0)


@dataclass(frozen=True)
class ImageBuffer:
    """Single-channel row-major raster with a domain tag.

    Immutable: the wrapped array is marked read-only so buffers can be
    shared across threads and cached by content digest.
    """

    data: np.ndarray
    kind: str = UNIT

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise BadParam(f"image data must be 2-D, got shape {arr.shape}")
        if self.kind == HU:
            arr = np.ascontiguousarray(arr, dtype=np.float32)
        elif self.kind in (UNIT, BINARY):
            arr = np.ascontiguousarray(arr, dtype=np.uint8)
        else:
            raise BadParam(f"unknown buffer kind {self.kind!r}")
        if self.kind == BINARY:
            bad = np.setdiff1d(np.unique(arr), [0, BINARY_MAX])
            if bad.size:
                raise BadParam(f"binary buffer contains values {bad.tolist()}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def digest(self) -> str:
        """Content hash over raw pixel bytes + dims + kind."""
        h = hashlib.blake2b(digest_size=16)
        h.update(self.kind.encode())
        h.update(np.array(self.data.shape, dtype=np.int64).tobytes())
        h.update(self.data.tobytes())
        return h.hexdigest()

    def mask(self) -> np.ndarray:
        """Boolean view of a binary buffer."""
        if self.kind != BINARY:
            raise BadParam(f"mask() needs a binary buffer, got {self.kind!r}")
        return self.data > 0


def from_mask(mask: np.ndarray) -> ImageBuffer:
    """Wrap a boolean array as a binary buffer."""
    return ImageBuffer(np.where(mask, BINARY_MAX, 0).astype(np.uint8), BINARY)


@dataclass(frozen=True)
class Histogram:
    bins: np.ndarray = field(repr=False)  # 256 counts
    total: int = 0

    def __post_init__(self):
        if self.bins.shape != (256,):
            raise BadParam("histogram must have 256 bins")
        if int(self.bins.sum()) != self.total:
            raise BadParam("histogram bins do not sum to total")


def histogram(img: ImageBuffer) -> Histogram:
    _require_unit(img)
    bins = np.bincount(img.data.ravel(), minlength=256).astype(np.int64)
    return Histogram(bins=bins, total=int(bins.sum()))


def _require_unit(img: ImageBuffer):
    if img.kind != UNIT:
        raise BadParam(f"operation needs an 8-bit display buffer, got {img.kind!r}")


def _require_scalar(img: ImageBuffer):
    if img.kind == BINARY:
        raise BadParam("operation needs a scalar buffer, got binary")


def window_level(img: ImageBuffer, window: float = WINDOW_SOFT_TISSUE[0],
                 level: float = WINDOW_SOFT_TISSUE[1]) -> ImageBuffer:
    """Map an HU buffer into the 8-bit display domain."""
    if window <= 0:
        raise BadParam("window must be > 0")
    lo = level - window / 2.0
    scaled = (img.data.astype(np.float64) - lo) / window * 255.0
    out = np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)
    return ImageBuffer(out, UNIT)


def point_op(img: ImageBuffer, op: str, *, delta: float = 0.0,
             factor: float = 1.0, g: float = 1.0) -> ImageBuffer:
    """Apply brightness/contrast/gamma/invert in the display domain, clamped."""
    _require_unit(img)
    x = img.data.astype(np.float64)
    if op == "brightness":
        y = x + delta
    elif op == "contrast":
        if factor < 0:
            raise BadParam("contrast factor must be >= 0")
        y = (x - 127.5) * factor + 127.5
    elif op == "gamma":
        if g <= 0:
            raise BadParam("gamma must be > 0")
        y = 255.0 * (x / 255.0) ** g
    elif op == "invert":
        y = 255.0 - x
    else:
        raise BadParam(f"unknown point op {op!r}")
    out = np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)
    return ImageBuffer(out, UNIT)


def histogram_equalize(img: ImageBuffer) -> ImageBuffer:
    """Remap intensities so output = round(255 * CDF(input))."""
    _require_unit(img)
    hist = histogram(img)
    cdf = np.cumsum(hist.bins) / hist.total
    lut = np.floor(255.0 * cdf + 0.5).astype(np.uint8)
    return ImageBuffer(lut[img.data], UNIT)


def threshold_simple(img: ImageBuffer, t: float) -> ImageBuffer:
    """Pixel >= t is foreground."""
    _require_scalar(img)
    return from_mask(img.data >= t)


def threshold_otsu(img: ImageBuffer) -> tuple[int, ImageBuffer]:
    """Threshold maximizing between-class variance; ties take the lowest t.

    Classes at candidate t are {pixel < t} and {pixel >= t}, matching
    ``threshold_simple``.
    """
    _require_unit(img)
    hist = histogram(img)
    counts = hist.bins.astype(np.float64)
    if np.count_nonzero(counts) < 2:
        raise DegenerateHistogram("constant image has no threshold")
    total = hist.total
    values = np.arange(256, dtype=np.float64)
    # cumulative background stats for thresholds t = 0..255 (background = < t)
    cum_n = np.concatenate([[0.0], np.cumsum(counts)])[:256]
    cum_s = np.concatenate([[0.0], np.cumsum(counts * values)])[:256]
    n0 = cum_n
    n1 = total - n0
    sum_all = float((counts * values).sum())
    mu0 = np.where(n0 > 0, cum_s / np.where(n0 > 0, n0, 1.0), 0.0)
    mu1 = np.where(n1 > 0, (sum_all - cum_s) / np.where(n1 > 0, n1, 1.0), 0.0)
    sigma_b = (n0 / total) * (n1 / total) * (mu0 - mu1) ** 2
    sigma_b[(n0 == 0) | (n1 == 0)] = -1.0
    t = int(np.argmax(sigma_b))  # argmax takes the first (lowest) maximum
    return t, threshold_simple(img, t)


def threshold_adaptive(img: ImageBuffer, window: int, c: float) -> ImageBuffer:
    """Foreground where pixel >= local window mean - c (edge-replicated)."""
    _require_scalar(img)
    if window < 3 or window % 2 == 0:
        raise BadParam(f"window must be odd and >= 3, got {window}")
    r = window // 2
    padded = np.pad(img.data.astype(np.float64), r, mode="edge")
    # summed-area table for the windowed mean
    sat = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1))
    sat[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    h, w = img.data.shape
    win_sum = (sat[window:window + h, window:window + w]
               - sat[:h, window:window + w]
               - sat[window:window + h, :w]
               + sat[:h, :w])
    mean = win_sum / (window * window)
    return from_mask(img.data.astype(np.float64) >= mean - c)
