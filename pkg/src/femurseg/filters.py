"""Smoothing and clustering filters used in pre-processing.

All filters accept any scalar buffer.  Float (HU) buffers keep full
precision; 8-bit display buffers are rounded back to uint8 on output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BadDims, BadParam
from .image import BINARY, HU, UNIT, ImageBuffer


def _scalar_data(img: ImageBuffer) -> np.ndarray:
    if img.kind == BINARY:
        raise BadParam("filters need a scalar buffer, got binary")
    return img.data.astype(np.float64)


def _rewrap(data: np.ndarray, like: ImageBuffer) -> ImageBuffer:
    if like.kind == UNIT:
        return ImageBuffer(np.clip(np.floor(data + 0.5), 0, 255).astype(np.uint8), UNIT)
    return ImageBuffer(data.astype(np.float32), HU)


@dataclass(frozen=True)
class DiffusionParams:
    iterations: int = 10
    kappa: float = 30.0
    lam: float = 0.25          # explicit-scheme step size, stable up to 1/4
    conductance: str = "exponential"

    def __post_init__(self):
        if self.iterations < 0:
            raise BadParam("iterations must be >= 0")
        if self.kappa <= 0:
            raise BadParam("kappa must be > 0")
        if not 0 < self.lam <= 0.25:
            raise BadParam("lam must be in (0, 0.25]")
        if self.conductance not in ("exponential", "rational"):
            raise BadParam(f"unknown conductance {self.conductance!r}")


def anisotropic_diffusion(img: ImageBuffer, params: DiffusionParams) -> ImageBuffer:
    """Edge-preserving diffusion, explicit 4-neighbor flux scheme.

    Reflecting boundaries make every flux antisymmetric across its edge, so
    total intensity is conserved to rounding; with lam <= 1/4 each update is
    a convex combination, so values never leave [min(in), max(in)].
    """
    data = _scalar_data(img)
    for _ in range(params.iterations):
        padded = np.pad(data, 1, mode="edge")
        d_n = padded[:-2, 1:-1] - data
        d_s = padded[2:, 1:-1] - data
        d_w = padded[1:-1, :-2] - data
        d_e = padded[1:-1, 2:] - data
        if params.conductance == "exponential":
            flux = sum(np.exp(-((d / params.kappa) ** 2)) * d
                       for d in (d_n, d_s, d_w, d_e))
        else:
            flux = sum(d / (1.0 + (d / params.kappa) ** 2)
                       for d in (d_n, d_s, d_w, d_e))
        data = data + params.lam * flux
    return _rewrap(data, img)


def kmeans_intensity(img: ImageBuffer, k: int, seed: int = 0,
                     max_iter: int = 100) -> tuple[ImageBuffer, list[float]]:
    """Lloyd clustering of the 1-D intensity values.

    Initial centroids are evenly spaced quantiles of the intensity
    distribution, which makes the result independent of the seed; the seed
    parameter is kept for interface stability.  Returned centroids are
    sorted ascending with labels renumbered to match.
    """
    del seed  # quantile init is already deterministic
    values = _scalar_data(img).ravel()
    uniq = np.unique(values)
    if k < 1:
        raise BadParam("k must be >= 1")
    if k > len(uniq):
        raise BadParam(f"k={k} exceeds {len(uniq)} distinct intensities")
    if k > 256:
        raise BadParam("k must be <= 256 so labels fit the display domain")
    centroids = np.quantile(values, (np.arange(k) + 0.5) / k)
    if len(np.unique(centroids)) < k:
        # mass concentrations collapse quantiles; fall back to evenly spaced
        # distinct values
        idx = np.round(np.linspace(0, len(uniq) - 1, k)).astype(int)
        centroids = uniq[idx].astype(np.float64)
    labels = np.zeros(values.shape, dtype=np.int64)
    for _ in range(max_iter):
        dist = np.abs(values[:, None] - centroids[None, :])
        new_labels = np.argmin(dist, axis=1)  # ties take the lowest index
        new_centroids = centroids.copy()
        for j in range(k):
            sel = values[new_labels == j]
            if sel.size:
                new_centroids[j] = sel.mean()
        if np.array_equal(new_labels, labels) and np.allclose(new_centroids, centroids):
            break
        labels, centroids = new_labels, new_centroids
    order = np.argsort(centroids, kind="stable")
    rank = np.empty(k, dtype=np.int64)
    rank[order] = np.arange(k)
    labels = rank[labels]
    centroids = centroids[order]
    label_img = ImageBuffer(labels.reshape(img.shape).astype(np.uint8), UNIT)
    return label_img, [float(c) for c in centroids]


def mean_shift_filter(img: ImageBuffer, spatial_radius: int = 5,
                      range_radius: float = 20.0, max_iter: int = 10) -> ImageBuffer:
    """Replace each pixel by the mode of its joint spatial-range window."""
    if spatial_radius <= 0 or range_radius <= 0:
        raise BadParam("mean shift radii must be > 0")
    if max_iter < 1:
        raise BadParam("max_iter must be >= 1")
    data = _scalar_data(img)
    out = _kernels.mean_shift(data, spatial_radius, range_radius, max_iter)
    return _rewrap(out.astype(np.float64), img)


@dataclass(frozen=True)
class WaveletParams:
    levels: int = 1
    threshold: float = 0.0
    mode: str = "soft"

    def __post_init__(self):
        if self.levels < 1:
            raise BadParam("levels must be >= 1")
        if self.threshold < 0:
            raise BadParam("threshold must be >= 0")
        if self.mode not in ("soft", "hard"):
            raise BadParam(f"unknown threshold mode {self.mode!r}")


def _haar_forward(block: np.ndarray) -> np.ndarray:
    s = np.sqrt(2.0)
    rows_a = (block[:, 0::2] + block[:, 1::2]) / s
    rows_d = (block[:, 0::2] - block[:, 1::2]) / s
    tmp = np.concatenate([rows_a, rows_d], axis=1)
    cols_a = (tmp[0::2, :] + tmp[1::2, :]) / s
    cols_d = (tmp[0::2, :] - tmp[1::2, :]) / s
    return np.concatenate([cols_a, cols_d], axis=0)


def _haar_inverse(block: np.ndarray) -> np.ndarray:
    s = np.sqrt(2.0)
    h, w = block.shape
    cols_a = block[: h // 2, :]
    cols_d = block[h // 2:, :]
    tmp = np.empty((h, w))
    tmp[0::2, :] = (cols_a + cols_d) / s
    tmp[1::2, :] = (cols_a - cols_d) / s
    out = np.empty((h, w))
    out[:, 0::2] = (tmp[:, : w // 2] + tmp[:, w // 2:]) / s
    out[:, 1::2] = (tmp[:, : w // 2] - tmp[:, w // 2:]) / s
    return out


def wavelet_denoise(img: ImageBuffer, params: WaveletParams) -> ImageBuffer:
    """Haar DWT to the given depth, threshold detail bands, inverse DWT."""
    h, w = img.shape
    div = 1 << params.levels
    if h % div or w % div:
        raise BadDims(f"dims {w}x{h} not divisible by 2^{params.levels}")
    data = _scalar_data(img).copy()
    sizes = []
    ch, cw = h, w
    for _ in range(params.levels):
        data[:ch, :cw] = _haar_forward(data[:ch, :cw])
        sizes.append((ch, cw))
        ch //= 2
        cw //= 2
    # threshold everything outside the final approximation band
    approx = data[:ch, :cw].copy()
    if params.mode == "soft":
        data = np.sign(data) * np.maximum(np.abs(data) - params.threshold, 0.0)
    else:
        data = np.where(np.abs(data) < params.threshold, 0.0, data)
    data[:ch, :cw] = approx
    for ch, cw in reversed(sizes):
        data[:ch, :cw] = _haar_inverse(data[:ch, :cw])
    return _rewrap(data, img)
