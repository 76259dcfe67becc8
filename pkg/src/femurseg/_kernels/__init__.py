"""Kernel dispatch: compiled extension when available, pure fallback otherwise.

Set FEMURSEG_PURE=1 in the environment to force the pure implementation
(used by the parity tests and the benchmark).
"""

from __future__ import annotations

import os

import numpy as np

from . import pure as _pure

if os.environ.get("FEMURSEG_PURE"):
    _impl = _pure
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

IMPLEMENTATION = _impl.IMPLEMENTATION


def get_implementations():
    """Both kernel backends, for parity tests and benchmarks."""
    impls = {"pure": _pure}
    try:
        from . import _core
        impls["compiled"] = _core
    except ImportError:
        pass
    return impls


def label_components(mask: np.ndarray, connectivity: int = 8):
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    return _impl.label_components(np.ascontiguousarray(mask, dtype=np.uint8), connectivity)


def watershed_flood(relief: np.ndarray, markers: np.ndarray,
                    connectivity: int = 4) -> np.ndarray:
    relief32 = np.ascontiguousarray(relief, dtype=np.float32)
    return _impl.watershed_flood(relief32, np.ascontiguousarray(markers, dtype=np.int64),
                                 connectivity)


def flood_fill_mask(data: np.ndarray, seed_y: int, seed_x: int, tol: float) -> np.ndarray:
    return _impl.flood_fill_mask(np.ascontiguousarray(data, dtype=np.float64),
                                 int(seed_y), int(seed_x), float(tol))


def chamfer_distance(mask: np.ndarray) -> np.ndarray:
    return _impl.chamfer_distance(np.ascontiguousarray(mask, dtype=np.uint8))


def mean_shift(img: np.ndarray, spatial_radius: int, range_radius: float,
               max_iter: int) -> np.ndarray:
    return _impl.mean_shift(np.ascontiguousarray(img, dtype=np.float64),
                            int(spatial_radius), float(range_radius), int(max_iter))
