"""Femoral-head auto-segmentation toolkit for pelvic CT.

Composable image operators, a cached declarative pipeline engine, DICOM
ingestion, an end-to-end femoral delineation procedure, evaluation
metrics, and an HTTP service powering the interactive tuning UI.
"""

from ._kernels import IMPLEMENTATION as KERNEL_IMPLEMENTATION
from .image import BINARY, HU, UNIT, ImageBuffer, from_mask

__version__ = "0.1.0"

__all__ = [
    "BINARY",
    "HU",
    "UNIT",
    "ImageBuffer",
    "from_mask",
    "KERNEL_IMPLEMENTATION",
    "__version__",
]
