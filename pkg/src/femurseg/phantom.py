"""Procedural hip phantom with recorded ground truth.

A synthetic pelvic CT: body ellipse, detached couch slab, and per side a
femoral shaft, a medial trochanter bump, a drifting neck, and a head
sphere capped by an acetabular shell.  The generator records the true
per-slice femur masks and the zone boundaries, so the end-to-end
delineation can be scored without clinical data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dicom import EXPLICIT_VR_LE, CtVolume, SliceMeta, hu_to_raw, write_ct_slice
from .image import HU, ImageBuffer

AIR_HU = -1000.0
TISSUE_HU = 0.0
COUCH_HU = 150.0
BONE_HU = 700.0

SIZE = 256
N_SLICES = 60
SPACING_MM = 1.0
THICKNESS_MM = 3.0

# zone boundaries (slice indices, inclusive)
SHAFT_END = 19          # plain shaft through 19
BUMP_START = 20         # trochanter bump (proximal zone) 20..27
BUMP_END = 27
NECK_START = 28         # neck drift (medial zone) 28..39
NECK_END = 39
HEAD_START = 40         # head sphere (distal zone) 40..55
HEAD_END = 55

_BODY_CENTER = (128.0, 140.0)
_BODY_RADII = (100.0, 75.0)
_SHAFT_X = 73.0
_SHAFT_Y = 160.0
_SHAFT_R = 12.0
_BUMP_R = 8.0
_BUMP_OFFSET = 17.0      # medial displacement of the bump center
_HEAD_X = 88.0
_HEAD_Y = 118.0
_NECK_RX = 10.0
_NECK_RY = 8.0
_CUP_THICKNESS = 4.0
_CUP_GAP = 3.0           # radial gap between head and shell, >= 2 bg pixels
_CUP_ANGLES = (math.radians(-170.0), math.radians(-10.0))
# contact=True welds head to shell over a patch away from the joint top so
# the cup marker keeps its own basin
_CONTACT_ANGLE = math.radians(-150.0)
_CONTACT_HALF_ANGLE = math.radians(10.0)


@dataclass(frozen=True)
class PhantomTruth:
    start: int
    stop: int
    lt_end: int
    gt_end: int
    femur_masks: dict = field(repr=False)   # side -> {index: bool array}
    head_geometry: dict = field(repr=False)  # side -> {index: (cx, cy, r)}

    def region_of(self, index: int) -> str:
        if index <= self.lt_end:
            return "proximal"
        if index <= self.gt_end:
            return "medial"
        return "distal"


def _disk(shape, cx, cy, r):
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def _ellipse(shape, cx, cy, rx, ry):
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


def _cup(shape, cx, cy, r_inner, r_outer, a0, a1):
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    d = np.hypot(xx - cx, yy - cy)
    ang = np.arctan2(yy - cy, xx - cx)
    return (d >= r_inner) & (d <= r_outer) & (ang >= a0) & (ang <= a1)


def _mirror_x(x: float, size: int) -> float:
    return (size - 1) - x


def _head_radius(index: int) -> float:
    t = (index - HEAD_START) / (HEAD_END - HEAD_START)
    return round(16.0 + 6.0 * math.sin(math.pi * t))


def _neck_center(index: int) -> tuple[float, float]:
    t = (index - NECK_START) / (NECK_END - NECK_START)
    x = _SHAFT_X + t * (_HEAD_X - 2.0 - _SHAFT_X)
    y = _SHAFT_Y + t * (_HEAD_Y + 2.0 - _SHAFT_Y)
    return x, y


def make_phantom(sides=("left", "right"), n_slices: int = N_SLICES,
                 size: int = SIZE, contact: bool = False,
                 max_index: int | None = None) -> tuple[CtVolume, PhantomTruth]:
    """Build the phantom volume and its ground truth.

    contact=True welds the shell to the head over a narrow patch at the
    top of the joint (the hard low-contrast case); max_index truncates the
    anatomy above it while keeping the volume length, for the
    truncated-phantom tests.
    """
    shape = (size, size)
    body = _ellipse(shape, *_BODY_CENTER, *_BODY_RADII)
    couch = np.zeros(shape, dtype=bool)
    couch[232:239, 28:228] = True
    slices = []
    femur_masks: dict = {s: {} for s in sides}
    head_geometry: dict = {s: {} for s in sides}
    for i in range(n_slices):
        hu = np.full(shape, AIR_HU, dtype=np.float32)
        hu[body] = TISSUE_HU
        hu[couch] = COUCH_HU
        for side in sides:
            femur, head = _femur_mask(shape, i, side, size, max_index)
            cup = _cup_mask(shape, i, side, size, contact, max_index)
            hu[femur | cup] = BONE_HU
            femur_masks[side][i] = femur
            if head is not None:
                head_geometry[side][i] = head
        meta = SliceMeta(rows=size, cols=size,
                         pixel_spacing=(SPACING_MM, SPACING_MM),
                         slice_location=i * THICKNESS_MM,
                         image_position=(0.0, 0.0, i * THICKNESS_MM),
                         rescale_slope=1.0, rescale_intercept=-1024.0,
                         bits_stored=16, pixel_representation=0,
                         slice_thickness=THICKNESS_MM)
        slices.append((meta, ImageBuffer(hu, HU)))
    volume = CtVolume(slices=tuple(slices), slice_thickness=THICKNESS_MM)
    truth = PhantomTruth(start=BUMP_START, stop=HEAD_END,
                         lt_end=BUMP_END, gt_end=NECK_END,
                         femur_masks=femur_masks, head_geometry=head_geometry)
    return volume, truth


def _femur_mask(shape, index, side, size, max_index):
    if max_index is not None and index > max_index:
        return np.zeros(shape, dtype=bool), None

    def sx(x):
        return x if side == "left" else _mirror_x(x, size)

    head = None
    if index <= BUMP_END:
        mask = _disk(shape, sx(_SHAFT_X), _SHAFT_Y, _SHAFT_R)
        if index >= BUMP_START:
            mask |= _disk(shape, sx(_SHAFT_X + _BUMP_OFFSET), _SHAFT_Y, _BUMP_R)
    elif index <= NECK_END:
        cx, cy = _neck_center(index)
        mask = _ellipse(shape, sx(cx), cy, _NECK_RX, _NECK_RY)
    elif index <= HEAD_END:
        r = _head_radius(index)
        mask = _disk(shape, sx(_HEAD_X), _HEAD_Y, r)
        head = (sx(_HEAD_X), _HEAD_Y, r)
    else:
        mask = np.zeros(shape, dtype=bool)
    return mask, head


def _cup_mask(shape, index, side, size, contact, max_index):
    if max_index is not None and index > max_index:
        return np.zeros(shape, dtype=bool)
    if not HEAD_START <= index <= HEAD_END:
        return np.zeros(shape, dtype=bool)

    def sx(x):
        return x if side == "left" else _mirror_x(x, size)

    r = _head_radius(index)
    # the angular span is symmetric about vertical, so mirroring the center
    # is enough for the right side
    a0, a1 = _CUP_ANGLES
    cup = _cup(shape, sx(_HEAD_X), _HEAD_Y, r + _CUP_GAP,
               r + _CUP_GAP + _CUP_THICKNESS, a0, a1)
    if contact:
        a = _CONTACT_ANGLE if side == "left" else math.pi - _CONTACT_ANGLE - 2 * math.pi
        bridge = _cup(shape, sx(_HEAD_X), _HEAD_Y, r - 1.0, r + _CUP_GAP,
                      a - _CONTACT_HALF_ANGLE, a + _CONTACT_HALF_ANGLE)
        cup |= bridge
    return cup


def truth_solid(truth: PhantomTruth, side: str) -> dict[int, np.ndarray]:
    """Per-slice ground-truth femur masks inside the detected zone."""
    return {i: m for i, m in truth.femur_masks[side].items()
            if truth.start <= i <= truth.stop}


def write_phantom_series(directory: str | Path, **kwargs) -> tuple[CtVolume, PhantomTruth]:
    """Emit the phantom as a DICOM series, one file per slice."""
    volume, truth = make_phantom(**kwargs)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, (meta, img) in enumerate(volume.slices):
        raw = hu_to_raw(np.asarray(img.data), meta.rescale_slope,
                        meta.rescale_intercept).astype(np.uint16)
        data = write_ct_slice(meta, raw, explicit=True,
                              transfer_syntax=EXPLICIT_VR_LE)
        (directory / f"slice_{i:04d}.dcm").write_bytes(data)
    return volume, truth
