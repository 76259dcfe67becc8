"""End-to-end femoral delineation: couch removal, bone isolation, slice-range
detection, watershed-based per-slice segmentation with prior chaining,
region tagging, and overlay rendering.

The per-slice operator chain here is one concrete composition of the
toolkit operators; thresholds are pinned by the synthetic phantom, with
every knob exposed through FemurParams.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, edges, geometry, morphology, regions
from .dicom import CtVolume
from .errors import (BadParam, EmptySlice, InvertedRange, NoBone, NoSeed,
                     OutOfBounds, OutOfRange, PartialFailure, RangeNotFound)
from .image import HU, ImageBuffer, from_mask, window_level
from .morphology import StructuringElement
from .regions import Contour

AIR_HU = -1000.0
BODY_HU_THRESHOLD = -500.0
MIN_BONE_COMPONENT = 20        # px
CONVEXITY_TROCHANTER = 0.92    # bump detection threshold
HOUGH_COVERAGE = 0.55          # fraction of the circle template that must vote
PRIOR_GATE_PX = 10.0           # max centroid jump between neighbor slices

REGIONS = ("proximal", "medial", "distal")


@dataclass(frozen=True)
class FemurParams:
    bone_hu: float = 200.0
    head_r_range: tuple[float, float] = (15.0, 35.0)  # mm
    seed: str = "auto"     # hough circle first, prior centroid as fallback
    side: str = "left"     # left | right | both

    def __post_init__(self):
        if not self.head_r_range[0] < self.head_r_range[1]:
            raise BadParam("head_r_range must be (r_min, r_max) with r_min < r_max")
        if self.bone_hu <= -1000:
            raise BadParam("bone_hu must be above air")
        if self.seed != "auto":
            raise BadParam(f"unknown seed mode {self.seed!r}")
        if self.side not in ("left", "right", "both"):
            raise BadParam(f"side must be left, right or both, got {self.side!r}")


@dataclass(frozen=True)
class DelineationSlice:
    index: int
    contour: Contour
    region: str


@dataclass(frozen=True)
class Delineation:
    side: str
    slices: tuple[DelineationSlice, ...]
    volume_digest: str


def remove_couch(slice_hu: ImageBuffer) -> ImageBuffer:
    """Keep only the patient body; everything else becomes air.

    Non-air components are labeled 8-connected; the largest one whose
    centroid lies in the central 60% of the frame is the body.
    """
    if slice_hu.kind != HU:
        raise BadParam("remove_couch needs a calibrated HU slice")
    mask = slice_hu.data > BODY_HU_THRESHOLD
    if not mask.any():
        raise EmptySlice("slice has no non-air pixels")
    lm = regions.connected_components(from_mask(mask), 8)
    h, w = slice_hu.shape
    x_lo, x_hi = 0.2 * w, 0.8 * w
    y_lo, y_hi = 0.2 * h, 0.8 * h
    central = [s for s in lm.stats
               if x_lo <= s.centroid[0] <= x_hi and y_lo <= s.centroid[1] <= y_hi]
    if not central:
        raise EmptySlice("no component centered in the frame")
    body = max(central, key=lambda s: s.area)
    keep = lm.labels == body.label
    out = np.where(keep, slice_hu.data, np.float32(AIR_HU)).astype(np.float32)
    return ImageBuffer(out, HU)


def isolate_bone(slice_hu: ImageBuffer, bone_hu: float = 200.0) -> ImageBuffer:
    """Threshold at bone HU, seal trabecular gaps, drop speckle components."""
    if slice_hu.kind != HU:
        raise BadParam("isolate_bone needs a calibrated HU slice")
    mask = from_mask(slice_hu.data >= bone_hu)
    closed = morphology.morph(mask, "close", StructuringElement("ellipse", 3, 3))
    lm = regions.connected_components(closed, 8)
    keep = np.zeros(slice_hu.shape, dtype=bool)
    for s in lm.stats:
        if s.area >= MIN_BONE_COMPONENT:
            keep |= lm.labels == s.label
    return from_mask(keep)


def _body_centroid_x(slice_hu: ImageBuffer) -> float | None:
    mask = slice_hu.data > BODY_HU_THRESHOLD
    if not mask.any():
        return None
    ys, xs = np.nonzero(mask)
    return float(xs.mean())


def _side_mask(shape: tuple[int, int], side: str, midline: float) -> np.ndarray:
    xs = np.arange(shape[1])
    col = xs < midline if side == "left" else xs >= midline
    return np.broadcast_to(col, shape)


def _largest_component(mask: np.ndarray) -> np.ndarray | None:
    if not mask.any():
        return None
    lm = regions.connected_components(from_mask(mask), 8)
    best = max(lm.stats, key=lambda s: s.area)
    return lm.labels == best.label


def _component_convexity(mask: np.ndarray) -> float | None:
    contours = [c for c in regions.find_contours(from_mask(mask)) if not c.is_hole]
    if not contours:
        return None
    c = contours[0]
    hull = geometry.hull_area(c.points)
    return c.area / hull if hull > 0 else None


def _r_range_px(params: FemurParams, spacing: tuple[float, float]) -> tuple[int, int]:
    mm_per_px = (spacing[0] + spacing[1]) / 2.0
    r_min = max(1, int(round(params.head_r_range[0] / mm_per_px)))
    r_max = max(r_min, int(round(params.head_r_range[1] / mm_per_px)))
    return r_min, r_max


def _hough_head(bone: np.ndarray, r_px: tuple[int, int]) -> edges.CircleHit | None:
    """Best-covered circle in the bone mask's internal boundary.

    The internal boundary is one pixel thin, and hits are ranked by the
    fraction of their circle template that voted, so a full head circle
    beats a larger circle grazing two separate structures.
    """
    if not bone.any():
        return None
    eroded = morphology.morph(from_mask(bone), "erode",
                              StructuringElement("rect", 3, 3)).mask()
    boundary = from_mask(bone & ~eroded)
    hits = edges.hough_circles(boundary, r_px[0], r_px[1], vote_threshold=8)
    best = None
    best_coverage = HOUGH_COVERAGE
    for hit in hits:
        coverage = hit.votes / len(edges._circle_offsets(hit.radius))
        if coverage > best_coverage:
            best = hit
            best_coverage = coverage
    return best


def _snap_to_mask(mask: np.ndarray, x: float, y: float) -> tuple[int, int] | None:
    """Nearest foreground pixel (ties in raster order), as (x, y)."""
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        return None
    d2 = (xs - x) ** 2 + (ys - y) ** 2
    i = int(np.lexsort((xs, ys, d2))[0])
    return int(xs[i]), int(ys[i])


def segment_femoral_head_slice(slice_hu: ImageBuffer, side: str,
                               prior: Contour | None, params: FemurParams,
                               midline: float | None = None,
                               hough_hit: edges.CircleHit | None | str = "compute",
                               ) -> Contour:
    """Segment the femur cross-section of one couch-removed slice.

    Marker 1 sits at the head circle center (Hough) or the prior contour
    centroid; marker 2, when bone exists above the head, claims the
    acetabular side.  Watershed over the inverted interior distance of the
    bone mask separates the two; results whose centroid jumps more than
    PRIOR_GATE_PX from the prior fall back to a prior-seeded flood fill.
    """
    bone_all = isolate_bone(slice_hu, params.bone_hu).mask()
    if midline is None:
        midline = _body_centroid_x(slice_hu)
        if midline is None:
            raise NoBone("empty slice")
    bone = bone_all & _side_mask(slice_hu.shape, side, midline)
    if not bone.any():
        raise NoBone(f"no bone on the {side} side")
    if hough_hit == "compute":
        # standalone calls assume 1 mm/px; the volume driver passes the hit
        # computed with the real pixel spacing
        hough_hit = _hough_head(bone, _r_range_px(params, (1.0, 1.0)))
    if hough_hit is not None:
        cx, cy = hough_hit.center
        r_eff = float(hough_hit.radius)
    elif prior is not None:
        cx, cy = prior.centroid()
        r_eff = math.sqrt(max(prior.area, 1.0) / math.pi)
    else:
        raise NoSeed("no head circle found and no prior contour")
    head_seed = _snap_to_mask(bone, cx, cy)
    markers = np.zeros(slice_hu.shape, dtype=np.int32)
    markers[head_seed[1], head_seed[0]] = 1
    count = 1
    above = bone & (np.arange(slice_hu.shape[0])[:, None] < cy - r_eff - 2)
    if above.any():
        vals = np.where(above, slice_hu.data, -np.inf)
        bright = above & (vals >= vals.max() - 50.0)
        bys, bxs = np.nonzero(bright)
        seed2 = _snap_to_mask(bright, float(bxs.mean()), float(bys.mean()))
        if seed2 is not None and seed2 != head_seed:
            markers[seed2[1], seed2[0]] = 2
            count = 2
    # relief from the raw threshold mask: the sub-threshold joint space keeps
    # its distance pinch even where the closing welded the bone mask shut
    raw = (slice_hu.data >= params.bone_hu) & _side_mask(slice_hu.shape, side, midline)
    relief = -_kernels.chamfer_distance(raw.astype(np.uint8))
    ws = _kernels.watershed_flood(relief, markers, connectivity=4)
    head_region = (ws == 1) & bone
    contour = _region_contour(head_region, slice_hu.shape)
    if contour is None:
        raise NoBone("head region degenerated to nothing traceable")
    if prior is not None:
        px, py = prior.centroid()
        nx, ny = contour.centroid()
        if math.hypot(nx - px, ny - py) > PRIOR_GATE_PX:
            seed = _snap_to_mask(bone, px, py)
            if seed is None or math.hypot(seed[0] - px, seed[1] - py) > 5.0:
                raise NoSeed("prior centroid is nowhere near bone")
            filled = _kernels.flood_fill_mask(bone.astype(np.float64),
                                              seed[1], seed[0], 0.0) > 0
            fallback = _region_contour(filled, slice_hu.shape)
            if fallback is None:
                raise NoBone("prior-guided region not traceable")
            contour = fallback
    return contour


def _region_contour(mask: np.ndarray, shape) -> Contour | None:
    comp = _largest_component(mask)
    if comp is None:
        return None
    closed = morphology.morph(from_mask(comp), "close",
                              StructuringElement("ellipse", 3, 3))
    outer = [c for c in regions.find_contours(closed) if not c.is_hole]
    return outer[0] if outer else None


@dataclass(frozen=True)
class RangeInfo:
    start: int
    stop: int
    lt_end: int
    gt_end: int
    midline: float
    hough_hits: dict = field(repr=False)   # index -> CircleHit | None
    body_slices: tuple = field(repr=False)  # couch-removed HU buffers


def _analyze_volume(volume: CtVolume, side: str, params: FemurParams) -> RangeInfo:
    body_slices = []
    centroids = []
    for _, img in volume.slices:
        try:
            body = remove_couch(img)
        except EmptySlice:
            body = ImageBuffer(np.full(img.shape, np.float32(AIR_HU)), HU)
        body_slices.append(body)
        cx = _body_centroid_x(body)
        if cx is not None:
            centroids.append(cx)
    if not centroids:
        raise RangeNotFound("volume has no body")
    midline = float(np.median(centroids))
    r_px = _r_range_px(params, volume.pixel_spacing)
    convex_drop = []
    hough_hits: dict[int, edges.CircleHit | None] = {}
    for i, body in enumerate(body_slices):
        bone = isolate_bone(body, params.bone_hu).mask()
        bone &= _side_mask(body.shape, side, midline)
        comp = _largest_component(bone)
        conv = _component_convexity(comp) if comp is not None else None
        convex_drop.append(conv is not None and conv < CONVEXITY_TROCHANTER)
        hough_hits[i] = _hough_head(bone, r_px)
    try:
        start = convex_drop.index(True)
    except ValueError:
        raise RangeNotFound(
            "no trochanter signature (shaft convexity never drops)") from None
    lt_end = start
    while lt_end + 1 < len(volume) and convex_drop[lt_end + 1]:
        lt_end += 1
    hit_indices = [i for i, h in hough_hits.items() if h is not None]
    if not hit_indices:
        raise RangeNotFound("no head-sized circle found on any slice")
    stop = max(hit_indices)
    if start >= stop:
        raise InvertedRange(f"range start {start} is not before stop {stop}")
    first_head = min(i for i in hit_indices if i > lt_end) if any(
        i > lt_end for i in hit_indices) else stop
    gt_end = min(max(first_head - 1, lt_end), stop)
    return RangeInfo(start=start, stop=stop, lt_end=lt_end, gt_end=gt_end,
                     midline=midline, hough_hits=hough_hits,
                     body_slices=tuple(body_slices))


def detect_slice_range(volume: CtVolume, side: str,
                       params: FemurParams | None = None) -> tuple[int, int]:
    """First trochanter-bump slice to last head-circle slice, ascending z."""
    params = params or FemurParams(side=side)
    info = _analyze_volume(volume, side, params)
    return info.start, info.stop


def classify_region(index: int, slice_range: tuple[int, int],
                    landmarks: tuple[int, int]) -> str:
    """proximal for [start, lt_end]; medial (lt_end, gt_end]; distal after."""
    start, stop = slice_range
    lt_end, gt_end = landmarks
    if not start <= index <= stop:
        raise OutOfRange(f"index {index} outside [{start}, {stop}]")
    if not start <= lt_end <= gt_end <= stop:
        raise OutOfRange(f"landmarks {landmarks} outside [{start}, {stop}]")
    if index <= lt_end:
        return "proximal"
    if index <= gt_end:
        return "medial"
    return "distal"


def delineate_femur(volume: CtVolume, params: FemurParams | None = None):
    """Delineate one femur (or both); deterministic for identical input."""
    params = params or FemurParams()
    if params.side == "both":
        left = delineate_femur(volume, _with_side(params, "left"))
        right = delineate_femur(volume, _with_side(params, "right"))
        return left, right
    side = params.side
    info = _analyze_volume(volume, side, params)
    prior = _initial_prior(info, side, params)
    contours: dict[int, Contour] = {}
    failures: list[int] = []
    for i in range(info.start, info.stop + 1):
        try:
            contour = segment_femoral_head_slice(
                info.body_slices[i], side, prior, params,
                midline=info.midline, hough_hit=info.hough_hits[i])
            contours[i] = contour
            prior = contour
        except (NoSeed, NoBone):
            failures.append(i)
            if prior is not None:
                contours[i] = prior
    in_range = info.stop - info.start + 1
    if len(failures) > 0.2 * in_range:
        raise PartialFailure(failures)
    # backfill any leading failures that had no prior yet
    first_good = min(contours) if contours else None
    if first_good is None:
        raise PartialFailure(failures)
    for i in range(info.start, info.stop + 1):
        if i not in contours:
            contours[i] = contours[first_good]
    slices = tuple(
        DelineationSlice(index=i, contour=contours[i],
                         region=classify_region(i, (info.start, info.stop),
                                                (info.lt_end, info.gt_end)))
        for i in range(info.start, info.stop + 1))
    return Delineation(side=side, slices=slices, volume_digest=volume.digest())


def _with_side(params: FemurParams, side: str) -> FemurParams:
    return FemurParams(bone_hu=params.bone_hu, head_r_range=params.head_r_range,
                       seed=params.seed, side=side)


def _initial_prior(info: RangeInfo, side: str, params: FemurParams) -> Contour | None:
    """Contour of the largest bone component on the start slice.

    Hough cannot seed the trochanter slices, so the chain starts from the
    shaft component itself.
    """
    body = info.body_slices[info.start]
    bone = isolate_bone(body, params.bone_hu).mask()
    bone &= _side_mask(body.shape, side, info.midline)
    return _region_contour(bone, body.shape)


def delineation_to_json(delineation: Delineation, volume: CtVolume) -> str:
    """Export schema: per-slice contours in pixel and patient coordinates."""
    slices = []
    for ds in delineation.slices:
        meta = volume.slices[ds.index][0]
        pts_px = [[int(x), int(y)] for x, y in ds.contour.points]
        ox, oy, oz = meta.image_position
        row_mm, col_mm = meta.pixel_spacing
        pts_mm = [[round(ox + x * col_mm, 6), round(oy + y * row_mm, 6),
                   round(oz, 6)] for x, y in ds.contour.points]
        slices.append({"index": ds.index, "z_mm": round(oz, 6),
                       "region": ds.region, "points_px": pts_px,
                       "points_mm": pts_mm})
    doc = {"v": 1, "side": delineation.side,
           "volume_digest": delineation.volume_digest, "slices": slices}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def overlay_contour(slice_hu: ImageBuffer, contour, window: float = 1500.0,
                    level: float = 300.0) -> np.ndarray:
    """Windowed grayscale RGB raster with contours drawn in green."""
    base = window_level(slice_hu, window, level).data if slice_hu.kind == HU \
        else slice_hu.data
    rgb = np.stack([base, base, base], axis=-1).astype(np.uint8)
    contours = contour if isinstance(contour, (list, tuple)) else \
        ([] if contour is None else [contour])
    h, w = slice_hu.shape
    for c in contours:
        pts = np.asarray(c.points)
        if ((pts[:, 0] < 0) | (pts[:, 0] >= w) | (pts[:, 1] < 0)
                | (pts[:, 1] >= h)).any():
            raise OutOfBounds("contour vertex outside the slice")
        for (x0, y0), (x1, y1) in zip(pts, np.roll(pts, -1, axis=0)):
            for x, y in geometry._bresenham(int(x0), int(y0), int(x1), int(y1)):
                rgb[y, x] = (0, 255, 0)
    return rgb
