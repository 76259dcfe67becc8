"""Region extraction on binary and scalar images.

Connected components, flood fill, border following (outer and hole
contours with hierarchy), multi-threshold blob detection, maximally
stable extremal regions, and marker-driven watershed flooding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, geometry
from .errors import BadParam, DimMismatch, NoMarkers, NotBinary, OutOfBounds
from .image import BINARY, HU, UNIT, ImageBuffer, from_mask

WATERSHED_LINE = 0  # label value of watershed boundary pixels


@dataclass(frozen=True)
class RegionStats:
    label: int
    area: int
    bbox: tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive
    centroid: tuple[float, float]    # (cx, cy)


@dataclass(frozen=True)
class LabelMap:
    labels: np.ndarray = field(repr=False)  # int32, 0 = background
    count: int = 0
    stats: tuple[RegionStats, ...] = ()

    def __post_init__(self):
        arr = np.ascontiguousarray(self.labels, dtype=np.int32)
        arr.flags.writeable = False
        object.__setattr__(self, "labels", arr)

    @property
    def shape(self):
        return self.labels.shape

    def region_mask(self, label: int) -> np.ndarray:
        return self.labels == label


def _stats_for(labels: np.ndarray, count: int) -> tuple[RegionStats, ...]:
    if count == 0:
        return ()
    flat = labels.ravel()
    areas = np.bincount(flat, minlength=count + 1)
    h, w = labels.shape
    ys, xs = np.nonzero(labels)
    lab = labels[ys, xs]
    sx = np.bincount(lab, weights=xs, minlength=count + 1)
    sy = np.bincount(lab, weights=ys, minlength=count + 1)
    x0 = np.full(count + 1, w, dtype=np.int64)
    y0 = np.full(count + 1, h, dtype=np.int64)
    x1 = np.full(count + 1, -1, dtype=np.int64)
    y1 = np.full(count + 1, -1, dtype=np.int64)
    np.minimum.at(x0, lab, xs)
    np.minimum.at(y0, lab, ys)
    np.maximum.at(x1, lab, xs)
    np.maximum.at(y1, lab, ys)
    return tuple(
        RegionStats(
            label=k,
            area=int(areas[k]),
            bbox=(int(x0[k]), int(y0[k]), int(x1[k]), int(y1[k])),
            centroid=(float(sx[k] / areas[k]), float(sy[k] / areas[k])),
        )
        for k in range(1, count + 1)
    )


def connected_components(img: ImageBuffer, connectivity: int = 8) -> LabelMap:
    """Union-find labeling; labels 1..K in raster order of first pixel."""
    if img.kind != BINARY:
        raise NotBinary("connected_components needs a binary buffer")
    if connectivity not in (4, 8):
        raise BadParam(f"connectivity must be 4 or 8, got {connectivity}")
    labels, count = _kernels.label_components(img.data, connectivity)
    return LabelMap(labels=labels, count=count, stats=_stats_for(labels, count))


def flood_fill(img: ImageBuffer, seed: tuple[int, int], new_value: float,
               tolerance: float = 0.0) -> ImageBuffer:
    """Set the 4-connected region around seed (within tolerance) to new_value."""
    x, y = seed
    if not (0 <= x < img.width and 0 <= y < img.height):
        raise OutOfBounds(f"seed {seed} outside {img.width}x{img.height} image")
    if tolerance < 0:
        raise BadParam("tolerance must be >= 0")
    if img.kind == BINARY and new_value not in (0, 255):
        raise BadParam("flood fill on a binary buffer must use 0 or 255")
    region = _kernels.flood_fill_mask(img.data.astype(np.float64), y, x, tolerance)
    out = img.data.copy()
    if img.kind == HU:
        out[region > 0] = np.float32(new_value)
    else:
        out[region > 0] = np.uint8(new_value)
    return ImageBuffer(out, img.kind)


# --- border following (Suzuki-Abe) ---

@dataclass(frozen=True)
class Contour:
    points: np.ndarray = field(repr=False)  # (N, 2) of (x, y), closed implied
    area: float = 0.0                       # shoelace, positive
    is_hole: bool = False
    parent: int | None = None               # index into the returned list

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.int64)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def centroid(self) -> tuple[float, float]:
        return geometry.centroid(self.points)

    def to_mask(self, shape: tuple[int, int]) -> np.ndarray:
        """Filled region (curve included) on a canvas of the given shape."""
        return geometry.contour_to_mask(self.points, shape)


# clockwise neighborhood starting East, y down
_CW = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))
_CW_INDEX = {d: i for i, d in enumerate(_CW)}


def _follow_border(f: np.ndarray, y: int, x: int, y2: int, x2: int, nbd: int):
    """Trace one border per the border-following scan; marks f in place."""
    h, w = f.shape
    k0 = _CW_INDEX[(y2 - y, x2 - x)]
    y1 = x1 = -1
    for i in range(8):
        k = (k0 + i) % 8
        ny, nx = y + _CW[k][0], x + _CW[k][1]
        if 0 <= ny < h and 0 <= nx < w and f[ny, nx] != 0:
            y1, x1 = ny, nx
            break
    if y1 < 0:
        f[y, x] = -nbd
        return [(y, x)]
    points = [(y, x)]
    y2, x2 = y1, x1
    y3, x3 = y, x
    while True:
        # counterclockwise from the next element after (y2, x2) around (y3, x3)
        k0 = _CW_INDEX[(y2 - y3, x2 - x3)]
        examined_east_zero = False
        y4 = x4 = -1
        for i in range(1, 9):
            k = (k0 - i) % 8
            ny, nx = y3 + _CW[k][0], x3 + _CW[k][1]
            inside = 0 <= ny < h and 0 <= nx < w
            val = f[ny, nx] if inside else 0
            if val != 0:
                y4, x4 = ny, nx
                break
            if (ny, nx) == (y3, x3 + 1):
                examined_east_zero = True
        if examined_east_zero:
            f[y3, x3] = -nbd
        elif f[y3, x3] == 1:
            f[y3, x3] = nbd
        if (y4, x4) == (y, x) and (y3, x3) == (y1, x1):
            break
        y2, x2 = y3, x3
        y3, x3 = y4, x4
        points.append((y3, x3))
    return points


def find_contours(img: ImageBuffer) -> list[Contour]:
    """Outer and hole borders with hierarchy, sorted by area descending.

    Components whose border has fewer than 3 points (single pixels,
    dominoes) yield no polygon.
    """
    if img.kind != BINARY:
        raise NotBinary("find_contours needs a binary buffer")
    h, w = img.height, img.width
    f = np.zeros((h + 2, w + 2), dtype=np.int64)
    f[1:-1, 1:-1] = (img.data > 0).astype(np.int64)
    nbd = 1  # the frame is border 1, a hole border
    border_type = {1: "hole"}
    border_parent: dict[int, int | None] = {1: None}
    borders: dict[int, list[tuple[int, int]]] = {}
    for y in range(1, h + 1):
        lnbd = 1
        for x in range(1, w + 2):
            if f[y, x] == 0:
                continue
            is_outer = f[y, x] == 1 and f[y, x - 1] == 0
            is_hole = f[y, x] >= 1 and f[y, x + 1] == 0
            if is_outer or is_hole:
                if is_hole and f[y, x] > 1:
                    lnbd = f[y, x]
                nbd += 1
                kind = "outer" if is_outer else "hole"
                border_type[nbd] = kind
                # parent per the border decision table
                if kind == border_type[lnbd]:
                    border_parent[nbd] = border_parent[lnbd]
                else:
                    border_parent[nbd] = lnbd
                y2, x2 = (y, x - 1) if is_outer else (y, x + 1)
                borders[nbd] = _follow_border(f, y, x, y2, x2, nbd)
            if f[y, x] != 1:
                lnbd = abs(f[y, x])
    raw: list[tuple[int, Contour]] = []
    for b, pts in borders.items():
        if len(pts) < 3:
            continue
        xy = np.array([(px - 1, py - 1) for py, px in pts], dtype=np.int64)
        raw.append((b, Contour(points=xy, area=geometry.shoelace_area(xy),
                               is_hole=border_type[b] == "hole",
                               parent=border_parent[b])))
    order = sorted(range(len(raw)), key=lambda i: (-raw[i][1].area, raw[i][0]))
    index_of = {raw[i][0]: rank for rank, i in enumerate(order)}
    out = []
    for rank, i in enumerate(order):
        b, c = raw[i]
        parent = c.parent if c.parent in index_of else None
        out.append(Contour(points=c.points, area=c.area, is_hole=c.is_hole,
                           parent=index_of.get(parent) if parent is not None else None))
    return out


# --- blob detection ---

@dataclass(frozen=True)
class Blob:
    center: tuple[float, float]
    area: float          # shoelace area of the traced boundary
    circularity: float   # 4*pi*A / hull-perimeter^2 (hull smooths digitization)
    convexity: float     # A / hull area
    inertia_ratio: float  # minor / major second-moment axis


@dataclass(frozen=True)
class BlobParams:
    min_threshold: float = 50.0
    max_threshold: float = 220.0
    threshold_step: float = 10.0
    min_repeatability: int = 2
    min_dist: float = 10.0
    area_range: tuple[float, float] | None = None
    circularity_range: tuple[float, float] | None = None
    convexity_range: tuple[float, float] | None = None
    inertia_range: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.min_threshold < self.max_threshold:
            raise BadParam("min_threshold must be < max_threshold")
        if self.threshold_step <= 0:
            raise BadParam("threshold_step must be > 0")
        if self.min_dist < 0:
            raise BadParam("min_dist must be >= 0")


def _component_shape(mask: np.ndarray) -> tuple[float, float, float, float] | None:
    """(area, circularity, convexity, inertia) of a single-component mask."""
    contours = find_contours(from_mask(mask))
    outer = [c for c in contours if not c.is_hole]
    if not outer:
        return None
    c = outer[0]
    area = c.area
    if area <= 0:
        return None
    hull = geometry.convex_hull(c.points)
    hull_per = geometry.perimeter(hull)
    hull_area = geometry.shoelace_area(hull)
    circ = 4.0 * np.pi * area / (hull_per ** 2) if hull_per > 0 else 0.0
    conv = area / hull_area if hull_area > 0 else 0.0
    ys, xs = np.nonzero(mask)
    mx, my = xs.mean(), ys.mean()
    mu20 = ((xs - mx) ** 2).mean()
    mu02 = ((ys - my) ** 2).mean()
    mu11 = ((xs - mx) * (ys - my)).mean()
    tr = mu20 + mu02
    det = mu20 * mu02 - mu11 ** 2
    disc = max(tr * tr / 4.0 - det, 0.0)
    l1 = tr / 2.0 + np.sqrt(disc)
    l2 = tr / 2.0 - np.sqrt(disc)
    inertia = float(l2 / l1) if l1 > 0 else 1.0
    return float(area), float(circ), float(conv), float(inertia)


def _in_range(v: float, rng: tuple[float, float] | None) -> bool:
    return rng is None or rng[0] <= v <= rng[1]


def blob_detect(img: ImageBuffer, params: BlobParams) -> list[Blob]:
    """Multi-threshold bright-blob detection.

    Threshold at each level, group connected foreground per level, merge
    candidates across levels by center distance, keep those seen at
    min_repeatability levels or more, then filter by shape.
    """
    if img.kind == BINARY:
        raise BadParam("blob_detect needs a scalar buffer")
    levels = np.arange(params.min_threshold, params.max_threshold + 1e-9,
                       params.threshold_step)
    groups: list[dict] = []  # {"centers": [...], "reps": [(level_idx, stats)]}
    for li, t in enumerate(levels):
        mask = img.data >= t
        if not mask.any():
            continue
        labels, count = _kernels.label_components(mask.astype(np.uint8), 8)
        for k in range(1, count + 1):
            comp = labels == k
            ys, xs = np.nonzero(comp)
            center = (float(xs.mean()), float(ys.mean()))
            placed = None
            for g in groups:
                gx, gy = g["centers"][-1]
                if np.hypot(gx - center[0], gy - center[1]) <= params.min_dist:
                    placed = g
                    break
            if placed is None:
                placed = {"centers": [], "comps": []}
                groups.append(placed)
            placed["centers"].append(center)
            placed["comps"].append(comp)
    blobs: list[Blob] = []
    for g in groups:
        if len(g["centers"]) < params.min_repeatability:
            continue
        mid = g["comps"][len(g["comps"]) // 2]
        shape = _component_shape(mid)
        if shape is None:
            continue
        area, circ, conv, inertia = shape
        if not (_in_range(area, params.area_range)
                and _in_range(circ, params.circularity_range)
                and _in_range(conv, params.convexity_range)
                and _in_range(inertia, params.inertia_range)):
            continue
        centers = np.array(g["centers"])
        blobs.append(Blob(center=(float(centers[:, 0].mean()), float(centers[:, 1].mean())),
                          area=area, circularity=circ, convexity=conv,
                          inertia_ratio=inertia))
    blobs.sort(key=lambda b: -b.area)
    return blobs


# --- maximally stable extremal regions ---

@dataclass(frozen=True)
class MserRegion:
    points: np.ndarray = field(repr=False)  # (N, 2) of (x, y), raster order
    level: int = 0         # threshold the region was extracted at
    score: float = 0.0     # relative area variation, lower is more stable
    polarity: str = "bright"

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.int64)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def point_set(self) -> set[tuple[int, int]]:
        return {(int(x), int(y)) for x, y in self.points}


def _mser_one_polarity(data: np.ndarray, delta: int, min_area: int,
                       max_area: int, max_variation: float,
                       polarity: str) -> list[MserRegion]:
    h, w = data.shape
    full = h * w
    # per level t (255..1): component areas, representative pixels, parent links
    level_info: dict[int, dict] = {}
    prev_labels = None
    prev_t = None
    for t in range(255, 0, -1):
        mask = data >= t
        n_fg = int(mask.sum())
        if n_fg == 0:
            continue
        labels, count = _kernels.label_components(mask.astype(np.uint8), 8)
        flat = labels.ravel()
        areas = np.bincount(flat, minlength=count + 1)
        uniq, first = np.unique(flat, return_index=True)
        rep = np.zeros(count + 1, dtype=np.int64)
        rep[uniq] = first
        info = {"count": count, "areas": areas, "rep": rep, "labels": None,
                "parent_of_prev": None}
        if prev_labels is not None:
            prev = level_info[prev_t]
            # component at prev_t is contained in the current component
            # holding its representative pixel
            parent = np.zeros(prev["count"] + 1, dtype=np.int64)
            for k in range(1, prev["count"] + 1):
                parent[k] = flat[prev["rep"][k]]
            prev["parent_label"] = parent
        level_info[t] = info
        prev_labels = labels
        prev_t = t
        if n_fg == full:
            break
    if not level_info:
        return []
    ts = sorted(level_info.keys(), reverse=True)
    # best (largest, tie lowest rep) child of each node, for downward walks
    for i, t in enumerate(ts):
        info = level_info[t]
        info["best_child"] = np.zeros(info["count"] + 1, dtype=np.int64)
        if i == 0:
            continue
    for i in range(1, len(ts)):
        t_child, t_parent = ts[i - 1], ts[i]
        child = level_info[t_child]
        parent = level_info[t_parent]
        best = parent["best_child"]
        best_area = np.zeros(parent["count"] + 1, dtype=np.int64)
        for k in range(1, child["count"] + 1):
            p = child["parent_label"][k]
            a = child["areas"][k]
            if a > best_area[p] or (a == best_area[p] and
                                    (best[p] == 0 or child["rep"][k] < child["rep"][best[p]])):
                best_area[p] = a
                best[p] = k
    t_index = {t: i for i, t in enumerate(ts)}

    def area_at(i: int, k: int) -> int:
        return int(level_info[ts[i]]["areas"][k])

    def walk_up(i: int, k: int, steps: int) -> int:
        # toward lower thresholds (larger regions); parent_label is present
        # on every level except the last stored one
        while steps > 0 and i + 1 < len(ts):
            k = int(level_info[ts[i]]["parent_label"][k])
            i += 1
            steps -= 1
        return area_at(i, k)

    def walk_down(i: int, k: int, steps: int) -> int:
        # toward higher thresholds (smaller regions); clamp where the chain ends
        while steps > 0 and i > 0:
            child = int(level_info[ts[i]]["best_child"][k])
            if child == 0:
                break
            i -= 1
            k = child
            steps -= 1
        return area_at(i, k)

    def variation(i: int, k: int) -> float:
        a = area_at(i, k)
        return (walk_up(i, k, delta) - walk_down(i, k, delta)) / a

    stable: list[tuple[int, int, float]] = []  # (level t, label, score)
    for i, t in enumerate(ts):
        info = level_info[t]
        for k in range(1, info["count"] + 1):
            a = area_at(i, k)
            if a >= full or not (min_area <= a <= max_area):
                continue
            v = variation(i, k)
            if v > max_variation:
                continue
            # local minimum along the chain through this node
            if i + 1 < len(ts) and "parent_label" in info:
                pk = int(info["parent_label"][k])
                if variation(i + 1, pk) < v:
                    continue
            ck = int(info["best_child"][k])
            if ck != 0 and variation(i - 1, ck) < v:
                continue
            stable.append((t, k, v))
    # extract pixel sets, dedupe identical sets keeping the best score
    regions: dict[tuple, tuple[int, float, np.ndarray]] = {}
    by_level: dict[int, list[tuple[int, float]]] = {}
    for t, k, v in stable:
        by_level.setdefault(t, []).append((k, v))
    for t, items in by_level.items():
        mask = data >= t
        labels, _ = _kernels.label_components(mask.astype(np.uint8), 8)
        for k, v in items:
            ys, xs = np.nonzero(labels == k)
            key = (ys.tobytes(), xs.tobytes())
            if key not in regions or v < regions[key][1] or (
                    v == regions[key][1] and t > regions[key][0]):
                regions[key] = (t, v, np.column_stack([xs, ys]))
    out = [MserRegion(points=pts, level=t, score=v, polarity=polarity)
           for t, v, pts in regions.values()]
    out.sort(key=lambda r: (-len(r.points), r.level))
    return out


def mser(img: ImageBuffer, delta: int = 5, min_area: int = 25,
         max_area: int = 10000, max_variation: float = 0.25) -> list[MserRegion]:
    """Stable extremal regions, both polarities (bright-on-dark and inverse)."""
    if img.kind != UNIT:
        raise BadParam("mser needs an 8-bit display buffer")
    if delta < 1 or min_area < 1 or max_area < min_area or max_variation < 0:
        raise BadParam("invalid mser parameters")
    bright = _mser_one_polarity(img.data.astype(np.int64), delta, min_area,
                                max_area, max_variation, "bright")
    dark = _mser_one_polarity(255 - img.data.astype(np.int64), delta, min_area,
                              max_area, max_variation, "dark")
    return bright + dark


# --- watershed ---

def markers_from_seeds(shape: tuple[int, int],
                       seeds: list[tuple[int, int]]) -> LabelMap:
    """LabelMap with one single-pixel marker per (x, y) seed, labels 1..K."""
    labels = np.zeros(shape, dtype=np.int32)
    h, w = shape
    for i, (x, y) in enumerate(seeds):
        if not (0 <= x < w and 0 <= y < h):
            raise OutOfBounds(f"seed {(x, y)} outside {w}x{h} image")
        labels[int(y), int(x)] = i + 1
    count = len(seeds)
    return LabelMap(labels=labels, count=count, stats=_stats_for(labels, count))


def watershed(relief: ImageBuffer, markers: LabelMap) -> LabelMap:
    """Meyer flooding of the relief from the markers.

    Priority queue ordered by relief value, FIFO on ties; label 0 marks
    watershed-line pixels, every other pixel takes a marker label.
    """
    if markers.count < 1 or not (markers.labels > 0).any():
        raise NoMarkers("watershed needs at least one marker")
    if relief.shape != markers.shape:
        raise DimMismatch(f"relief {relief.shape} vs markers {markers.shape}")
    labels = _kernels.watershed_flood(relief.data.astype(np.float32),
                                      markers.labels, connectivity=4)
    count = int(labels.max())
    return LabelMap(labels=labels, count=count, stats=_stats_for(labels, count))
