"""Declarative pipeline engine: operator registry, spec parsing, cached runs.

A pipeline is a linear list of named stages with parameter maps.  Stage
outputs are cached in a content-addressed store keyed by
(op, params, input digest), so replaying a spec on the same input costs
zero operator executions.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
import time
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import edges, filters, image, morphology, regions
from .errors import (BadParamSchema, FemursegError, ParseError, StageFailure,
                     UnknownOp)
from .image import BINARY, HU, UNIT, ImageBuffer

SPEC_SCHEMA_DOC = ('{"name": str, "stages": [{"op": str, "params": {...}, '
                   '"enabled": bool (default true)}]}')


@dataclass(frozen=True)
class Param:
    type: str  # "number" | "string" | "coords"
    required: bool = False
    default: object = None
    choices: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Operator:
    name: str
    fn: object
    schema: dict[str, Param]
    doc: str = ""


@dataclass(frozen=True)
class StageSpec:
    op: str
    params: dict
    enabled: bool = True


@dataclass(frozen=True)
class PipelineSpec:
    name: str
    stages: tuple[StageSpec, ...]

    def to_json(self) -> str:
        return json.dumps({
            "name": self.name,
            "stages": [{"op": s.op, "params": s.params, "enabled": s.enabled}
                       for s in self.stages],
        }, sort_keys=True)


@dataclass(frozen=True)
class StageRecord:
    index: int
    op: str
    params_digest: str
    output_digest: str
    wall_time: float
    cache_hit: bool


@dataclass(frozen=True)
class RunRecord:
    input_digest: str
    stages: tuple[StageRecord, ...]

    @property
    def executed(self) -> int:
        return sum(1 for s in self.stages if not s.cache_hit)


# --- registry ---

_REGISTRY: dict[str, Operator] = {}


def register(name: str, schema: dict[str, Param], doc: str = ""):
    def wrap(fn):
        _REGISTRY[name] = Operator(name=name, fn=fn, schema=schema, doc=doc)
        return fn
    return wrap


def registry() -> dict[str, Operator]:
    return dict(_REGISTRY)


def _num(required=False, default=None):
    return Param(type="number", required=required, default=default)


def _string(required=False, default=None, choices=None):
    return Param(type="string", required=required, default=default,
                 choices=tuple(choices) if choices else None)


@register("window", {"w": _num(default=400.0), "l": _num(default=40.0)},
          "Window/level an HU slice into the 8-bit display domain")
def _op_window(img, w, l):
    return image.window_level(img, w, l)


@register("brightness", {"delta": _num(required=True)})
def _op_brightness(img, delta):
    return image.point_op(img, "brightness", delta=delta)


@register("contrast", {"factor": _num(required=True)})
def _op_contrast(img, factor):
    return image.point_op(img, "contrast", factor=factor)


@register("gamma", {"g": _num(required=True)})
def _op_gamma(img, g):
    return image.point_op(img, "gamma", g=g)


@register("invert", {})
def _op_invert(img):
    return image.point_op(img, "invert")


@register("hist_eq", {})
def _op_hist_eq(img):
    return image.histogram_equalize(img)


@register("thresh_simple", {"t": _num(required=True)})
def _op_thresh_simple(img, t):
    return image.threshold_simple(img, t)


@register("thresh_adaptive", {"window": _num(required=True), "c": _num(default=0.0)})
def _op_thresh_adaptive(img, window, c):
    return image.threshold_adaptive(img, int(window), c)


@register("thresh_otsu", {})
def _op_thresh_otsu(img):
    _, mask = image.threshold_otsu(img)
    return mask


@register("aniso", {"iterations": _num(default=10), "kappa": _num(default=30.0),
                    "lam": _num(default=0.25),
                    "conductance": _string(default="exponential",
                                           choices=("exponential", "rational"))})
def _op_aniso(img, iterations, kappa, lam, conductance):
    params = filters.DiffusionParams(iterations=int(iterations), kappa=kappa,
                                     lam=lam, conductance=conductance)
    return filters.anisotropic_diffusion(img, params)


@register("kmeans", {"k": _num(required=True), "seed": _num(default=0),
                     "max_iter": _num(default=100)},
          "Posterize to the k cluster centroids")
def _op_kmeans(img, k, seed, max_iter):
    labels, centroids = filters.kmeans_intensity(img, int(k), int(seed), int(max_iter))
    lut = np.zeros(256, dtype=np.float64)
    lut[:len(centroids)] = centroids
    posterized = lut[labels.data]
    if img.kind == UNIT:
        return ImageBuffer(np.clip(np.floor(posterized + 0.5), 0, 255).astype(np.uint8), UNIT)
    return ImageBuffer(posterized.astype(np.float32), HU)


@register("meanshift", {"spatial_radius": _num(default=5),
                        "range_radius": _num(default=20.0),
                        "max_iter": _num(default=10)})
def _op_meanshift(img, spatial_radius, range_radius, max_iter):
    return filters.mean_shift_filter(img, int(spatial_radius), range_radius,
                                     int(max_iter))


@register("wavelet_denoise", {"levels": _num(default=1),
                              "threshold": _num(default=0.0),
                              "mode": _string(default="soft", choices=("soft", "hard"))})
def _op_wavelet(img, levels, threshold, mode):
    return filters.wavelet_denoise(
        img, filters.WaveletParams(levels=int(levels), threshold=threshold, mode=mode))


@register("sobel", {})
def _op_sobel(img):
    return edges.gradient_edges(img, "sobel")


@register("prewitt", {})
def _op_prewitt(img):
    return edges.gradient_edges(img, "prewitt")


@register("laplace", {})
def _op_laplace(img):
    return edges.gradient_edges(img, "laplace")


@register("canny", {"sigma": _num(default=1.0), "low": _num(default=20.0),
                    "high": _num(default=60.0)})
def _op_canny(img, sigma, low, high):
    return edges.canny(img, sigma, low, high)


@register("hough_circles", {"r_min": _num(required=True), "r_max": _num(required=True),
                            "vote_threshold": _num(required=True)},
          "Render detected circles onto a binary mask")
def _op_hough(img, r_min, r_max, vote_threshold):
    hits = edges.hough_circles(img, int(r_min), int(r_max), int(vote_threshold))
    canvas = np.zeros(img.shape, dtype=bool)
    h, w = img.shape
    for hit in hits:
        for dy, dx in edges._circle_offsets(hit.radius):
            y, x = hit.center[1] + dy, hit.center[0] + dx
            if 0 <= y < h and 0 <= x < w:
                canvas[y, x] = True
    return image.from_mask(canvas)


@register("unsharp", {"sigma": _num(default=1.0), "amount": _num(default=1.0)})
def _op_unsharp(img, sigma, amount):
    return edges.unsharp_mask(img, sigma, amount)


_SE_SCHEMA = {"shape": _string(default="rect", choices=("rect", "cross", "ellipse")),
              "w": _num(default=3), "h": _num(default=3),
              "iterations": _num(default=1)}


def _morph_op(name):
    def fn(img, shape, w, h, iterations):
        se = morphology.StructuringElement(shape=shape, width=int(w), height=int(h))
        return morphology.morph(img, name, se, int(iterations))
    return fn


for _name in ("dilate", "erode", "open", "close", "tophat", "blackhat"):
    register(_name, dict(_SE_SCHEMA))(_morph_op(_name))
register("mgradient", dict(_SE_SCHEMA))(_morph_op("gradient"))


@register("thin", {})
def _op_thin(img):
    return morphology.thinning(img)


@register("cc", {"connectivity": _num(default=8)},
          "Label components; preview scales labels over the display range")
def _op_cc(img, connectivity):
    lm = regions.connected_components(img, int(connectivity))
    if lm.count == 0:
        return ImageBuffer(np.zeros(img.shape, dtype=np.uint8), UNIT)
    vals = (55.0 + lm.labels * (200.0 / lm.count)) * (lm.labels > 0)
    return ImageBuffer(np.clip(np.floor(vals + 0.5), 0, 255).astype(np.uint8), UNIT)


@register("floodfill", {"x": _num(required=True), "y": _num(required=True),
                        "value": _num(required=True), "tolerance": _num(default=0.0)})
def _op_floodfill(img, x, y, value, tolerance):
    return regions.flood_fill(img, (int(x), int(y)), value, tolerance)


@register("contours", {}, "Redraw every traced contour as a polyline mask")
def _op_contours(img):
    canvas = np.zeros(img.shape, dtype=bool)
    for c in regions.find_contours(img):
        canvas[c.points[:, 1], c.points[:, 0]] = True
    return image.from_mask(canvas)


@register("blob", {"min_threshold": _num(default=50.0), "max_threshold": _num(default=220.0),
                   "threshold_step": _num(default=10.0), "min_repeatability": _num(default=2),
                   "min_dist": _num(default=10.0)},
          "Mark detected blob centers as 3x3 squares")
def _op_blob(img, min_threshold, max_threshold, threshold_step, min_repeatability,
             min_dist):
    params = regions.BlobParams(min_threshold=min_threshold, max_threshold=max_threshold,
                                threshold_step=threshold_step,
                                min_repeatability=int(min_repeatability),
                                min_dist=min_dist)
    canvas = np.zeros(img.shape, dtype=bool)
    h, w = img.shape
    for b in regions.blob_detect(img, params):
        cx, cy = int(round(b.center[0])), int(round(b.center[1]))
        canvas[max(0, cy - 1):min(h, cy + 2), max(0, cx - 1):min(w, cx + 2)] = True
    return image.from_mask(canvas)


@register("mser", {"delta": _num(default=5), "min_area": _num(default=25),
                   "max_area": _num(default=10000), "max_variation": _num(default=0.25)},
          "Union of stable extremal regions as a mask")
def _op_mser(img, delta, min_area, max_area, max_variation):
    canvas = np.zeros(img.shape, dtype=bool)
    for r in regions.mser(img, int(delta), int(min_area), int(max_area), max_variation):
        canvas[r.points[:, 1], r.points[:, 0]] = True
    return image.from_mask(canvas)


@register("watershed", {"seeds": Param(type="coords", required=True)},
          "Flood the image as relief from seed coordinates; lines stay dark")
def _op_watershed(img, seeds):
    markers = regions.markers_from_seeds(img.shape, [tuple(s) for s in seeds])
    lm = regions.watershed(img, markers)
    if lm.count == 0:
        return ImageBuffer(np.zeros(img.shape, dtype=np.uint8), UNIT)
    vals = (55.0 + lm.labels * (200.0 / lm.count)) * (lm.labels > 0)
    return ImageBuffer(np.clip(np.floor(vals + 0.5), 0, 255).astype(np.uint8), UNIT)


@register("remove_couch", {}, "Zero everything but the patient body")
def _op_remove_couch(img):
    from . import femur
    return femur.remove_couch(img)


@register("isolate_bone", {"bone_hu": _num(default=200.0)})
def _op_isolate_bone(img, bone_hu):
    from . import femur
    return femur.isolate_bone(img, bone_hu)


# --- spec parsing and validation ---

def _validate_param_value(stage_idx: int, key: str, spec: Param, value):
    if spec.type == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise BadParamSchema(stage_idx, key, "expected a number")
    elif spec.type == "string":
        if not isinstance(value, str):
            raise BadParamSchema(stage_idx, key, "expected a string")
        if spec.choices and value not in spec.choices:
            raise BadParamSchema(stage_idx, key,
                                 f"must be one of {list(spec.choices)}")
    elif spec.type == "coords":
        ok = (isinstance(value, list) and
              all(isinstance(p, list) and len(p) == 2
                  and all(isinstance(c, (int, float)) and not isinstance(c, bool)
                          for c in p)
                  for p in value))
        if not ok:
            raise BadParamSchema(stage_idx, key, "expected a list of [x, y] pairs")


def validate_stage(stage_idx: int, op_name: str, params: dict) -> dict:
    """Check the op exists and the params fit its schema; fill defaults."""
    if op_name not in _REGISTRY:
        raise UnknownOp(op_name, stage_idx)
    schema = _REGISTRY[op_name].schema
    for key in params:
        if key not in schema:
            raise BadParamSchema(stage_idx, key, "unknown parameter")
    resolved = {}
    for key, spec in schema.items():
        if key in params:
            _validate_param_value(stage_idx, key, spec, params[key])
            resolved[key] = params[key]
        elif spec.required:
            raise BadParamSchema(stage_idx, key, "required parameter missing")
        else:
            resolved[key] = spec.default
    return resolved


def parse_pipeline_spec(text: str) -> PipelineSpec:
    """Parse and validate the pipeline JSON contract."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("name"), str) \
            or not isinstance(doc.get("stages"), list):
        raise ParseError(f"pipeline spec must look like {SPEC_SCHEMA_DOC}")
    stages = []
    for i, raw in enumerate(doc["stages"]):
        if not isinstance(raw, dict) or not isinstance(raw.get("op"), str):
            raise ParseError(f"stage {i} must be an object with an \"op\" name")
        params = raw.get("params", {})
        if not isinstance(params, dict):
            raise ParseError(f"stage {i} params must be an object")
        enabled = raw.get("enabled", True)
        if not isinstance(enabled, bool):
            raise ParseError(f"stage {i} enabled flag must be a boolean")
        resolved = validate_stage(i, raw["op"], params)
        stages.append(StageSpec(op=raw["op"], params=resolved, enabled=enabled))
    return PipelineSpec(name=doc["name"], stages=tuple(stages))


# --- cache store ---

def params_digest(op: str, params: dict) -> str:
    blob = json.dumps([op, params], sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(blob.encode(), digest_size=16).hexdigest()


def stage_key(op: str, params: dict, input_digest: str) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(params_digest(op, params).encode())
    h.update(input_digest.encode())
    return h.hexdigest()


def _serialize_buffer(img: ImageBuffer) -> bytes:
    head = json.dumps({"kind": img.kind, "shape": list(img.shape),
                       "dtype": str(img.data.dtype)}).encode()
    return len(head).to_bytes(4, "little") + head + img.data.tobytes()


def _deserialize_buffer(blob: bytes) -> ImageBuffer:
    n = int.from_bytes(blob[:4], "little")
    head = json.loads(blob[4:4 + n].decode())
    h, w = head["shape"]
    data = np.frombuffer(blob[4 + n:], dtype=head["dtype"])
    if data.size != h * w:
        raise ValueError("cache entry size does not match its dims")
    return ImageBuffer(data.reshape(h, w).copy(), head["kind"])


class CacheStore:
    """Content-addressed on-disk store with an in-memory LRU index.

    Concurrent writers of the same key produce identical bytes, so
    last-writer-wins renames are safe.
    """

    def __init__(self, root: str | Path, byte_budget: int = 1 << 30):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.byte_budget = byte_budget
        self._lock = threading.Lock()
        self._index: dict[str, int] = {}   # key -> size
        self._clock: dict[str, int] = {}   # key -> last-use tick
        self._tick = 0
        for p in self.root.glob("*.buf"):
            self._index[p.stem] = p.stat().st_size
            self._clock[p.stem] = self._tick
            self._tick += 1

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.buf"

    def get(self, key: str) -> ImageBuffer | None:
        with self._lock:
            known = key in self._index
            if known:
                self._tick += 1
                self._clock[key] = self._tick
        if not known:
            return None
        try:
            blob = self._path(key).read_bytes()
            return _deserialize_buffer(blob)
        except (OSError, ValueError, KeyError, json.JSONDecodeError):
            with self._lock:
                self._index.pop(key, None)
                self._clock.pop(key, None)
            return None

    def put(self, key: str, img: ImageBuffer):
        blob = _serialize_buffer(img)
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(blob)
            os.replace(tmp, self._path(key))
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise
        with self._lock:
            self._tick += 1
            self._index[key] = len(blob)
            self._clock[key] = self._tick
            total = sum(self._index.values())
            while total > self.byte_budget and len(self._index) > 1:
                victim = min(self._clock, key=self._clock.get)
                if victim == key:
                    break
                total -= self._index.pop(victim)
                self._clock.pop(victim)
                try:
                    self._path(victim).unlink()
                except OSError:
                    pass


# --- execution ---

def run_pipeline(spec: PipelineSpec, input_img: ImageBuffer,
                 cache: CacheStore | None = None
                 ) -> tuple[ImageBuffer, list[ImageBuffer], RunRecord]:
    """Run enabled stages in order, caching every stage output.

    On stage failure raises StageFailure with ``intermediates`` and
    ``record`` attributes holding everything produced so far.
    """
    cur = input_img
    input_digest = input_img.digest()
    intermediates: list[ImageBuffer] = []
    stage_records: list[StageRecord] = []
    for i, stage in enumerate(spec.stages):
        if not stage.enabled:
            continue
        key = stage_key(stage.op, stage.params, cur.digest())
        started = time.perf_counter()
        cached = cache.get(key) if cache is not None else None
        if cached is not None:
            out = cached
            hit = True
        else:
            op = _REGISTRY[stage.op]
            try:
                out = op.fn(cur, **stage.params)
            except FemursegError as exc:
                failure = StageFailure(i, exc)
                failure.intermediates = intermediates
                failure.record = RunRecord(input_digest=input_digest,
                                           stages=tuple(stage_records))
                raise failure from exc
            if cache is not None:
                cache.put(key, out)
            hit = False
        stage_records.append(StageRecord(
            index=i, op=stage.op,
            params_digest=params_digest(stage.op, stage.params),
            output_digest=out.digest(),
            wall_time=time.perf_counter() - started,
            cache_hit=hit))
        intermediates.append(out)
        cur = out
    record = RunRecord(input_digest=input_digest, stages=tuple(stage_records))
    return cur, intermediates, record
