"""HTTP API: series ingestion, slice previews, pipeline runs, delineation
jobs, exports, and blinded comparisons.

All responses carry a top-level ``"v": 1``; errors use a uniform
``{code, message, detail}`` body where ``code`` is the toolkit error class
name.  Sessions are content-addressed by volume digest and persisted on
disk, so a restarted service serves identical digests for identical
requests.
"""

from __future__ import annotations

import hashlib
import io
import json
import random
import threading
import zipfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image

from . import dicom, femur, pipeline
from .errors import (BadParam, BadParamSchema, FemursegError, ParseError,
                     StageFailure, UnknownOp)
from .image import HU, ImageBuffer, window_level

_STATUS = {
    "MissingMagic": 400, "UnsupportedTransferSyntax": 400, "MissingTag": 400,
    "TruncatedFile": 400, "InconsistentGeometry": 400, "NonUniformSpacing": 400,
    "DuplicateLocation": 400, "ParseError": 422, "UnknownOp": 422,
    "BadParamSchema": 422, "StageFailure": 422, "BadParam": 400,
    "OutOfBounds": 404, "OutOfRange": 404, "NotFound": 404,
}


class NotFound(FemursegError):
    pass


def _error_body(exc: FemursegError) -> dict:
    detail = {}
    if isinstance(exc, (UnknownOp, BadParamSchema, StageFailure)):
        detail["stage"] = exc.stage
    return {"code": exc.code, "message": str(exc), "detail": detail}


async def _json_body(request: Request) -> dict:
    raw = (await request.body()).decode("utf-8", errors="replace") or "{}"
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"request body is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("request body must be a JSON object")
    return doc


class SessionStore:
    """Disk layout: sessions/<sid>/{dicom/, pipelines/, jobs/, delineations/,
    votes.csv}, a shared pipeline cache, and compare-pair descriptors."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        (self.root / "compare").mkdir(parents=True, exist_ok=True)
        self.cache = pipeline.CacheStore(self.root / "cache")
        self._volumes: dict[str, dicom.CtVolume] = {}
        self._lock = threading.Lock()
        self._session_locks: dict[str, threading.Lock] = {}
        self._executor = ThreadPoolExecutor(max_workers=2)

    def session_dir(self, sid: str) -> Path:
        d = self.root / "sessions" / sid
        if not d.exists():
            raise NotFound(f"no session {sid}")
        return d

    def session_lock(self, sid: str) -> threading.Lock:
        with self._lock:
            return self._session_locks.setdefault(sid, threading.Lock())

    def create_session(self, files: list[bytes]) -> tuple[str, dicom.CtVolume]:
        parsed = [dicom.parse_dicom_file(b) for b in files]
        volume = dicom.assemble_series(parsed)
        sid = volume.digest()[:16]
        d = self.root / "sessions" / sid
        (d / "dicom").mkdir(parents=True, exist_ok=True)
        for sub in ("pipelines", "jobs", "delineations"):
            (d / sub).mkdir(exist_ok=True)
        for i, blob in enumerate(files):
            (d / "dicom" / f"{i:04d}.dcm").write_bytes(blob)
        with self._lock:
            self._volumes[sid] = volume
        return sid, volume

    def volume(self, sid: str) -> dicom.CtVolume:
        with self._lock:
            if sid in self._volumes:
                return self._volumes[sid]
        d = self.session_dir(sid)
        volume = dicom.read_series_dir(d / "dicom")
        with self._lock:
            self._volumes[sid] = volume
        return volume

    def save_image(self, img: ImageBuffer) -> str:
        digest = img.digest()
        self.cache.put(f"img-{digest}", img)
        return digest

    def load_image(self, digest: str) -> ImageBuffer:
        img = self.cache.get(f"img-{digest}")
        if img is None:
            raise NotFound(f"no image {digest}")
        return img


def _png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def _buffer_png(img: ImageBuffer, w: float = 400.0, l: float = 40.0) -> bytes:
    if img.kind == HU:
        return _png_bytes(window_level(img, w, l).data)
    return _png_bytes(img.data)


def create_app(store_dir: str | Path, frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="femurseg service")
    store = SessionStore(store_dir)
    app.state.store = store

    @app.exception_handler(FemursegError)
    async def _femurseg_error(_request, exc: FemursegError):
        return JSONResponse(status_code=_STATUS.get(exc.code, 400),
                            content=_error_body(exc))

    @app.get("/ops")
    def list_ops():
        ops = {}
        for name, op in sorted(pipeline.registry().items()):
            ops[name] = {
                "doc": op.doc,
                "params": {
                    key: {"type": p.type, "required": p.required,
                          "default": p.default,
                          "choices": list(p.choices) if p.choices else None}
                    for key, p in op.schema.items()
                },
            }
        return {"v": 1, "ops": ops}

    @app.post("/series", status_code=201)
    async def upload_series(request: Request):
        content_type = request.headers.get("content-type", "")
        files: list[bytes] = []
        if content_type.startswith("multipart/"):
            form = await request.form()
            for _, value in form.multi_items():
                if hasattr(value, "read"):
                    files.append(await value.read())
        else:
            body = await request.body()
            if body[:4] == b"PK\x03\x04":
                with zipfile.ZipFile(io.BytesIO(body)) as zf:
                    for name in sorted(zf.namelist()):
                        if not name.endswith("/"):
                            files.append(zf.read(name))
            elif body:
                files.append(body)
        if not files:
            raise BadParam("upload a zip or multipart set of DICOM files")
        sid, volume = store.create_session(files)
        return {"v": 1, "session": sid, "slices": len(volume),
                "rows": volume.rows, "cols": volume.cols}

    @app.get("/series/{sid}")
    def series_info(sid: str):
        volume = store.volume(sid)
        return {"v": 1, "session": sid, "slices": len(volume),
                "rows": volume.rows, "cols": volume.cols,
                "digest": volume.digest(),
                "pixel_spacing": list(volume.pixel_spacing),
                "slice_thickness": volume.slice_thickness}

    @app.get("/series/{sid}/slices/{index}.png")
    def slice_png(sid: str, index: int, w: float = 400.0, l: float = 40.0):
        volume = store.volume(sid)
        if not 0 <= index < len(volume):
            raise NotFound(f"slice {index} outside 0..{len(volume) - 1}")
        return Response(content=_buffer_png(volume.slice_image(index), w, l),
                        media_type="image/png")

    @app.get("/series/{sid}/images/{digest}.png")
    def image_png(sid: str, digest: str, w: float = 400.0, l: float = 40.0):
        store.session_dir(sid)
        return Response(content=_buffer_png(store.load_image(digest), w, l),
                        media_type="image/png")

    @app.post("/series/{sid}/pipelines", status_code=201)
    async def save_pipeline(sid: str, request: Request):
        d = store.session_dir(sid)
        text = (await request.body()).decode("utf-8", errors="replace")
        spec = pipeline.parse_pipeline_spec(text)
        (d / "pipelines" / f"{_safe_name(spec.name)}.json").write_text(spec.to_json())
        return {"v": 1, "name": spec.name}

    @app.get("/series/{sid}/pipelines")
    def list_pipelines(sid: str):
        d = store.session_dir(sid)
        names = []
        for p in sorted((d / "pipelines").glob("*.json")):
            names.append(json.loads(p.read_text())["name"])
        return {"v": 1, "pipelines": names}

    @app.get("/series/{sid}/pipelines/{name}")
    def get_pipeline(sid: str, name: str):
        d = store.session_dir(sid)
        p = d / "pipelines" / f"{_safe_name(name)}.json"
        if not p.exists():
            raise NotFound(f"no pipeline {name!r}")
        return json.loads(p.read_text())

    @app.post("/series/{sid}/run")
    async def run_pipeline_endpoint(sid: str, request: Request):
        body = await _json_body(request)
        volume = store.volume(sid)
        index = body.get("slice", 0)
        if not isinstance(index, int) or not 0 <= index < len(volume):
            raise NotFound(f"slice {index} outside 0..{len(volume) - 1}")
        ref = body.get("pipeline")
        if isinstance(ref, str):
            d = store.session_dir(sid)
            p = d / "pipelines" / f"{_safe_name(ref)}.json"
            if not p.exists():
                raise NotFound(f"no pipeline {ref!r}")
            spec = pipeline.parse_pipeline_spec(p.read_text())
        elif isinstance(ref, dict):
            spec = pipeline.parse_pipeline_spec(json.dumps(ref))
        else:
            raise BadParam("body must carry a pipeline name or inline spec")
        input_img = volume.slice_image(index)
        in_digest = store.save_image(input_img)
        try:
            output, intermediates, record = pipeline.run_pipeline(
                spec, input_img, store.cache)
        except StageFailure as exc:
            body = _error_body(exc)
            body["detail"]["intermediates"] = [
                {"index": rec.index, "op": rec.op,
                 "digest": store.save_image(img),
                 "preview": f"/series/{sid}/images/{store.save_image(img)}.png"}
                for rec, img in zip(exc.record.stages, exc.intermediates)]
            return JSONResponse(status_code=422, content=body)
        stages = []
        for rec, img in zip(record.stages, intermediates):
            digest = store.save_image(img)
            stages.append({"index": rec.index, "op": rec.op, "digest": digest,
                           "cache_hit": rec.cache_hit,
                           "wall_time": rec.wall_time,
                           "preview": f"/series/{sid}/images/{digest}.png"})
        return {"v": 1, "input": in_digest,
                "input_preview": f"/series/{sid}/images/{in_digest}.png",
                "stages": stages,
                "output": output.digest(), "executed": record.executed}

    @app.post("/series/{sid}/delineate", status_code=202)
    async def delineate(sid: str, request: Request):
        body = await _json_body(request)
        params_doc = body.get("params", {})
        params = _femur_params(params_doc)
        volume = store.volume(sid)
        jid = hashlib.blake2b(
            (sid + json.dumps(params_doc, sort_keys=True)).encode(),
            digest_size=6).hexdigest()
        d = store.session_dir(sid)
        job_path = d / "jobs" / f"{jid}.json"
        job_path.write_text(json.dumps(
            {"v": 1, "job": jid, "session": sid, "state": "queued",
             "params": params_doc}))

        def work():
            lock = store.session_lock(sid)
            with lock:
                _update_job(job_path, state="running")
                try:
                    result = femur.delineate_femur(volume, params)
                    if isinstance(result, tuple):
                        docs = [json.loads(femur.delineation_to_json(r, volume))
                                for r in result]
                        doc = {"v": 1, "both": docs}
                    else:
                        doc = json.loads(femur.delineation_to_json(result, volume))
                    (d / "delineations" / f"{jid}.json").write_text(
                        json.dumps(doc, sort_keys=True, separators=(",", ":")))
                    _update_job(job_path, state="done")
                except FemursegError as exc:
                    _update_job(job_path, state="failed",
                                error=_error_body(exc))
                except Exception as exc:  # keep the job table consistent
                    _update_job(job_path, state="failed",
                                error={"code": "InternalError",
                                       "message": str(exc), "detail": {}})

        store._executor.submit(work)
        return {"v": 1, "job": jid}

    @app.get("/jobs/{jid}")
    def job_state(jid: str):
        for job_path in (store.root / "sessions").glob(f"*/jobs/{jid}.json"):
            doc = json.loads(job_path.read_text())
            if doc["state"] == "done":
                sid = doc["session"]
                doc["result"] = {
                    "delineation": f"/series/{sid}/delineation/{jid}.json",
                    "overlays": f"/series/{sid}/delineation/{jid}/overlays/{{index}}.png",
                }
            return doc
        raise NotFound(f"no job {jid}")

    @app.get("/series/{sid}/delineation/{jid}.json")
    def delineation_json(sid: str, jid: str):
        d = store.session_dir(sid)
        p = d / "delineations" / f"{jid}.json"
        if not p.exists():
            raise NotFound(f"no delineation for job {jid}")
        return Response(content=p.read_text(), media_type="application/json")

    @app.get("/series/{sid}/delineation/{jid}/overlays/{index}.png")
    def overlay_png(sid: str, jid: str, index: int):
        d = store.session_dir(sid)
        p = d / "delineations" / f"{jid}.json"
        if not p.exists():
            raise NotFound(f"no delineation for job {jid}")
        volume = store.volume(sid)
        if not 0 <= index < len(volume):
            raise NotFound(f"slice {index} outside 0..{len(volume) - 1}")
        doc = json.loads(p.read_text())
        contours = []
        for part in doc.get("both", [doc]):
            for s in part.get("slices", []):
                if s["index"] == index:
                    contours.append(np.array(s["points_px"], dtype=np.int64))
        rgb = _render_overlay(volume.slice_image(index), contours)
        return Response(content=_png_bytes(rgb), media_type="image/png")

    @app.post("/compare")
    async def compare(request: Request):
        body = await _json_body(request)
        shuffle = bool(body.get("shuffle", True))
        refs = [body.get("left"), body.get("right")]
        if any(not isinstance(r, dict) or "session" not in r or "job" not in r
               for r in refs):
            raise BadParam("left and right must be {session, job, source?} refs")
        for r in refs:
            d = store.session_dir(r["session"])
            if not (d / "delineations" / f"{r['job']}.json").exists():
                raise NotFound(f"no delineation for job {r['job']}")
        pair_id = hashlib.blake2b(
            json.dumps(body, sort_keys=True).encode(), digest_size=6).hexdigest()
        order = [0, 1]
        if shuffle:
            order = random.Random(pair_id).sample([0, 1], 2)
        items = []
        for position, which in enumerate(order):
            r = refs[which]
            sid, jid = r["session"], r["job"]
            items.append({
                "id": f"{pair_id}-{position}",
                "delineation": f"/series/{sid}/delineation/{jid}.json",
                "overlays": f"/series/{sid}/delineation/{jid}/overlays/{{index}}.png",
            })
        (store.root / "compare" / f"{pair_id}.json").write_text(json.dumps({
            "pair": pair_id,
            "order": order,
            "sources": [refs[which].get("source", "automatic") for which in order],
            "refs": refs,
        }))
        return {"v": 1, "pair": pair_id, "items": items}

    @app.post("/compare/{pair_id}/verdict", status_code=201)
    async def verdict(pair_id: str, request: Request):
        from .evaluation import VoteRecord
        p = store.root / "compare" / f"{pair_id}.json"
        if not p.exists():
            raise NotFound(f"no comparison {pair_id}")
        meta = json.loads(p.read_text())
        body = await _json_body(request)
        survey = body.get("survey", "one")
        rater = str(body.get("rater", "anonymous"))
        region = body.get("region", "distal")
        verdict_value = body.get("verdict")
        if survey == "one":
            source = meta["sources"][0]  # provenance of the first position
        else:
            source = meta["sources"][int(body.get("position", 0))]
        record = VoteRecord(survey=survey, rater=rater, item=pair_id,
                            region=region, source=source, verdict=verdict_value)
        sid = meta["refs"][0]["session"]
        votes_path = store.session_dir(sid) / "votes.csv"
        with store.session_lock(sid):
            new = not votes_path.exists()
            with votes_path.open("a") as f:
                if new:
                    f.write("survey,rater,item,region,source,verdict\n")
                f.write(f"{record.survey},{record.rater},{record.item},"
                        f"{record.region},{record.source},{record.verdict}\n")
        return {"v": 1, "pair": pair_id, "recorded": True}

    @app.get("/series/{sid}/votes.csv")
    def votes_csv(sid: str):
        p = store.session_dir(sid) / "votes.csv"
        if not p.exists():
            raise NotFound("no votes recorded")
        return Response(content=p.read_text(), media_type="text/csv")

    if frontend_dir is not None and Path(frontend_dir).exists():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True),
                  name="frontend")
    return app


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name)[:80]


def _femur_params(doc: dict) -> femur.FemurParams:
    if not isinstance(doc, dict):
        raise BadParam("params must be an object")
    kwargs = {}
    if "bone_hu" in doc:
        kwargs["bone_hu"] = float(doc["bone_hu"])
    if "head_r_range" in doc:
        kwargs["head_r_range"] = (float(doc["head_r_range"][0]),
                                  float(doc["head_r_range"][1]))
    if "side" in doc:
        kwargs["side"] = doc["side"]
    if "seed" in doc:
        kwargs["seed"] = doc["seed"]
    return femur.FemurParams(**kwargs)


def _update_job(path: Path, **fields):
    doc = json.loads(path.read_text())
    doc.update(fields)
    path.write_text(json.dumps(doc))


def _render_overlay(slice_hu: ImageBuffer, contours: list[np.ndarray]) -> np.ndarray:
    from .regions import Contour
    objs = [Contour(points=c, area=0.0) for c in contours if len(c) >= 3]
    return femur.overlay_contour(slice_hu, objs)
