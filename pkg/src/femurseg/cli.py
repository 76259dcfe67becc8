"""Command-line interface.

Subcommands: ingest, run, delineate, eval, tally, phantom, serve.
Exit codes: 0 success, 1 user error (bad input or validation), 2 internal.
Pass --json for machine-readable stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dicom, evaluation, femur, phantom, pipeline
from .errors import FemursegError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="femurseg")
    parser.add_argument("--json", action="store_true",
                        help="machine-readable JSON on stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a DICOM directory into a volume")
    p.add_argument("directory")

    p = sub.add_parser("run", help="run a pipeline spec on one slice")
    p.add_argument("spec", help="pipeline spec JSON file")
    p.add_argument("directory", help="DICOM series directory")
    p.add_argument("--slice", type=int, default=0)
    p.add_argument("--out", help="directory for stage previews and the record")

    p = sub.add_parser("delineate", help="delineate the femoral head")
    p.add_argument("directory", help="DICOM series directory")
    p.add_argument("--side", default="left", choices=["left", "right", "both"])
    p.add_argument("--params", help="FemurParams overrides as JSON")
    p.add_argument("--out", default="delineation.json")

    p = sub.add_parser("eval", help="compare two delineation exports")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)

    p = sub.add_parser("tally", help="tally a votes CSV")
    p.add_argument("votes", help="CSV: survey,rater,item,region,source,verdict")

    p = sub.add_parser("phantom", help="emit the synthetic hip phantom")
    p.add_argument("--out", required=True, help="output DICOM directory")
    p.add_argument("--contact", action="store_true",
                   help="weld head and shell over a contact patch")
    p.add_argument("--truth", help="also write ground-truth delineation JSON here")

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--store", default="femurseg-store")
    p.add_argument("--frontend", help="static frontend directory to mount at /")
    return parser


def _emit(args, doc: dict, text: str):
    if args.json:
        print(json.dumps(doc, sort_keys=True))
    else:
        print(text)


def _cmd_ingest(args) -> int:
    volume = dicom.read_series_dir(args.directory)
    _emit(args, {"slices": len(volume), "rows": volume.rows,
                 "cols": volume.cols, "digest": volume.digest(),
                 "slice_thickness": volume.slice_thickness},
          f"{len(volume)} slices, {volume.rows}x{volume.cols}, "
          f"thickness {volume.slice_thickness} mm, digest {volume.digest()}")
    return 0


def _cmd_run(args) -> int:
    spec = pipeline.parse_pipeline_spec(Path(args.spec).read_text())
    volume = dicom.read_series_dir(args.directory)
    if not 0 <= args.slice < len(volume):
        raise FemursegError(f"slice {args.slice} outside 0..{len(volume) - 1}")
    cache = None
    out_dir = None
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        cache = pipeline.CacheStore(out_dir / "cache")
    output, intermediates, record = pipeline.run_pipeline(
        spec, volume.slice_image(args.slice), cache)
    if out_dir is not None:
        from PIL import Image

        from .image import HU, window_level
        for rec, img in zip(record.stages, intermediates):
            arr = window_level(img).data if img.kind == HU else img.data
            Image.fromarray(arr).save(out_dir / f"stage_{rec.index:02d}_{rec.op}.png")
        (out_dir / "record.json").write_text(json.dumps({
            "input": record.input_digest,
            "stages": [{"index": s.index, "op": s.op, "digest": s.output_digest,
                        "cache_hit": s.cache_hit} for s in record.stages],
        }, indent=2))
    _emit(args, {"input": record.input_digest, "output": output.digest(),
                 "stages": [{"index": s.index, "op": s.op,
                             "digest": s.output_digest} for s in record.stages],
                 "executed": record.executed},
          f"ran {len(record.stages)} stages, output digest {output.digest()}")
    return 0


def _cmd_delineate(args) -> int:
    volume = dicom.read_series_dir(args.directory)
    overrides = json.loads(args.params) if args.params else {}
    overrides.setdefault("side", args.side)
    if "head_r_range" in overrides:
        overrides["head_r_range"] = tuple(overrides["head_r_range"])
    params = femur.FemurParams(**overrides)
    result = femur.delineate_femur(volume, params)
    out = Path(args.out)
    if isinstance(result, tuple):
        docs = [json.loads(femur.delineation_to_json(r, volume)) for r in result]
        out.write_text(json.dumps({"v": 1, "both": docs},
                                  sort_keys=True, separators=(",", ":")))
    else:
        out.write_text(femur.delineation_to_json(result, volume))
    sides = [r.side for r in (result if isinstance(result, tuple) else (result,))]
    _emit(args, {"out": str(out), "sides": sides},
          f"wrote delineation for {', '.join(sides)} to {out}")
    return 0


def _slices_to_masks(doc: dict, shape: tuple[int, int]) -> dict[int, np.ndarray]:
    from .geometry import contour_to_mask
    masks = {}
    for part in doc.get("both", [doc]):
        for s in part["slices"]:
            pts = np.array(s["points_px"], dtype=np.int64)
            m = contour_to_mask(pts, shape)
            masks[s["index"]] = masks.get(s["index"], np.zeros(shape, bool)) | m
    return masks


def _cmd_eval(args) -> int:
    pred_doc = json.loads(Path(args.pred).read_text())
    truth_doc = json.loads(Path(args.truth).read_text())
    first = (pred_doc.get("both") or [pred_doc])[0]["slices"]
    extent = max(max(x for x, y in s["points_px"]) for s in first)
    extent = max(extent, max(max(y for x, y in s["points_px"]) for s in first)) + 8
    shape = (extent, extent)
    pred = _slices_to_masks(pred_doc, shape)
    truth = _slices_to_masks(truth_doc, shape)
    indices = sorted(set(pred) | set(truth))
    inter = na = nb = 0
    per_slice = {}
    for i in indices:
        a = pred.get(i, np.zeros(shape, bool))
        b = truth.get(i, np.zeros(shape, bool))
        inter += int((a & b).sum())
        na += int(a.sum())
        nb += int(b.sum())
        per_slice[i] = evaluation.dice(a, b)
    volume_dice = 1.0 if (na + nb) == 0 else 2.0 * inter / (na + nb)
    doc = {"volume_dice": round(volume_dice, 6),
           "slices": {str(i): round(d, 6) for i, d in per_slice.items()},
           "common_slices": len(indices)}
    _emit(args, doc, f"volume dice {volume_dice:.4f} over {len(indices)} slices")
    return 0


def _cmd_tally(args) -> int:
    votes = evaluation.votes_from_csv(Path(args.votes).read_text())
    report = evaluation.tally_survey(votes)
    _emit(args, report, json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_phantom(args) -> int:
    volume, truth = phantom.write_phantom_series(args.out, contact=args.contact)
    doc = {"out": args.out, "slices": len(volume),
           "start": truth.start, "stop": truth.stop,
           "lt_end": truth.lt_end, "gt_end": truth.gt_end}
    if args.truth:
        Path(args.truth).write_text(_truth_export(volume, truth, "left"))
        doc["truth"] = args.truth
    _emit(args, doc,
          f"wrote {len(volume)}-slice phantom to {args.out} "
          f"(zones {truth.start}..{truth.lt_end}/{truth.gt_end}/{truth.stop})")
    return 0


def _truth_export(volume, truth, side: str) -> str:
    from .image import from_mask
    from .regions import find_contours
    slices = []
    for i in range(truth.start, truth.stop + 1):
        mask = truth.femur_masks[side][i]
        outer = [c for c in find_contours(from_mask(mask)) if not c.is_hole]
        meta = volume.slices[i][0]
        pts = [[int(x), int(y)] for x, y in outer[0].points]
        ox, oy, oz = meta.image_position
        slices.append({"index": i, "z_mm": round(oz, 6),
                       "region": truth.region_of(i), "points_px": pts,
                       "points_mm": [[round(ox + x * meta.pixel_spacing[1], 6),
                                      round(oy + y * meta.pixel_spacing[0], 6),
                                      round(oz, 6)] for x, y in pts]})
    return json.dumps({"v": 1, "side": side, "volume_digest": volume.digest(),
                       "slices": slices}, sort_keys=True, separators=(",", ":"))


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(args.store, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "run": _cmd_run,
    "delineate": _cmd_delineate,
    "eval": _cmd_eval,
    "tally": _cmd_tally,
    "phantom": _cmd_phantom,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FemursegError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - internal failures
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
