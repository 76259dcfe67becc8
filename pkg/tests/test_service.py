import io
import json
import time
import zipfile

import numpy as np
import pytest
from fastapi.testclient import TestClient

from femurseg import phantom
from femurseg.dicom import hu_to_raw, write_ct_slice
from femurseg.service import create_app
from test_dicom import fixture_bytes


def make_zip(blobs):
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for i, blob in enumerate(blobs):
            zf.writestr(f"slice{i:03d}.dcm", blob)
    return buf.getvalue()


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "store")
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def phantom_zip():
    volume, _ = phantom.make_phantom(sides=("left",))
    blobs = []
    for meta, img in volume.slices:
        raw = hu_to_raw(np.asarray(img.data), meta.rescale_slope,
                        meta.rescale_intercept).astype(np.uint16)
        blobs.append(write_ct_slice(meta, raw))
    return make_zip(blobs)


def upload_small(client):
    blobs = [fixture_bytes(z=float(z * 3), rows=4, cols=4,
                           pixels=np.full((4, 4), 100 + z, dtype=np.uint16))
             for z in range(3)]
    r = client.post("/series", content=make_zip(blobs),
                    headers={"content-type": "application/zip"})
    assert r.status_code == 201, r.text
    return r.json()


class TestSeries:
    def test_upload_zip_counts_slices(self, client):
        doc = upload_small(client)
        assert doc["v"] == 1
        assert doc["slices"] == 3
        assert doc["rows"] == 4 and doc["cols"] == 4

    def test_upload_multipart(self, client):
        blobs = [fixture_bytes(z=float(z * 3), rows=4, cols=4,
                               pixels=np.zeros((4, 4), dtype=np.uint16))
                 for z in range(2)]
        files = [("files", (f"s{i}.dcm", b, "application/dicom"))
                 for i, b in enumerate(blobs)]
        r = client.post("/series", files=files)
        assert r.status_code == 201
        assert r.json()["slices"] == 2

    def test_upload_bad_dicom_names_error(self, client):
        r = client.post("/series", content=make_zip([b"not dicom at all"]),
                        headers={"content-type": "application/zip"})
        assert r.status_code == 400
        assert r.json()["code"] == "MissingMagic"

    def test_unsupported_syntax_surfaced(self, client):
        from femurseg.dicom import write_ct_slice as w
        from test_dicom import small_meta
        blob = w(small_meta(), np.zeros((2, 2), dtype=np.uint16),
                 transfer_syntax="1.2.840.10008.1.2.4.50")
        r = client.post("/series", content=make_zip([blob, blob]),
                        headers={"content-type": "application/zip"})
        assert r.status_code == 400
        assert r.json()["code"] == "UnsupportedTransferSyntax"

    def test_slice_png_and_404(self, client):
        doc = upload_small(client)
        sid = doc["session"]
        ok = client.get(f"/series/{sid}/slices/0.png")
        assert ok.status_code == 200
        assert ok.headers["content-type"] == "image/png"
        assert ok.content[:8] == b"\x89PNG\r\n\x1a\n"
        missing = client.get(f"/series/{sid}/slices/99.png")
        assert missing.status_code == 404

    def test_ops_schema_served(self, client):
        r = client.get("/ops")
        assert r.status_code == 200
        ops = r.json()["ops"]
        assert "invert" in ops and "watershed" in ops
        assert ops["thresh_simple"]["params"]["t"]["required"] is True


class TestPipelines:
    def test_store_and_run_involution(self, client):
        sid = upload_small(client)["session"]
        spec = {"name": "inv2", "stages": [{"op": "window"}, {"op": "invert"},
                                           {"op": "invert"}]}
        r = client.post(f"/series/{sid}/pipelines", content=json.dumps(spec))
        assert r.status_code == 201
        run = client.post(f"/series/{sid}/run",
                          json={"pipeline": "inv2", "slice": 1})
        assert run.status_code == 200, run.text
        doc = run.json()
        # the two inverts cancel: final digest equals the window stage digest
        assert doc["stages"][-1]["digest"] == doc["stages"][0]["digest"]
        assert doc["output"] == doc["stages"][-1]["digest"]
        preview = client.get(doc["stages"][-1]["preview"])
        assert preview.status_code == 200

    def test_validation_error_carries_stage(self, client):
        sid = upload_small(client)["session"]
        bad = {"name": "x", "stages": [{"op": "invert"}, {"op": "frobnicate"}]}
        r = client.post(f"/series/{sid}/pipelines", content=json.dumps(bad))
        assert r.status_code == 422
        assert r.json()["code"] == "UnknownOp"
        assert r.json()["detail"]["stage"] == 1

    def test_run_prefix_matches_engine(self, client):
        sid = upload_small(client)["session"]
        full = {"name": "f", "stages": [{"op": "window"},
                                        {"op": "gamma", "params": {"g": 1.5}},
                                        {"op": "invert"}]}
        prefix = {"name": "p", "stages": full["stages"][:2]}
        r_full = client.post(f"/series/{sid}/run",
                             json={"pipeline": full, "slice": 0}).json()
        r_prefix = client.post(f"/series/{sid}/run",
                               json={"pipeline": prefix, "slice": 0}).json()
        assert r_full["stages"][1]["digest"] == r_prefix["output"]

    def test_rerun_all_cache_hits(self, client):
        sid = upload_small(client)["session"]
        spec = {"name": "c", "stages": [{"op": "window"}, {"op": "hist_eq"}]}
        first = client.post(f"/series/{sid}/run",
                            json={"pipeline": spec, "slice": 0}).json()
        second = client.post(f"/series/{sid}/run",
                             json={"pipeline": spec, "slice": 0}).json()
        assert first["executed"] == 2
        assert second["executed"] == 0
        assert all(s["cache_hit"] for s in second["stages"])

    def test_stage_failure_returns_intermediates(self, client):
        sid = upload_small(client)["session"]
        spec = {"name": "boom", "stages": [{"op": "window"},
                                           {"op": "thresh_simple", "params": {"t": 10}},
                                           {"op": "hist_eq"}]}
        r = client.post(f"/series/{sid}/run", json={"pipeline": spec, "slice": 0})
        assert r.status_code == 422
        doc = r.json()
        assert doc["code"] == "StageFailure"
        assert doc["detail"]["stage"] == 2
        assert len(doc["detail"]["intermediates"]) == 2


def wait_for_job(client, jid, timeout=120.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        doc = client.get(f"/jobs/{jid}").json()
        if doc["state"] in ("done", "failed"):
            return doc
        time.sleep(0.3)
    raise TimeoutError(f"job {jid} did not finish")


@pytest.fixture(scope="module")
def delineated(tmp_path_factory, phantom_zip):
    """One uploaded phantom with a finished delineation job."""
    store = tmp_path_factory.mktemp("svc-store")
    app = create_app(store)
    client = TestClient(app)
    sid = client.post("/series", content=phantom_zip,
                      headers={"content-type": "application/zip"}).json()["session"]
    jid = client.post(f"/series/{sid}/delineate",
                      json={"params": {"side": "left"}}).json()["job"]
    doc = wait_for_job(client, jid)
    assert doc["state"] == "done", doc
    return store, client, sid, jid


class TestDelineationJobs:
    def test_job_lifecycle_and_export(self, delineated):
        store, client, sid, jid = delineated
        doc = client.get(f"/jobs/{jid}").json()
        assert doc["state"] == "done"
        export = client.get(doc["result"]["delineation"])
        assert export.status_code == 200
        body = export.json()
        assert body["v"] == 1
        assert body["side"] == "left"
        assert body["slices"]
        overlay = client.get(f"/series/{sid}/delineation/{jid}/overlays/"
                             f"{body['slices'][0]['index']}.png")
        assert overlay.status_code == 200
        assert overlay.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_restart_serves_identical_artifacts(self, delineated, phantom_zip):
        store, client, sid, jid = delineated
        png_before = client.get(f"/series/{sid}/slices/30.png").content
        export_before = client.get(f"/series/{sid}/delineation/{jid}.json").content
        reopened = TestClient(create_app(store))
        png_after = reopened.get(f"/series/{sid}/slices/30.png").content
        export_after = reopened.get(f"/series/{sid}/delineation/{jid}.json").content
        assert png_before == png_after
        assert export_before == export_after

    def test_unknown_job_404(self, delineated):
        _, client, _, _ = delineated
        assert client.get("/jobs/ffffffffffff").status_code == 404


class TestCompare:
    def test_blinded_pair_and_votes(self, delineated):
        store, client, sid, jid = delineated
        r = client.post("/compare", json={
            "left": {"session": sid, "job": jid, "source": "manual"},
            "right": {"session": sid, "job": jid, "source": "automatic"},
            "shuffle": True})
        assert r.status_code == 200
        body = r.text
        assert "manual" not in body and "automatic" not in body
        pair = r.json()["pair"]
        assert len(r.json()["items"]) == 2
        v = client.post(f"/compare/{pair}/verdict",
                        json={"survey": "one", "rater": "r1",
                              "region": "distal", "verdict": "both"})
        assert v.status_code == 201
        csv_text = client.get(f"/series/{sid}/votes.csv").text
        assert csv_text.splitlines()[0] == "survey,rater,item,region,source,verdict"
        assert f"one,r1,{pair},distal," in csv_text
        # the hidden provenance was resolved server-side into the source column
        assert csv_text.strip().endswith(",both")
        source = csv_text.strip().splitlines()[-1].split(",")[4]
        assert source in ("manual", "automatic")

    def test_ten_pair_session_csv_accepted_by_tally_cli(self, delineated,
                                                        tmp_path, capsys):
        store, client, sid, jid = delineated
        pairs = []
        for i in range(10):
            r = client.post("/compare", json={
                "left": {"session": sid, "job": jid, "source": "manual"},
                "right": {"session": sid, "job": jid, "source": "automatic"},
                "shuffle": True, "nonce": i})
            pairs.append(r.json()["pair"])
        for i, pair in enumerate(pairs):
            verdict = ["none_needed", "small", "medium", "large"][i % 4]
            r = client.post(f"/compare/{pair}/verdict",
                            json={"survey": "two", "rater": "r2",
                                  "region": "medial", "verdict": verdict,
                                  "position": i % 2})
            assert r.status_code == 201
        csv_text = client.get(f"/series/{sid}/votes.csv").text
        csv_path = tmp_path / "session_votes.csv"
        csv_path.write_text(csv_text)
        from femurseg.cli import main
        assert main(["--json", "tally", str(csv_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert any(key.startswith("two/") for key in report)
        for verdicts in report.values():
            assert abs(sum(verdicts.values()) - 100.0) <= 0.1

    def test_compare_missing_job_404(self, delineated):
        _, client, sid, _ = delineated
        r = client.post("/compare", json={
            "left": {"session": sid, "job": "nope"},
            "right": {"session": sid, "job": "nope"}})
        assert r.status_code == 404
