import json
from pathlib import Path

import numpy as np
import pytest

from femurseg.cli import main

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def phantom_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("phantom")
    truth = out / "truth.json"
    code = main(["phantom", "--out", str(out / "dicom"),
                 "--truth", str(truth)])
    assert code == 0
    return out / "dicom", truth


class TestPhantomAndIngest:
    def test_phantom_emits_dicom_series(self, phantom_dir, capsys):
        dicom_dir, truth = phantom_dir
        files = sorted(dicom_dir.glob("*.dcm"))
        assert len(files) == 60
        assert truth.exists()
        code = main(["--json", "ingest", str(dicom_dir)])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["slices"] == 60
        assert doc["rows"] == 256

    def test_ingest_bad_dir(self, tmp_path, capsys):
        (tmp_path / "junk.dcm").write_bytes(b"junk")
        assert main(["ingest", str(tmp_path)]) == 1
        assert "MissingMagic" in capsys.readouterr().err


class TestRun:
    def test_pipeline_on_phantom_slice(self, phantom_dir, tmp_path, capsys):
        dicom_dir, _ = phantom_dir
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({
            "name": "demo",
            "stages": [{"op": "window", "params": {"w": 1500, "l": 300}},
                       {"op": "thresh_otsu"}]}))
        out = tmp_path / "out"
        code = main(["--json", "run", str(spec), str(dicom_dir),
                     "--slice", "48", "--out", str(out)])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert len(doc["stages"]) == 2
        assert (out / "stage_01_thresh_otsu.png").exists()
        assert (out / "record.json").exists()

    def test_unknown_op_exits_1_with_stage(self, phantom_dir, tmp_path, capsys):
        dicom_dir, _ = phantom_dir
        spec = tmp_path / "bad.json"
        spec.write_text(json.dumps({
            "name": "bad", "stages": [{"op": "frobnicate"}]}))
        assert main(["run", str(spec), str(dicom_dir)]) == 1
        err = capsys.readouterr().err
        assert "stage 0" in err
        assert "UnknownOp" in err


class TestDelineateAndEval:
    def test_delineate_then_eval_against_truth(self, phantom_dir, tmp_path, capsys):
        dicom_dir, truth = phantom_dir
        pred = tmp_path / "pred.json"
        assert main(["delineate", str(dicom_dir), "--side", "left",
                     "--out", str(pred)]) == 0
        assert pred.exists()
        doc = json.loads(pred.read_text())
        assert doc["side"] == "left"
        capsys.readouterr()
        assert main(["--json", "eval", "--pred", str(pred),
                     "--truth", str(truth)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["volume_dice"] >= 0.95


class TestTally:
    def test_fixture_csv(self, capsys):
        assert main(["--json", "tally", str(DATA / "survey_votes.csv")]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["two/manual"]["none_needed"] == 77.8
        assert report["one/proximal"]["both"] == 90.0

    def test_missing_file_exits_1(self, capsys):
        assert main(["tally", "/nonexistent/votes.csv"]) == 1
