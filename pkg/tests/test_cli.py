import csv
import json

import numpy as np
import pytest

from tsom import cli
from tsom.circuit import TrialReport
from tsom.core import load_sequence

SMALL_SCENE = ["--background", "uniform", "--frame-size", "64", "--start", "20", "32", "--v-b", "0"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def scene(tmp_path):
    out = tmp_path / "scene"
    assert run("synth", "--out", out, "--n-frames", 6, *SMALL_SCENE) == 0
    return out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_synth_writes_frames_truth_and_manifest(scene):
    assert len(load_sequence(scene / "frames")) == 6
    rows = read_rows(scene / "groundtruth.csv")
    assert rows[0] == ["frame", "x", "y"] and rows[1] == ["0", "20", "32"] and rows[2] == ["1", "23", "32"]
    manifest = json.loads((scene / "manifest.json").read_text())
    assert manifest["command"] == "synth" and manifest["seed"] == 0
    assert set(manifest["artifacts"]) >= {"groundtruth.csv", "frames/frame0000.png"}


def test_detect_then_eval(scene, tmp_path, capsys):
    out = tmp_path / "det"
    assert run("detect", scene / "frames", "--out", out, "--debug-frames", 2, "--overlays") == 0
    rows = read_rows(out / "detections.csv")
    assert rows[0] == ["frame", "x", "y", "score"] and [r[0] for r in rows[1:]] == ["1", "2", "3", "4"]
    for layer in ("retina", "dendrite", "soma", "rt"):
        assert (out / "debug" / f"{layer}_t0002.png").is_file()
    assert len(list((out / "overlays").glob("*.png"))) == 4
    capsys.readouterr()
    assert run("eval", out / "detections.csv", scene / "groundtruth.csv", "--frames", "1:5") == 0
    assert capsys.readouterr().out.strip() == "D_R=1.0 F_A=0.0"


def test_eval_perfect_detections_with_reports(scene, tmp_path, capsys):
    dets = tmp_path / "perfect.csv"
    rows = read_rows(scene / "groundtruth.csv")
    dets.write_text("frame,x,y,score\n" + "".join(f"{f},{x},{y},1.0\n" for f, x, y in rows[1:]))
    out = tmp_path / "ev"
    assert run("eval", dets, scene / "groundtruth.csv", "--out", out, "--roc") == 0
    assert "D_R=1.0 F_A=0.0" in capsys.readouterr().out
    report = json.loads((out / "metrics.json").read_text())
    assert report["true_positives"] == 6 and report["false_positives"] == 0
    assert read_rows(out / "roc.csv")[-1][1:] == ["0.0", "1.0"]


def test_detect_csv_is_identical_across_thread_counts(scene, tmp_path):
    outputs = []
    for threads in (1, 2, 3):
        out = tmp_path / f"t{threads}"
        assert run("detect", scene / "frames", "--out", out, "--threads", threads, "--top-k", 3) == 0
        outputs.append((out / "detections.csv").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_synth_is_reproducible_from_seed(tmp_path):
    a, b, c = (tmp_path / n for n in "abc")
    for out, seed in ((a, 7), (b, 7), (c, 8)):
        assert run("synth", "--out", out, "--n-frames", 2, "--frame-size", 48, "--start", 10, 10, "--seed", seed) == 0
    assert (a / "frames" / "frame0001.png").read_bytes() == (b / "frames" / "frame0001.png").read_bytes()
    assert (a / "frames" / "frame0001.png").read_bytes() != (c / "frames" / "frame0001.png").read_bytes()


def test_config_file_sections(tmp_path, scene):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"pipeline": {"top_k": 2, "nms_radius": 0.0}}))
    out = tmp_path / "det"
    assert run("detect", scene / "frames", "--out", out, "--config", cfg) == 0
    assert len(read_rows(out / "detections.csv")) == 1 + 2 * 4
    assert json.loads((out / "manifest.json").read_text())["config"]["top_k"] == 2
    cfg.write_text(json.dumps({"pipeline": {"no_such_key": 1}}))
    assert run("detect", scene / "frames", "--out", tmp_path / "bad", "--config", cfg) == 3
    assert not (tmp_path / "bad").exists()


def test_tune_radius_has_twenty_rows(tmp_path):
    out = tmp_path / "tune"
    assert run("tune", "radius", "--out", out, "--response-frames", 3, *SMALL_SCENE) == 0
    rows = read_rows(out / "tune_radius.csv")
    assert rows[0][0] == "radius" and [float(r[0]) for r in rows[1:]] == list(range(1, 21))


def test_circuit_verify_report(tmp_path):
    out = tmp_path / "circ"
    assert run("circuit-verify", "--out", out, "--trials", 100000) == 0
    report = json.loads((out / "circuit_report.json").read_text())
    assert report["passed"] and report["violations"] == 0 and report["trials"] == 100000


def test_property_violation_exit_code(tmp_path, monkeypatch):
    bad = TrialReport(10, 1, 0.1, -0.1, 0, (1, 2), counterexample={"gap": 0.1})
    monkeypatch.setattr(cli, "verify_proposition", lambda *a, **k: bad)
    assert run("circuit-verify", "--out", tmp_path / "c", "--trials", 10) == 4


def test_empty_input_directory_leaves_no_outputs(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    out = tmp_path / "out"
    assert run("detect", empty, "--out", out) == 2
    assert not out.exists()


@pytest.mark.parametrize(
    "argv, code",
    [
        ([], 1),
        (["detect"], 1),
        (["tune", "speed", "--out", "x"], 1),
        (["circuit-verify", "--out", "x", "--trials", "0"], 1),
        (["eval", "missing.csv", "missing_gt.csv"], 2),
        (["synth", "--out", "OUT", "--radius", "0"], 3),
    ],
)
def test_exit_codes(argv, code, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(*argv) == code


def test_eval_bad_frame_range(scene, tmp_path):
    assert run("eval", scene / "groundtruth.csv", scene / "groundtruth.csv", "--frames", "4:2") == 1


def test_debug_frame_out_of_range(scene, tmp_path):
    assert run("detect", scene / "frames", "--out", tmp_path / "d", "--debug-frames", 0) == 3
    assert not (tmp_path / "d").exists()


def test_inputs_are_not_modified(scene, tmp_path):
    before = {p: p.read_bytes() for p in scene.rglob("*") if p.is_file()}
    run("detect", scene / "frames", "--out", tmp_path / "d")
    assert {p: p.read_bytes() for p in scene.rglob("*") if p.is_file()} == before
    assert np.isfinite(load_sequence(scene / "frames").frames).all()
