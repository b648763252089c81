import json

import numpy as np
import pytest

from rplgmr import imageio, serialize
from rplgmr.cli import (
    EXIT_INPUT,
    EXIT_NO_INPUTS,
    EXIT_OK,
    EXIT_USAGE,
    image_key,
    main,
)
from rplgmr.geometry import box_corner_scene

W, H = 64, 48
FAST = ["--k", "10", "--max-iters", "20"]


@pytest.fixture
def scene_file(tmp_path):
    d = serialize.scene_to_dict("corner", box_corner_scene(W, H, noise_sigma=0.3), W, H, 3)
    p = tmp_path / "scene.json"
    p.write_text(json.dumps({"scenes": [d]}))
    return p


def _errors(capsys):
    out = capsys.readouterr().out
    return [json.loads(line) for line in out.splitlines() if line.startswith("{")]


def test_image_key():
    assert image_key("a/b/img01.depth.pgm") == "img01"
    assert image_key("img01.seg.pgm") == "img01"
    assert image_key("img01.pgm") == "img01"


def test_synth_segment_evaluate_render(tmp_path, scene_file, capsys):
    data = tmp_path / "data"
    assert main(["synth", str(scene_file), "--out-dir", str(data)]) == EXIT_OK
    assert sorted(p.name for p in data.iterdir()) == ["corner.depth.pgm", "corner.depth.txt",
                                                      "corner.gt.pgm"]
    out = tmp_path / "seg"
    assert main(["segment", str(data), "--out-dir", str(out), "--render", *FAST]) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == ["corner.fit.log", "corner.kept.rle", "corner.mixture.json",
                     "corner.planes.json", "corner.render.ppm", "corner.seg.pgm"]
    labels = imageio.read_pnm(out / "corner.seg.pgm")
    assert labels.shape == (H, W)
    assert set(np.unique(labels)) - {0} == {1, 2, 3}
    planes = json.loads((out / "corner.planes.json").read_text())
    assert [p["label"] for p in planes["planes"]] == [1, 2, 3]
    kept = serialize.rle_decode((out / "corner.kept.rle").read_bytes())
    assert kept.size == W * H
    log = (out / "corner.fit.log").read_text().splitlines()
    assert log[0].startswith("iter=0 L=")

    rep_dir = tmp_path / "report"
    capsys.readouterr()
    assert main(["evaluate", "--machine-dir", str(out), "--gt-dir", str(data),
                 "--depth-dir", str(data), "--out-dir", str(rep_dir)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "Correctly detected" in text
    report = json.loads((rep_dir / "report.json").read_text())
    assert report["images"][0]["correct"] == 3
    assert report["average"]["orientation_deviation_deg"] < 1.0

    assert main(["render", str(out / "corner.seg.pgm"), "-o", str(tmp_path / "r.ppm")]) == EXIT_OK
    rgb = imageio.read_pnm(tmp_path / "r.ppm")
    np.testing.assert_array_equal(rgb, imageio.render_labels(labels))


def test_segment_is_deterministic(tmp_path, scene_file):
    data = tmp_path / "data"
    main(["synth", str(scene_file), "--out-dir", str(data)])
    outs = []
    for run in ("a", "b"):
        d = tmp_path / run
        assert main(["segment", str(data / "corner.depth.pgm"), "--out-dir", str(d),
                     "--seed", "4", *FAST]) == EXIT_OK
        outs.append({p.name: p.read_bytes() for p in d.iterdir()})
    assert outs[0] == outs[1]


def test_evaluate_identical_dirs(tmp_path, scene_file):
    data = tmp_path / "data"
    main(["synth", str(scene_file), "--out-dir", str(data)])
    gt = imageio.read_pnm(data / "corner.gt.pgm")
    assert main(["evaluate", "--machine-dir", str(data), "--gt-dir", str(data),
                 "--out-dir", str(tmp_path / "r")]) == EXIT_OK
    avg = json.loads((tmp_path / "r" / "report.json").read_text())["average"]
    assert avg["correct"] == len(np.unique(gt[gt > 0]))
    assert avg["missed"] == avg["spurious"] == avg["over_segmented"] == 0


def test_empty_inputs(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["segment", str(tmp_path / "empty"), "--out-dir", str(tmp_path)]) == EXIT_NO_INPUTS
    assert main(["evaluate", "--machine-dir", str(tmp_path / "empty"),
                 "--gt-dir", str(tmp_path / "empty")]) == EXIT_NO_INPUTS
    assert main(["render"]) == EXIT_NO_INPUTS
    assert {e["error"] for e in _errors(capsys)} == {"no_inputs"}


def test_invalid_depth_writes_nothing(tmp_path, capsys):
    bad = tmp_path / "blank.depth.pgm"
    imageio.atomic_write(bad, imageio.pgm_bytes(np.zeros((8, 8), dtype=int)))
    out = tmp_path / "out"
    assert main(["segment", str(bad), "--out-dir", str(out), "--k", "2"]) == EXIT_INPUT
    assert not out.exists() or not any(out.iterdir())
    (err,) = _errors(capsys)
    assert err["error"] == "input_error"
    assert err["input"] == str(bad)


def test_unreadable_render_input(tmp_path, capsys):
    p = tmp_path / "junk.pgm"
    p.write_bytes(b"not an image")
    assert main(["render", str(p), "--out-dir", str(tmp_path)]) == EXIT_INPUT
    assert _errors(capsys)[0]["error"] == "input_error"


def test_bad_scene_document(tmp_path, capsys):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"width": 10, "height": 10, "planes": [
        {"gradient": [0, 0, 0.5], "polygon": [[0, 0], [4, 4], [4, 0], [0, 4]]}]}))
    assert main(["synth", str(p), "--out-dir", str(tmp_path / "o")]) == EXIT_INPUT
    assert _errors(capsys)[0]["error"] == "input_error"
    assert not (tmp_path / "o").exists()


def test_config_file_rejects_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"preset": "perceptron", "bogus": 1}))
    assert main(["render", "--config", str(cfg)]) == EXIT_USAGE
    assert _errors(capsys)[0]["error"] == "config_error"
