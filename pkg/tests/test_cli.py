import json
import subprocess
import sys

import numpy as np
import pytest

from railpath import formats
from railpath.cli import main
from railpath.geometry import GridDims, Mode, RailPolyline, Scene, Track

SMALL = ["--width", "240", "--height", "135"]


@pytest.fixture
def image(tmp_path):
    d = tmp_path / "img"
    assert main(["synth", "--out", str(d), *SMALL, "--switches", "1", "--curvature", "20", "--seed", "4"]) == 0
    return d


def test_synth_writes_the_bundle(image):
    names = sorted(p.name for p in image.iterdir())
    assert names == ["center.tpeh", "dist_left.tpeh", "dist_right.tpeh", "prob.tpeh", "scene.json", "seg.tpeh"]
    assert formats.load_heatmap(image / "center.tpeh").shape == (135, 240)
    assert not any(p.name.endswith(".tmp") for p in image.iterdir())


def test_synth_noise_touches_only_the_center_map(tmp_path, image):
    noisy = tmp_path / "noisy"
    args = ["synth", "--out", str(noisy), *SMALL, "--switches", "1", "--curvature", "20", "--seed", "4"]
    assert main(args + ["--noise-sigma", "0.5", "--noise-seed", "9"]) == 0
    assert (noisy / "prob.tpeh").read_bytes() == (image / "prob.tpeh").read_bytes()
    assert (noisy / "center.tpeh").read_bytes() != (image / "center.tpeh").read_bytes()


def test_extract_eval_render(tmp_path, image, capsys):
    assert main(["extract", str(image)]) == 0
    doc = formats.load_paths(image / "paths.json")
    assert len(doc.paths) == 2
    out = tmp_path / "metrics.json"
    assert main(["eval", str(image), "--out", str(out), "--pred-seg", "seg.tpeh"]) == 0
    report = json.loads(out.read_text())
    assert report["format"] == "railpath.metrics/1"
    assert report["summary"]["path"]["micro"]["recall"] == 1.0
    assert report["images"][0]["miou"] == 1.0
    assert json.loads(capsys.readouterr().out)["tp_pixel"]["micro"]["precision"] == 1.0
    pngs = tmp_path / "png"
    assert main(["render", str(image), "--out", str(pngs)]) == 0
    assert sorted(p.name for p in pngs.iterdir()) == ["overview.png", "path_000.png", "path_001.png"]


def test_extract_three_channel_with_snap(image):
    assert main(["extract", str(image), "--three-channel", "--seg", "seg.tpeh"]) == 0
    doc = formats.load_paths(image / "paths.json")
    assert doc.mode is Mode.THREE_CHANNEL
    assert len(doc.paths) == 2


def test_flags_override_config_file(tmp_path, image):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"tree": {"tau_seg": 7.0, "max_gap": 11}, "fit_degree": 2}))
    assert main(["extract", str(image), "--config", str(cfg), "--tau-seg", "9"]) == 0
    echo = formats.load_paths(image / "paths.json").config
    assert echo["tree"]["tau_seg"] == 9.0
    assert echo["tree"]["max_gap"] == 11
    assert echo["fit_degree"] == 2


def test_gtgen_matches_synth(tmp_path, image):
    out = tmp_path / "again"
    assert main(["gtgen", str(image / "scene.json"), "--out", str(out)]) == 0
    for name in ("center.tpeh", "prob.tpeh", "seg.tpeh", "scene.json"):
        assert (out / name).read_bytes() == (image / name).read_bytes()


def test_jobs_give_the_same_documents(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "grid"), "--width", "192", "--height", "108", "--grid", "--jobs", "2"]) == 0
    dirs = sorted(str(p) for p in (tmp_path / "grid").iterdir())[:4]
    assert main(["extract", *dirs]) == 0
    serial = [formats.load_paths(f"{d}/paths.json") for d in dirs]
    assert main(["extract", *dirs, "--jobs", "2"]) == 0
    assert [formats.load_paths(f"{d}/paths.json") for d in dirs] == serial


def test_bench(capsys):
    assert main(["bench", "--runs", "2", *SMALL]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["runs"] == 2 and out["median_ms"] > 0


class TestExitCodes:
    def test_bad_arguments(self):
        with pytest.raises(SystemExit) as exc:
            main(["extract"])
        assert exc.value.code == 1
        with pytest.raises(SystemExit) as exc:
            main(["bench", "--runs", "many"])
        assert exc.value.code == 1

    def test_invalid_input(self, tmp_path, image):
        (image / "center.tpeh").write_bytes(b"NOPE" + bytes(20))
        assert main(["extract", str(image)]) == 1
        bad = tmp_path / "bad.json"
        bad.write_text('{"width": 8}')
        assert main(["gtgen", str(bad), "--out", str(tmp_path / "o")]) == 1
        assert main(["bench", "--runs", "0"]) == 1

    def test_unknown_config_key(self, tmp_path, image):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"tree": {"nope": 1}}))
        assert main(["extract", str(image), "--config", str(cfg)]) == 1

    def test_missing_file(self, tmp_path):
        assert main(["extract", str(tmp_path / "nowhere")]) == 2
        assert main(["gtgen", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2

    def test_no_start_path(self, tmp_path):
        d = tmp_path / "side"
        dims = GridDims(120, 60)
        track = Track(0, RailPolyline(((2.0, 0.0), (2.0, 59.0))), RailPolyline(((12.0, 0.0), (12.0, 59.0))))
        formats.save_scene(Scene(dims, (track,)), tmp_path / "side.json")
        assert main(["gtgen", str(tmp_path / "side.json"), "--out", str(d)]) == 0
        assert main(["extract", str(d)]) == 3
        doc = formats.load_paths(d / "paths.json")
        assert doc.tree is None and doc.paths == ()

    def test_highest_code_wins(self, tmp_path, image):
        assert main(["extract", str(image), str(tmp_path / "nowhere")]) == 2
        assert (image / "paths.json").exists()  # the good image is still processed

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "railpath", "extract", str(tmp_path / "x")], capture_output=True, text=True)
        assert proc.returncode == 2
        assert "center.tpeh" in proc.stderr


def test_noise_flag_validation(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "n"), *SMALL, "--dropout", "2"]) == 1


def test_eval_counts_missing_documents(tmp_path, image):
    # an image whose extraction found nothing contributes its GT paths as misses
    formats.save_paths(formats.PathsDocument(GridDims(240, 135), Mode.ONE_CHANNEL), image / "paths.json")
    out = tmp_path / "m.json"
    assert main(["eval", str(image), "--out", str(out)]) == 0
    row = json.loads(out.read_text())["images"][0]
    assert row["no_start_path"] is True
    assert row["path"]["fn"] == 2 and row["path"]["recall"] == 0.0
    assert np.isclose(row["all_pixel"]["recall"], 0.0)
