"""Command-line interface: exit codes, JSON output, staged output dirs."""

import json
import subprocess
import sys
from datetime import datetime, timezone

import numpy as np
import pytest

from riverwatch import synthetic
from riverwatch.cli import main
from riverwatch.forest import load_forest
from riverwatch.indices import IndexKind, compute_index
from riverwatch.monitor import AOI, MonitorService
from riverwatch.raster import load_scene, save_scene


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Scene, labels, and a trained model on disk, as a user would have them."""
    root = tmp_path_factory.mktemp("cliws")
    cmap = synthetic.five_class_layout(40, 40)
    scene = synthetic.scene_from_classes(cmap, scene_id="train-scene", seed=21)
    save_scene(scene, root / "scene")
    save_scene(synthetic.label_raster(cmap, scene), root / "labels")
    model = root / "model.json"
    code = main([
        "train",
        "--scene", str(root / "scene"),
        "--labels", str(root / "labels"),
        "--trees", "15",
        "--seed", "5",
        "--out", str(model),
    ])
    assert code == 0
    return root


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestParsing:
    def test_help_exits_zero(self, capsys):
        code, out, _ = run_cli(capsys, "--help")
        assert code == 0
        assert "subcommand" in out or "usage" in out

    def test_no_subcommand_is_usage_error(self, capsys):
        code, _, err = run_cli(capsys)
        assert code == 1
        assert "error" in err

    def test_unknown_flag_is_usage_error(self, capsys):
        code, _, err = run_cli(capsys, "index", "--bogus")
        assert code == 1

    def test_bad_index_choice_is_usage_error(self, capsys, workspace, tmp_path):
        code, _, err = run_cli(
            capsys, "index",
            "--scene", str(workspace / "scene"),
            "--index", "evi",
            "--out", str(tmp_path / "o"),
        )
        assert code == 1
        assert "invalid choice" in err


class TestIndex:
    def test_output_matches_direct_computation(self, capsys, workspace, tmp_path):
        out = tmp_path / "ndwi"
        code, stdout, _ = run_cli(
            capsys, "index",
            "--scene", str(workspace / "scene"),
            "--index", "ndwi",
            "--out", str(out),
        )
        assert code == 0
        doc = json.loads(stdout)
        assert doc == {"scene_id": "train-scene", "index": "ndwi", "out": str(out)}
        written = load_scene(out)
        assert written.metadata.band_labels == ("ndwi",)
        expected, _ = compute_index(load_scene(workspace / "scene"), IndexKind.NDWI)
        assert np.array_equal(written.samples[0], expected.astype(np.float32), equal_nan=True)

    def test_refuses_existing_output_dir(self, capsys, workspace, tmp_path):
        out = tmp_path / "taken"
        out.mkdir()
        (out / "sentinel.txt").write_text("keep me")
        code, _, err = run_cli(
            capsys, "index",
            "--scene", str(workspace / "scene"),
            "--index", "pi",
            "--out", str(out),
        )
        assert code == 2
        assert "already exists" in err
        assert (out / "sentinel.txt").read_text() == "keep me"

    def test_missing_scene_is_data_error(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys, "index",
            "--scene", str(tmp_path / "nope"),
            "--index", "pi",
            "--out", str(tmp_path / "o"),
        )
        assert code == 2
        assert not (tmp_path / "o").exists()


class TestTrain:
    def test_model_is_loadable(self, workspace):
        forest = load_forest(workspace / "model.json")
        assert len(forest.trees) == 15
        assert forest.feature_names == (
            "blue", "green", "red", "nir", "pi", "ndwi", "ndvi", "rndvi", "sr",
        )
        assert forest.class_names == (
            "waste", "water", "forest/meadow", "buildings", "bare ground",
        )

    def test_reports_training_shape(self, capsys, workspace, tmp_path):
        code, stdout, _ = run_cli(
            capsys, "train",
            "--scene", str(workspace / "scene"),
            "--labels", str(workspace / "labels"),
            "--trees", "3",
            "--out", str(tmp_path / "m.json"),
        )
        assert code == 0
        doc = json.loads(stdout)
        assert doc["n_samples"] == 1600
        assert doc["n_features"] == 9
        assert doc["seed"] == 42

    def test_label_shape_mismatch_is_data_error(self, capsys, workspace, tmp_path):
        other = synthetic.scene_from_classes(np.zeros((8, 8), np.int64))
        save_scene(synthetic.label_raster(np.zeros((8, 8), np.int64), other), tmp_path / "small")
        code, _, err = run_cli(
            capsys, "train",
            "--scene", str(workspace / "scene"),
            "--labels", str(tmp_path / "small"),
            "--out", str(tmp_path / "m.json"),
        )
        assert code == 2
        assert "dimensions" in err
        assert not (tmp_path / "m.json").exists()


class TestCv:
    def cv_args(self, workspace):
        return [
            "cv",
            "--scene", str(workspace / "scene"),
            "--labels", str(workspace / "labels"),
            "--trees", "5",
            "--k", "3",
        ]

    def test_runs_and_reports(self, capsys, workspace):
        code, stdout, _ = run_cli(capsys, *self.cv_args(workspace))
        assert code == 0
        doc = json.loads(stdout)
        assert doc["k"] == 3
        assert len(doc["fold_accuracies"]) == 3
        assert len(doc["confusion"]) == 5
        assert sum(map(sum, doc["confusion"])) == 1600
        assert doc["accuracy"] >= 0.95

    def test_repeat_runs_print_identical_output(self, capsys, workspace):
        _, first, _ = run_cli(capsys, *self.cv_args(workspace))
        _, second, _ = run_cli(capsys, *self.cv_args(workspace))
        assert first == second

    def test_k_below_two_is_data_error(self, capsys, workspace):
        code, _, err = run_cli(capsys, *self.cv_args(workspace)[:-2], "--k", "1")
        assert code == 2


class TestDetection:
    def test_classify_round_trip(self, capsys, workspace, tmp_path):
        out = tmp_path / "classified"
        code, stdout, _ = run_cli(
            capsys, "classify",
            "--scene", str(workspace / "scene"),
            "--model", str(workspace / "model.json"),
            "--out", str(out),
        )
        assert code == 0
        assert json.loads(stdout)["valid_pixels"] == 1600
        written = load_scene(out)
        assert written.metadata.band_labels == ("class_id", "confidence")

    def test_hotspot_writes_complete_artifact_dir(self, capsys, workspace, tmp_path):
        out = tmp_path / "det"
        code, stdout, _ = run_cli(
            capsys, "hotspot",
            "--scene", str(workspace / "scene"),
            "--model", str(workspace / "model.json"),
            "--out", str(out),
        )
        assert code == 0
        report = json.loads(stdout)
        assert report == json.loads((out / "report.json").read_text())
        assert report["pipeline"] == "hotspot"
        assert report["waste_pixels"] == 320  # top stripe of the 40x40 layout
        assert (out / "classified" / "bands.bin").is_file()
        assert (out / "overlay.png").is_file()
        assert (out / "heatmap.png").is_file()

    def test_blockage_accepts_kernel_size(self, capsys, workspace, tmp_path):
        code, stdout, _ = run_cli(
            capsys, "blockage",
            "--scene", str(workspace / "scene"),
            "--model", str(workspace / "model.json"),
            "--kernel-size", "3",
            "--out", str(tmp_path / "blk"),
        )
        assert code == 0
        assert json.loads(stdout)["pipeline"] == "blockage"

    def test_even_kernel_size_is_data_error(self, capsys, workspace, tmp_path):
        code, _, err = run_cli(
            capsys, "blockage",
            "--scene", str(workspace / "scene"),
            "--model", str(workspace / "model.json"),
            "--kernel-size", "4",
            "--out", str(tmp_path / "blk"),
        )
        assert code == 2
        assert not (tmp_path / "blk").exists()

    def test_missing_model_is_data_error(self, capsys, workspace, tmp_path):
        code, _, _ = run_cli(
            capsys, "hotspot",
            "--scene", str(workspace / "scene"),
            "--model", str(tmp_path / "ghost.json"),
            "--out", str(tmp_path / "det"),
        )
        assert code == 2
        assert not (tmp_path / "det").exists()


class TestRender:
    def test_matches_detection_artifacts(self, capsys, workspace, tmp_path):
        det = tmp_path / "det"
        run_cli(
            capsys, "hotspot",
            "--scene", str(workspace / "scene"),
            "--model", str(workspace / "model.json"),
            "--out", str(det),
        )
        rendered = tmp_path / "png"
        code, _, _ = run_cli(
            capsys, "render",
            "--classified", str(det / "classified"),
            "--out", str(rendered),
        )
        assert code == 0
        for name in ("overlay.png", "heatmap.png"):
            assert (rendered / name).read_bytes() == (det / name).read_bytes()

    def test_rejects_plain_scene(self, capsys, workspace, tmp_path):
        code, _, err = run_cli(
            capsys, "render",
            "--classified", str(workspace / "scene"),
            "--out", str(tmp_path / "png"),
        )
        assert code == 2
        assert not (tmp_path / "png").exists()


class TestMonitorPoll:
    def test_polls_registered_aois(self, capsys, workspace, tmp_path):
        store = tmp_path / "store"
        inbox = tmp_path / "inbox"
        with MonitorService(store, sleep=lambda s: None) as svc:
            svc.register_aoi(AOI(
                aoi_id="r1",
                name="Reach one",
                pipeline="hotspot",
                model_path=str(workspace / "model.json"),
                ingest_dir=str(inbox),
            ))
        cmap = np.full((20, 20), 2, dtype=np.int64)
        cmap[:2] = 0
        scene = synthetic.scene_from_classes(
            cmap, scene_id="p1", pixel_size_m=1.0, noise=0.0,
            acquired_at=datetime(2024, 7, 2, tzinfo=timezone.utc),
        )
        save_scene(scene, inbox / "p1")

        code, stdout, _ = run_cli(capsys, "monitor", "poll", "--store", str(store))
        assert code == 0
        assert json.loads(stdout)["ingested"] == [{"aoi_id": "r1", "scene_id": "p1"}]

        code, stdout, _ = run_cli(capsys, "monitor", "poll", "--store", str(store))
        assert code == 0
        assert json.loads(stdout) == {"ingested": [], "failed": [], "skipped": 1}


class TestErrorMapping:
    def test_unexpected_exception_is_internal_error(self, capsys, monkeypatch, workspace, tmp_path):
        import riverwatch.cli as cli_mod

        def boom(path):
            raise RuntimeError("simulated crash")

        monkeypatch.setattr(cli_mod, "load_scene", boom)
        code, _, err = run_cli(
            capsys, "index",
            "--scene", str(workspace / "scene"),
            "--index", "pi",
            "--out", str(tmp_path / "o"),
        )
        assert code == 3
        assert "simulated crash" in err


def test_console_script_is_installed():
    proc = subprocess.run(
        ["riverwatch", "--help"], capture_output=True, text=True, timeout=120
    )
    assert proc.returncode == 0
    assert "usage" in proc.stdout
