import json

import numpy as np
import pytest
from PIL import Image

from landmark_sr.cli import main
from landmark_sr.data import save_image
from landmark_sr.heatmap import load_heatmap_manifest
from landmark_sr.model import ModelConfig, build, count_macs, count_params, save_checkpoint
from landmark_sr.synth import write_synthetic_dataset

TINY = ModelConfig(
    base_channels=4, channel_schedule=(4, 6, 8, 10), refinement_blocks=1, refinement_width=4
)


def _heatmap_args(root, out=None):
    return [
        "heatmaps",
        "--detections", str(root / "detections.jsonl"),
        "--hr-dir", str(root / "hr"),
        "--out-dir", str(out or (root / "heatmaps")),
    ]


class TestHeatmapsCommand:
    def test_three_image_fixture(self, tmp_path, capsys):
        write_synthetic_dataset(tmp_path, 3, seed=2)
        assert main(_heatmap_args(tmp_path)) == 0
        index = load_heatmap_manifest(tmp_path / "heatmaps" / "manifest.json")
        assert len(index) == 3
        for image_id, rel in index.items():
            arr = np.array(Image.open(tmp_path / rel))
            assert arr.dtype == np.uint16
            assert arr.max() == 65535  # edges exist, so the peak saturates

    def test_empty_detections_file(self, tmp_path):
        (tmp_path / "hr").mkdir()
        (tmp_path / "det.jsonl").write_text("")
        rc = main([
            "heatmaps", "--detections", str(tmp_path / "det.jsonl"),
            "--hr-dir", str(tmp_path / "hr"), "--out-dir", str(tmp_path / "maps"),
        ])
        assert rc == 0
        index = load_heatmap_manifest(tmp_path / "maps" / "manifest.json")
        assert index == {}
        assert list((tmp_path / "maps").glob("*.png")) == []

    def test_rerun_is_byte_identical(self, tmp_path):
        write_synthetic_dataset(tmp_path, 2, seed=3)
        assert main(_heatmap_args(tmp_path)) == 0
        first = {
            p.name: p.read_bytes()
            for p in (tmp_path / "heatmaps").iterdir()
            if p.suffix in (".png", ".json") and p.name != "run_manifest.json"
        }
        assert main(_heatmap_args(tmp_path)) == 0
        for name, payload in first.items():
            assert (tmp_path / "heatmaps" / name).read_bytes() == payload

    def test_missing_hr_image_is_data_error(self, tmp_path):
        (tmp_path / "hr").mkdir()
        (tmp_path / "det.jsonl").write_text(
            '{"image_id": "ghost", "detections": []}\n'
        )
        rc = main([
            "heatmaps", "--detections", str(tmp_path / "det.jsonl"),
            "--hr-dir", str(tmp_path / "hr"), "--out-dir", str(tmp_path / "maps"),
        ])
        assert rc == 2

    def test_invalid_config_exit_code(self, tmp_path):
        write_synthetic_dataset(tmp_path, 1, seed=4)
        rc = main(_heatmap_args(tmp_path) + ["--blur-kernel", "4"])
        assert rc == 1

    def test_manifest_replay(self, tmp_path):
        write_synthetic_dataset(tmp_path, 2, seed=5)
        assert main(_heatmap_args(tmp_path) + ["--blur-sigma", "2.5"]) == 0
        first = (tmp_path / "heatmaps" / "face_00000.png").read_bytes()
        replay_out = tmp_path / "replayed"
        rc = main([
            "heatmaps", "--detections", str(tmp_path / "detections.jsonl"),
            "--hr-dir", str(tmp_path / "hr"), "--out-dir", str(replay_out),
            "--config", str(tmp_path / "heatmaps" / "run_manifest.json"),
        ])
        assert rc == 0
        assert (replay_out / "face_00000.png").read_bytes() == first


class TestCountCommand:
    def test_table_totals(self, tmp_path):
        out = tmp_path / "plan.tsv"
        assert main(["count", "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "name\tout_shape\tparams\tmacs"
        total = lines[-1].split("\t")
        assert int(total[2]) == count_params(ModelConfig())
        assert int(total[3]) == count_macs(ModelConfig())

    def test_variant_flag(self, tmp_path, capsys):
        assert main(["count", "--refinement-blocks", "1"]) == 0
        printed = capsys.readouterr().out
        total = printed.strip().splitlines()[-1].split("\t")
        assert int(total[2]) == count_params(ModelConfig(refinement_blocks=1))


class TestBenchCommand:
    def test_report_file_and_manifest(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LANDMARK_SR_SEED", "123")
        out = tmp_path / "bench.json"
        rc = main(["bench", "--passes", "3", "--warmup", "1",
                   "--refinement-blocks", "1", "--out", str(out)])
        assert rc == 0
        report = json.loads(out.read_text())
        assert report["measured_passes"] == 3
        assert report["fps"] * report["mean_latency_ms"] == pytest.approx(1000.0, rel=1e-9)
        manifest = json.loads((tmp_path / "run_manifest.json").read_text())
        assert manifest["command"] == "bench"
        assert manifest["seed"] == 123  # env override wins


class TestInferCommand:
    @pytest.fixture()
    def checkpoint(self, tmp_path):
        net = build(TINY, seed=0)
        save_checkpoint(tmp_path / "ckpt", net, seed=0, epoch=1)
        return tmp_path / "ckpt"

    def test_single_file(self, tmp_path, checkpoint):
        rng = np.random.default_rng(0)
        save_image(tmp_path / "in.png", rng.uniform(-1, 1, (3, 16, 16)))
        rc = main(["infer", "--checkpoint", str(checkpoint),
                   "--input", str(tmp_path / "in.png"), "--out-dir", str(tmp_path / "out")])
        assert rc == 0
        arr = np.array(Image.open(tmp_path / "out" / "in.png"))
        assert arr.shape == (128, 128, 3)

    def test_same_input_identical_bytes(self, tmp_path, checkpoint):
        rng = np.random.default_rng(1)
        save_image(tmp_path / "in.png", rng.uniform(-1, 1, (3, 16, 16)))
        args = ["infer", "--checkpoint", str(checkpoint), "--input", str(tmp_path / "in.png")]
        assert main(args + ["--out-dir", str(tmp_path / "o1")]) == 0
        assert main(args + ["--out-dir", str(tmp_path / "o2")]) == 0
        assert (tmp_path / "o1" / "in.png").read_bytes() == (tmp_path / "o2" / "in.png").read_bytes()

    def test_directory_order_independent(self, tmp_path, checkpoint):
        rng = np.random.default_rng(2)
        (tmp_path / "many").mkdir()
        for name in ("c", "a", "b"):
            save_image(tmp_path / "many" / f"{name}.png", rng.uniform(-1, 1, (3, 16, 16)))
        rc = main(["infer", "--checkpoint", str(checkpoint),
                   "--input", str(tmp_path / "many"), "--out-dir", str(tmp_path / "outs")])
        assert rc == 0
        assert sorted(p.name for p in (tmp_path / "outs").glob("*.png")) == [
            "a.png", "b.png", "c.png"
        ]

    def test_wrong_size_input(self, tmp_path, checkpoint):
        save_image(tmp_path / "big.png", np.zeros((3, 32, 32)))
        rc = main(["infer", "--checkpoint", str(checkpoint),
                   "--input", str(tmp_path / "big.png"), "--out-dir", str(tmp_path / "out")])
        assert rc == 1

    def test_missing_input(self, tmp_path, checkpoint):
        rc = main(["infer", "--checkpoint", str(checkpoint),
                   "--input", str(tmp_path / "nope.png"), "--out-dir", str(tmp_path / "out")])
        assert rc == 2


class TestCompareGrid:
    def _panels(self, tmp_path, n):
        rng = np.random.default_rng(3)
        paths = []
        for i in range(n):
            path = tmp_path / f"p{i}.png"
            save_image(path, rng.uniform(-1, 1, (3, 128, 128)))
            paths.append(path)
        return paths

    def test_five_panel_width(self, tmp_path):
        paths = self._panels(tmp_path, 5)
        out = tmp_path / "grid.png"
        args = ["compare-grid", "--out", str(out)]
        for i, p in enumerate(paths):
            args += ["--panel", f"p{i}={p}"]
        assert main(args) == 0
        img = Image.open(out)
        assert img.width == 5 * 128 + 6 * 4
        assert img.height == 128 + 14 + 2 * 4

    def test_lr_panel_upscaled(self, tmp_path):
        lr_path = tmp_path / "lr.png"
        save_image(lr_path, np.zeros((3, 16, 16)))
        hr_path = self._panels(tmp_path, 1)[0]
        out = tmp_path / "grid.png"
        rc = main(["compare-grid", "--panel", f"LR={lr_path}",
                   "--panel", f"HR={hr_path}", "--out", str(out)])
        assert rc == 0
        assert Image.open(out).width == 2 * 128 + 3 * 4

    def test_missing_panel_is_error_no_partial_output(self, tmp_path):
        out = tmp_path / "grid.png"
        rc = main(["compare-grid", "--panel", f"a={tmp_path/'gone.png'}", "--out", str(out)])
        assert rc == 2
        assert not out.exists()

    def test_deterministic_bytes(self, tmp_path):
        paths = self._panels(tmp_path, 2)
        args = ["--panel", f"x={paths[0]}", "--panel", f"y={paths[1]}"]
        assert main(["compare-grid"] + args + ["--out", str(tmp_path / "g1.png")]) == 0
        assert main(["compare-grid"] + args + ["--out", str(tmp_path / "g2.png")]) == 0
        assert (tmp_path / "g1.png").read_bytes() == (tmp_path / "g2.png").read_bytes()

    def test_duplicate_labels_rejected(self, tmp_path):
        paths = self._panels(tmp_path, 2)
        rc = main(["compare-grid", "--panel", f"x={paths[0]}", "--panel", f"x={paths[1]}",
                   "--out", str(tmp_path / "g.png")])
        assert rc == 1


class TestTrainEvalCommands:
    def test_train_then_eval_and_baseline(self, face_dataset, tmp_path):
        run_dir = tmp_path / "run"
        rc = main([
            "train", "--data-root", str(face_dataset), "--out-dir", str(run_dir),
            "--train-count", "8", "--val-count", "4", "--test-count", "4",
            "--epochs", "1", "--seed", "1",
            "--lambda-perc", "0", "--lambda-lpips", "0", "--val-dump-every", "0",
        ])
        assert rc == 0
        assert (run_dir / "history.csv").exists()
        assert (run_dir / "splits.json").exists()
        manifest = json.loads((run_dir / "run_manifest.json").read_text())
        assert manifest["config"]["epochs"] == 1

        rc = main([
            "eval", "--checkpoint", str(run_dir / "best"),
            "--data-root", str(face_dataset), "--out-dir", str(tmp_path / "eval"),
            "--splits", str(run_dir / "splits.json"), "--split", "test",
        ])
        assert rc == 0
        report = json.loads((tmp_path / "eval" / "report.json").read_text())
        assert report["aggregate"]["images"] == 4

        rc = main([
            "eval", "--baseline", "--data-root", str(face_dataset),
            "--out-dir", str(tmp_path / "eval_base"),
            "--splits", str(run_dir / "splits.json"), "--split", "test",
        ])
        assert rc == 0
        base = json.loads((tmp_path / "eval_base" / "report.json").read_text())
        assert base["aggregate"]["psnr_db"] > 0

    def test_train_without_heatmaps_is_data_error(self, tmp_path):
        write_synthetic_dataset(tmp_path / "raw", 4, seed=6)
        rc = main([
            "train", "--data-root", str(tmp_path / "raw"), "--out-dir", str(tmp_path / "run"),
            "--train-count", "2", "--val-count", "1", "--test-count", "1", "--epochs", "1",
        ])
        assert rc == 2

    def test_unknown_config_key_rejected(self, tmp_path, face_dataset):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{"not_a_key": 1}')
        rc = main([
            "train", "--data-root", str(face_dataset), "--out-dir", str(tmp_path / "r"),
            "--config", str(cfg),
        ])
        assert rc == 1

    def test_toml_config(self, tmp_path, face_dataset):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text(
            'epochs = 1\ntrain_count = 8\nval_count = 4\ntest_count = 4\n'
            'lambda_perc = 0.0\nlambda_lpips = 0.0\nval_dump_every = 0\nseed = 2\n'
        )
        rc = main([
            "train", "--data-root", str(face_dataset), "--out-dir", str(tmp_path / "run"),
            "--config", str(cfg),
        ])
        assert rc == 0
        manifest = json.loads((tmp_path / "run" / "run_manifest.json").read_text())
        assert manifest["config"]["seed"] == 2
