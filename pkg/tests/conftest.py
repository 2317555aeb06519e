import numpy as np
import pytest

from landmark_sr.cli import main as cli_main
from landmark_sr.synth import write_synthetic_dataset


def make_face_data(root, count, seed):
    write_synthetic_dataset(root, count, seed=seed)
    rc = cli_main(
        [
            "heatmaps",
            "--detections", str(root / "detections.jsonl"),
            "--hr-dir", str(root / "hr"),
            "--out-dir", str(root / "heatmaps"),
        ]
    )
    assert rc == 0
    return root


@pytest.fixture(scope="session")
def face_dataset(tmp_path_factory):
    """24 synthetic faces with detections and precomputed heatmaps."""
    return make_face_data(tmp_path_factory.mktemp("faces"), 24, seed=5)


def compact_extractor(seed=0):
    """Small three-tap pyramid; keeps perceptual/LPIPS terms cheap in tests."""
    from landmark_sr.features import ConvSpec, seeded_extractor

    specs = (
        ConvSpec("c1", 3, 8),
        ConvSpec("c2", 8, 12, pool_before=True),
        ConvSpec("c3", 12, 16, pool_before=True),
    )
    return seeded_extractor(specs, ("c1", "c2", "c3"), seed=seed)


SMOKE_SEED = 17


def run_smoke(root, out_dir, seed=SMOKE_SEED, lambda_heat=1.0, epochs=2, n_train=64, n_val=8):
    """One seed-fixed smoke training run on the first n_train/n_val ids."""
    from landmark_sr.data import DegradationConfig, PairedDataset
    from landmark_sr.features import uniform_calibration
    from landmark_sr.losses import LossConfig
    from landmark_sr.model import ModelConfig
    from landmark_sr.trainer import TrainConfig, train

    ids = sorted(p.stem for p in (root / "hr").glob("*.png"))
    deg = DegradationConfig()
    train_set = PairedDataset(root, ids[:n_train], deg)
    val_set = PairedDataset(root, ids[n_train : n_train + n_val], deg)
    fx = compact_extractor(seed=seed)
    loss_cfg = LossConfig(lambda_heat=lambda_heat, perceptual_layers=("c1", "c2", "c3"))
    cfg = TrainConfig(max_epochs=epochs, seed=seed, val_dump_every=2)
    return train(train_set, val_set, ModelConfig(), loss_cfg, cfg, out_dir,
                 fx, uniform_calibration(fx))


@pytest.fixture(scope="session")
def smoke_runs(tmp_path_factory):
    """Two identical 2-epoch runs on a 64/8 subset (the determinism pair)."""
    root = make_face_data(tmp_path_factory.mktemp("smokedata"), 72, seed=23)
    out = tmp_path_factory.mktemp("smokeruns")
    result_a = run_smoke(root, out / "a")
    result_b = run_smoke(root, out / "b")
    return {"root": root, "a": result_a, "b": result_b}


@pytest.fixture(scope="session")
def face_crop():
    """A deterministic grayscale crop with real edge structure, values in [0,1]."""
    from landmark_sr.heatmap import rgb_to_gray
    from landmark_sr.synth import sample_face

    rng = np.random.Generator(np.random.PCG64(42))
    img, _ = sample_face(rng)
    return rgb_to_gray(img)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" in nodeid:
                name = nodeid.split("::")[-1]
                lines.append((name, status.upper()))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"{status:>6}  {name}")
