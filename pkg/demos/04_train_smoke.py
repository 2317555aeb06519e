"""End-to-end smoke: synthesize a tiny dataset, train briefly, compare.

Takes a couple of minutes on CPU. Writes everything under demos/out/smoke.
"""

import subprocess
import sys
from pathlib import Path

out_root = Path(__file__).parent / "out" / "smoke"
data = out_root / "data"
run = out_root / "run"
out_root.mkdir(parents=True, exist_ok=True)

from landmark_sr.synth import write_synthetic_dataset  # noqa: E402

write_synthetic_dataset(data, 24, seed=0)
print(f"wrote 24 faces under {data}")


def cli(*args):
    cmd = [sys.executable, "-m", "landmark_sr.cli", *args]
    print("+", " ".join(str(a) for a in args))
    subprocess.run(cmd, check=True)


cli("heatmaps", "--detections", data / "detections.jsonl",
    "--hr-dir", data / "hr", "--out-dir", data / "heatmaps")

cli("train", "--data-root", data, "--out-dir", run,
    "--train-count", "16", "--val-count", "4", "--test-count", "4",
    "--epochs", "2", "--seed", "0",
    "--lambda-perc", "0", "--lambda-lpips", "0", "--val-dump-every", "2")

cli("eval", "--checkpoint", run / "best", "--data-root", data,
    "--out-dir", run / "eval", "--splits", run / "splits.json", "--split", "test")

# degrade one test image to 16x16, super-resolve it, and lay out a strip
from landmark_sr.data import DegradationConfig, degrade, load_image, save_image, upscale_reference  # noqa: E402

hr_path = sorted((data / "hr").glob("*.png"))[-1]
hr = load_image(hr_path)
lr = degrade(hr, DegradationConfig())
save_image(out_root / "lr.png", lr)
save_image(out_root / "bilinear.png", upscale_reference(lr, DegradationConfig()))

cli("infer", "--checkpoint", run / "best", "--input", out_root / "lr.png",
    "--out-dir", run / "sr")

cli("compare-grid",
    "--panel", f"LR input={out_root / 'lr.png'}",
    "--panel", f"bilinear={out_root / 'bilinear.png'}",
    "--panel", f"ours={run / 'sr' / 'lr.png'}",
    "--panel", f"HR target={hr_path}",
    "--out", out_root / "comparison.png")

print(f"\ndone; see {out_root / 'comparison.png'} and {run / 'history.csv'}")
