"""Command-line entry point: heatmaps, train, eval, infer, bench, count, compare-grid.

Configuration comes from an optional JSON/TOML file plus flag overrides
(flags win). Every run writes a manifest (command, fully resolved config,
seed, version, timestamp) next to its outputs; pointing --config at a
manifest replays the run. The env var LANDMARK_SR_SEED overrides any
configured seed. Exit codes: 0 success, 1 validation/config error, 2 data
error; errors go to stderr as single-line JSON.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np
import torch

from . import __version__
from .bench import measure_latency
from .data import (
    HR_SIZE,
    LR_SIZE,
    DegradationConfig,
    PairedDataset,
    SplitManifest,
    degrade,
    load_image,
    save_image,
    to_unit,
    upscale_reference,
)
from .detections import load_detections
from .errors import ConfigError, DataError, InputError
from .features import load_calibration, load_extractor, seeded_extractor, uniform_calibration
from .heatmap import (
    HeatmapConfig,
    compose_heatmap,
    save_heatmap_manifest,
    save_heatmap_png,
)
from .losses import HeatmapLossConfig, LossConfig
from .metrics import evaluate_pairs, write_report
from .model import ModelConfig, build, load_checkpoint, plan_table
from .trainer import EarlyStopConfig, SchedulerConfig, TrainConfig, train

SEED_ENV = "LANDMARK_SR_SEED"


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def _emit_warning(message: str) -> None:
    print(json.dumps({"warning": message}), file=sys.stderr)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file {p} does not exist")
    if p.suffix == ".toml":
        with open(p, "rb") as fh:
            obj = tomllib.load(fh)
    else:
        with open(p, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    # a run manifest is accepted directly: replaying one reproduces the run
    if isinstance(obj, dict) and "config" in obj and "command" in obj:
        obj = obj["config"]
    if not isinstance(obj, dict):
        raise ConfigError(f"config file {p} must hold a JSON/TOML object")
    return obj


def _resolve(defaults: dict, config: dict, args: argparse.Namespace, keys: dict[str, str]) -> dict:
    """defaults <- config file <- CLI flags (only flags actually given)."""
    out = dict(defaults)
    unknown = set(config) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out.update(config)
    for key, attr in keys.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    seed_env = os.environ.get(SEED_ENV)
    if seed_env is not None and "seed" in out:
        out["seed"] = int(seed_env)
    return out


def _write_manifest(target_dir: Path, command: str, config: dict, seed: int | None) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    target_dir.mkdir(parents=True, exist_ok=True)
    with open(target_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


# --- heatmaps -----------------------------------------------------------------

HEATMAP_DEFAULTS = {
    "blur_kernel": 15,
    "blur_sigma": 3.0,
    "inverse_fade_sigma": 0.6,
    "canny_low": 0.1,
    "canny_high": 0.3,
}


def cmd_heatmaps(args: argparse.Namespace) -> int:
    conf = _resolve(
        HEATMAP_DEFAULTS,
        _load_config_file(args.config),
        args,
        {
            "blur_kernel": "blur_kernel",
            "blur_sigma": "blur_sigma",
            "inverse_fade_sigma": "fade_sigma",
            "canny_low": "canny_low",
            "canny_high": "canny_high",
        },
    )
    cfg = HeatmapConfig(**conf)
    hr_dir = Path(args.hr_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not Path(args.detections).exists():
        raise DataError(f"detections file {args.detections} does not exist")

    per_image = load_detections(args.detections)
    index: dict[str, str] = {}
    warnings: list[str] = []
    for image_id in sorted(per_image):
        hr_path = hr_dir / f"{image_id}.png"
        if not hr_path.exists():
            raise DataError(f"missing HR image for detection record: {hr_path}")
        chw = load_image(hr_path)
        hwc01 = to_unit(chw).transpose(1, 2, 0)
        hmap = compose_heatmap(hwc01, per_image[image_id], cfg, warnings)
        save_heatmap_png(out_dir / f"{image_id}.png", hmap)
        index[image_id] = f"{out_dir.name}/{image_id}.png"
    save_heatmap_manifest(out_dir / "manifest.json", index)
    for message in warnings:
        _emit_warning(message)
    _write_manifest(out_dir, "heatmaps", conf, None)
    print(f"wrote {len(index)} heatmaps to {out_dir}")
    return 0


# --- train --------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "epochs": 50,
    "batch_size": 8,
    "lr": 1e-4,
    "seed": 0,
    "mixed_precision": False,
    "val_dump_every": 5,
    "scheduler_factor": 0.5,
    "scheduler_patience": 3,
    "min_lr": 1e-6,
    "early_psnr_cap": 26.0,
    "early_ssim_cap": 0.72,
    "early_lpips_weight": 1.0,
    "early_patience": 8,
    "lambda_heat": 1.0,
    "lambda_perc": 0.05,
    "lambda_lpips": 0.05,
    "gamma": 2.0,
    "floor": 0.1,
    "heat_norm": "as_printed",
    "degradation": "bilinear",
    "antialias": True,
    "bicubic_a": -0.5,
    "refinement_blocks": 5,
    "upsample_mode": "bilinear",
    "train_count": 2048,
    "val_count": 256,
    "test_count": 256,
    "extractor": None,
    "calibration": None,
}

TRAIN_FLAG_KEYS = {
    "epochs": "epochs",
    "batch_size": "batch_size",
    "lr": "lr",
    "seed": "seed",
    "lambda_heat": "lambda_heat",
    "lambda_perc": "lambda_perc",
    "lambda_lpips": "lambda_lpips",
    "gamma": "gamma",
    "floor": "floor",
    "heat_norm": "heat_norm",
    "degradation": "degradation",
    "refinement_blocks": "refinement_blocks",
    "upsample_mode": "upsample_mode",
    "train_count": "train_count",
    "val_count": "val_count",
    "test_count": "test_count",
    "extractor": "extractor",
    "calibration": "calibration",
    "mixed_precision": "mixed_precision",
    "val_dump_every": "val_dump_every",
}


def _desk_split(root: Path, conf: dict) -> SplitManifest:
    hr_dir = root / "hr"
    if not hr_dir.is_dir():
        raise DataError(f"no hr/ directory under {root}")
    ids = sorted(p.stem for p in hr_dir.glob("*.png"))
    n_train, n_val, n_test = conf["train_count"], conf["val_count"], conf["test_count"]
    if n_train + n_val + n_test > len(ids):
        raise DataError(
            f"desk split needs {n_train}+{n_val}+{n_test} ids, found {len(ids)} under {hr_dir}"
        )
    deg = DegradationConfig(conf["degradation"], conf["antialias"], conf["bicubic_a"])
    return SplitManifest(
        train=ids[:n_train],
        val=ids[n_train : n_train + n_val],
        test=ids[n_train + n_val : n_train + n_val + n_test],
        seed=conf["seed"],
        degradation=deg,
    )


def _configs_from(conf: dict) -> tuple[ModelConfig, LossConfig, TrainConfig]:
    model_cfg = ModelConfig(
        refinement_blocks=conf["refinement_blocks"],
        upsample_mode_skip=conf["upsample_mode"],
    )
    loss_cfg = LossConfig(
        lambda_perc=conf["lambda_perc"],
        lambda_heat=conf["lambda_heat"],
        lambda_lpips=conf["lambda_lpips"],
        heatmap=HeatmapLossConfig(conf["gamma"], conf["floor"], conf["heat_norm"]),
    )
    train_cfg = TrainConfig(
        batch_size=conf["batch_size"],
        lr=conf["lr"],
        scheduler=SchedulerConfig(
            factor=conf["scheduler_factor"],
            patience_epochs=conf["scheduler_patience"],
            min_lr=conf["min_lr"],
        ),
        early_stop=EarlyStopConfig(
            psnr_cap_db=conf["early_psnr_cap"],
            ssim_cap=conf["early_ssim_cap"],
            lpips_weight=conf["early_lpips_weight"],
            patience_epochs=conf["early_patience"],
        ),
        max_epochs=conf["epochs"],
        seed=conf["seed"],
        mixed_precision=conf["mixed_precision"],
        val_dump_every=conf["val_dump_every"],
    )
    return model_cfg, loss_cfg, train_cfg


def cmd_train(args: argparse.Namespace) -> int:
    conf = _resolve(TRAIN_DEFAULTS, _load_config_file(args.config), args, TRAIN_FLAG_KEYS)
    root = Path(args.data_root)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    splits = _desk_split(root, conf)
    splits.save(out_dir / "splits.json")
    train_set = PairedDataset(root, splits.train, splits.degradation)
    val_set = PairedDataset(root, splits.val, splits.degradation)

    model_cfg, loss_cfg, train_cfg = _configs_from(conf)
    fx = load_extractor(conf["extractor"]) if conf["extractor"] else seeded_extractor(seed=train_cfg.seed)
    calibration = load_calibration(conf["calibration"]) if conf["calibration"] else uniform_calibration(fx)

    _write_manifest(out_dir, "train", conf, train_cfg.seed)
    result = train(train_set, val_set, model_cfg, loss_cfg, train_cfg, out_dir, fx, calibration)
    last = result.history[-1]
    print(
        f"trained {last['epoch']} epochs, best epoch {result.best_epoch} "
        f"(score {result.best_score:.4f}, val PSNR {last['val_psnr']:.2f} dB); "
        f"history at {result.history_path}"
    )
    return 0


# --- eval ---------------------------------------------------------------------

EVAL_DEFAULTS = {
    "split": "test",
    "baseline": False,
    "degradation": "bilinear",
    "antialias": True,
    "bicubic_a": -0.5,
    "batch_size": 8,
    "train_count": 2048,
    "val_count": 256,
    "test_count": 256,
    "seed": 0,
}


def cmd_eval(args: argparse.Namespace) -> int:
    conf = _resolve(
        EVAL_DEFAULTS,
        _load_config_file(args.config),
        args,
        {
            "split": "split",
            "baseline": "baseline",
            "degradation": "degradation",
            "batch_size": "batch_size",
            "train_count": "train_count",
            "val_count": "val_count",
            "test_count": "test_count",
        },
    )
    root = Path(args.data_root)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.splits:
        splits = SplitManifest.load(args.splits)
    else:
        splits = _desk_split(root, conf)
    try:
        ids = getattr(splits, conf["split"])
    except AttributeError:
        raise ConfigError(f"split must be train/val/test, got {conf['split']!r}")
    deg = splits.degradation

    net = None
    if not conf["baseline"]:
        if not args.checkpoint:
            raise ConfigError("eval needs --checkpoint unless --baseline is given")
        net, _ = load_checkpoint(args.checkpoint)
        net.eval()

    preds, targets = [], []
    batch_lr: list[np.ndarray] = []

    def flush():
        if net is None or not batch_lr:
            return
        with torch.no_grad():
            out = net(torch.from_numpy(np.stack(batch_lr)).float())
        preds.extend(to_unit(p) for p in out.numpy())
        batch_lr.clear()

    for image_id in ids:
        hr_path = root / "hr" / f"{image_id}.png"
        if not hr_path.exists():
            raise DataError(f"missing HR image {hr_path}")
        hr = load_image(hr_path)
        lr = degrade(hr, deg)
        targets.append(to_unit(hr))
        if net is None:
            preds.append(to_unit(upscale_reference(lr, deg)))
        else:
            batch_lr.append(lr.astype(np.float32))
            if len(batch_lr) == conf["batch_size"]:
                flush()
    flush()

    report = evaluate_pairs(ids, np.stack(preds), np.stack(targets))
    write_report(report, out_dir / "per_image.csv", out_dir / "report.json")
    _write_manifest(out_dir, "eval", conf, None)
    print(
        f"{conf['split']}: PSNR {report.mean_psnr_db:.2f} dB, "
        f"SSIM {report.mean_ssim:.4f}, MS-SSIM {report.mean_ms_ssim:.4f} "
        f"({len(ids)} images)"
    )
    return 0


# --- infer --------------------------------------------------------------------


def cmd_infer(args: argparse.Namespace) -> int:
    net, _ = load_checkpoint(args.checkpoint)
    net.eval()
    src = Path(args.input)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if src.is_dir():
        paths = sorted(src.glob("*.png"))
        if not paths:
            raise DataError(f"no .png files under {src}")
    elif src.exists():
        paths = [src]
    else:
        raise DataError(f"input {src} does not exist")

    for path in paths:
        lr = load_image(path)
        if lr.shape != (3, LR_SIZE, LR_SIZE):
            raise InputError(f"{path} is {lr.shape[-2]}x{lr.shape[-1]}, expected {LR_SIZE}x{LR_SIZE}")
        with torch.no_grad():
            pred = net(torch.from_numpy(lr[None]).float())[0].numpy()
        save_image(out_dir / path.name, np.clip(pred, -1.0, 1.0))
    _write_manifest(out_dir, "infer", {"checkpoint": str(args.checkpoint)}, None)
    print(f"wrote {len(paths)} predictions to {out_dir}")
    return 0


# --- bench / count ------------------------------------------------------------


def cmd_bench(args: argparse.Namespace) -> int:
    conf = _resolve(
        {"passes": 200, "warmup": 20, "device": "cpu", "refinement_blocks": 5, "seed": 0},
        _load_config_file(args.config),
        args,
        {"passes": "passes", "warmup": "warmup", "device": "device",
         "refinement_blocks": "refinement_blocks", "seed": "seed"},
    )
    cfg = ModelConfig(refinement_blocks=conf["refinement_blocks"])
    net = build(cfg, conf["seed"])
    report = measure_latency(net, conf["passes"], conf["warmup"], conf["device"])
    payload = json.dumps(report.to_dict(), indent=2)
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(payload + "\n", encoding="utf-8")
        _write_manifest(out_path.parent, "bench", conf, conf["seed"])
        print(f"bench report at {out_path}")
    else:
        print(payload)
    return 0


def cmd_count(args: argparse.Namespace) -> int:
    conf = _resolve(
        {"refinement_blocks": 5, "upsample_mode": "bilinear"},
        _load_config_file(args.config),
        args,
        {"refinement_blocks": "refinement_blocks", "upsample_mode": "upsample_mode"},
    )
    cfg = ModelConfig(
        refinement_blocks=conf["refinement_blocks"], upsample_mode_skip=conf["upsample_mode"]
    )
    table = plan_table(cfg)
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(table, encoding="utf-8")
        _write_manifest(out_path.parent, "count", conf, None)
        print(f"layer table at {out_path}")
    else:
        sys.stdout.write(table)
    return 0


# --- compare-grid ---------------------------------------------------------------

GRID_MARGIN = 4
GRID_LABEL_H = 14


def cmd_compare_grid(args: argparse.Namespace) -> int:
    from PIL import Image, ImageDraw

    panels = []
    for spec in args.panel:
        if "=" not in spec:
            raise ConfigError(f"--panel expects LABEL=PATH, got {spec!r}")
        label, _, path = spec.partition("=")
        panels.append((label, Path(path)))
    if not panels:
        raise ConfigError("compare-grid needs at least one --panel")
    labels = [p[0] for p in panels]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate panel labels: {labels}")

    images = []
    for label, path in panels:
        if not path.exists():
            raise DataError(f"missing panel {label!r}: {path}")
        arr = np.asarray(Image.open(path).convert("RGB"))
        if arr.shape[:2] == (LR_SIZE, LR_SIZE):  # show LR input at HR scale
            arr = np.kron(arr, np.ones((8, 8, 1), dtype=arr.dtype))
        if arr.shape[:2] != (HR_SIZE, HR_SIZE):
            raise InputError(f"panel {label!r} is {arr.shape[1]}x{arr.shape[0]}, expected {HR_SIZE}")
        images.append(arr)

    n = len(images)
    width = n * HR_SIZE + (n + 1) * GRID_MARGIN
    height = GRID_LABEL_H + HR_SIZE + 2 * GRID_MARGIN
    canvas = Image.new("RGB", (width, height), (255, 255, 255))
    draw = ImageDraw.Draw(canvas)
    for i, (arr, label) in enumerate(zip(images, labels)):
        x = GRID_MARGIN + i * (HR_SIZE + GRID_MARGIN)
        draw.text((x, 1), label, fill=(0, 0, 0))
        canvas.paste(Image.fromarray(arr), (x, GRID_MARGIN + GRID_LABEL_H))
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(out_path)
    print(f"grid at {out_path}")
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="landmark-sr",
        description="Prior-guided 8x face super-resolution toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("heatmaps", help="build importance heatmaps from detections")
    p.add_argument("--detections", required=True, help="detections JSONL file")
    p.add_argument("--hr-dir", required=True, help="directory of 128x128 HR images")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--blur-kernel", type=int)
    p.add_argument("--blur-sigma", type=float)
    p.add_argument("--fade-sigma", type=float)
    p.add_argument("--canny-low", type=float)
    p.add_argument("--canny-high", type=float)
    p.set_defaults(func=cmd_heatmaps)

    p = sub.add_parser("train", help="train the SR network")
    p.add_argument("--data-root", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda-heat", type=float)
    p.add_argument("--lambda-perc", type=float)
    p.add_argument("--lambda-lpips", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--floor", type=float)
    p.add_argument("--heat-norm", choices=("as_printed", "weighted_mean"))
    p.add_argument("--degradation", choices=("bilinear", "bicubic"))
    p.add_argument("--refinement-blocks", type=int)
    p.add_argument("--upsample-mode", choices=("bilinear", "bicubic"))
    p.add_argument("--train-count", type=int)
    p.add_argument("--val-count", type=int)
    p.add_argument("--test-count", type=int)
    p.add_argument("--extractor", help="feature-extractor weights (.npz)")
    p.add_argument("--calibration", help="LPIPS calibration weights (.npz)")
    p.add_argument("--mixed-precision", action="store_const", const=True, default=None)
    p.add_argument("--val-dump-every", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint (or the interpolation baseline)")
    p.add_argument("--checkpoint")
    p.add_argument("--data-root", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--splits", help="split manifest JSON (default: desk-scale slices)")
    p.add_argument("--baseline", action="store_const", const=True, default=None)
    p.add_argument("--degradation", choices=("bilinear", "bicubic"))
    p.add_argument("--batch-size", type=int)
    p.add_argument("--train-count", type=int)
    p.add_argument("--val-count", type=int)
    p.add_argument("--test-count", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="super-resolve 16x16 inputs with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="16x16 PNG file or directory")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", help="latency/FPS over repeated forward passes")
    p.add_argument("--config")
    p.add_argument("--passes", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--device")
    p.add_argument("--refinement-blocks", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write JSON report here instead of stdout")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("count", help="per-layer parameter/MAC table (TSV)")
    p.add_argument("--config")
    p.add_argument("--refinement-blocks", type=int)
    p.add_argument("--upsample-mode", choices=("bilinear", "bicubic"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("compare-grid", help="labeled side-by-side comparison strip")
    p.add_argument("--panel", action="append", default=[], metavar="LABEL=PATH")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare_grid)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1
    except DataError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
