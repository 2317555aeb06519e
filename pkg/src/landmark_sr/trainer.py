"""Optimization loop: Adam, plateau LR schedule, truncated-metric early stop.

Reproducibility contract: with identical seeds, configs and data, two runs
produce byte-identical history CSVs (full precision only; mixed precision is
opt-in and exempt). Batch order comes from a dedicated PCG64 stream, model
initialization from its own torch generator, so no global RNG state leaks in.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import PairedDataset, to_unit, upscale_reference
from .errors import ConfigError
from .features import FeatureExtractor, seeded_extractor, uniform_calibration
from .heatmap import save_heatmap_png  # noqa: F401  (re-export convenience for demos)
from .losses import HeatmapLossConfig, LossConfig, heatmap_loss, total_loss
from .metrics import PSNR_CAP_DB, ms_ssim, psnr, ssim
from .model import ModelConfig, SRNet, build, save_checkpoint


@dataclass(frozen=True)
class SchedulerConfig:
    factor: float = 0.5
    patience_epochs: int = 3
    min_lr: float = 1e-6
    eps: float = 1e-4  # required improvement to reset the plateau counter


@dataclass(frozen=True)
class EarlyStopConfig:
    psnr_cap_db: float = 26.0
    ssim_cap: float = 0.72
    lpips_weight: float = 1.0
    patience_epochs: int = 8


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.0
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    early_stop: EarlyStopConfig = field(default_factory=EarlyStopConfig)
    max_epochs: int = 50
    seed: int = 0
    mixed_precision: bool = False
    val_dump_every: int = 5

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")


def early_stop_score(
    val_psnr: float, val_ssim: float, val_lpips: float, caps: EarlyStopConfig
) -> float:
    """Lower-is-better composite; PSNR/SSIM stop contributing beyond their caps."""
    return (
        -min(val_psnr, caps.psnr_cap_db) / caps.psnr_cap_db
        - min(val_ssim, caps.ssim_cap) / caps.ssim_cap
        + caps.lpips_weight * val_lpips
    )


class PlateauScheduler:
    """LR <- LR * factor once `patience_epochs` consecutive epochs fail to
    improve the monitored score by more than eps; never drops below min_lr."""

    def __init__(self, lr: float, cfg: SchedulerConfig):
        self.lr = lr
        self.cfg = cfg
        self.best: float | None = None
        self.stale = 0

    def step(self, val_score: float) -> float:
        if self.best is None or val_score < self.best - self.cfg.eps:
            self.best = val_score
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.cfg.patience_epochs:
                self.lr = max(self.lr * self.cfg.factor, self.cfg.min_lr)
                self.stale = 0
        return self.lr


HISTORY_COLUMNS = (
    "epoch",
    "lr",
    "train_total",
    "train_pix",
    "train_perc",
    "train_heat",
    "train_lpips",
    "val_psnr",
    "val_ssim",
    "val_ms_ssim",
    "val_lpips",
    "val_heat_err",
    "score",
)


@dataclass
class TrainResult:
    history_path: Path
    best_checkpoint: Path
    best_epoch: int
    best_score: float
    stopped_early: bool
    history: list[dict]


def _validate(
    net: SRNet,
    val_set: PairedDataset,
    loss_cfg: LossConfig,
    fx: FeatureExtractor,
    calibration: dict[str, torch.Tensor],
    batch_size: int,
) -> dict[str, float]:
    from .losses import lpips_loss

    net.eval()
    psnrs, ssims, msssims, lpipss, heat_errs = [], [], [], [], []
    with torch.no_grad():
        for start in range(0, len(val_set), batch_size):
            idx = np.arange(start, min(start + batch_size, len(val_set)))
            lr, hr, heat = val_set.batch(idx)
            lr_t = torch.from_numpy(lr)
            hr_t = torch.from_numpy(hr)
            heat_t = torch.from_numpy(heat)
            pred = net(lr_t)
            lpipss.append(float(lpips_loss(pred, hr_t, fx, calibration)) * len(idx))
            for j in range(len(idx)):
                p01 = to_unit(pred[j].numpy())
                t01 = to_unit(hr[j])
                val = psnr(p01, t01)
                psnrs.append(min(val, PSNR_CAP_DB))
                ssims.append(ssim(p01, t01))
                msssims.append(ms_ssim(p01, t01))
                err = heatmap_loss(
                    pred[j : j + 1], hr_t[j : j + 1], heat_t[j : j + 1],
                    HeatmapLossConfig(loss_cfg.heatmap.gamma, loss_cfg.heatmap.floor, "weighted_mean"),
                )
                heat_errs.append(float(err))
    net.train()
    return {
        "val_psnr": float(np.mean(psnrs)),
        "val_ssim": float(np.mean(ssims)),
        "val_ms_ssim": float(np.mean(msssims)),
        "val_lpips": float(np.sum(lpipss) / len(val_set)),
        "val_heat_err": float(np.mean(heat_errs)),
    }


def _dump_samples(
    net: SRNet, val_set: PairedDataset, out_path: Path, count: int = 4
) -> None:
    """Side-by-side grid (upscaled LR | prediction | HR) for a few val images."""
    from PIL import Image

    count = min(count, len(val_set))
    panels = []
    with torch.no_grad():
        idx = np.arange(count)
        lr, hr, _ = val_set.batch(idx)
        pred = net(torch.from_numpy(lr)).numpy()
    for j in range(count):
        up = upscale_reference(lr[j].astype(np.float64), val_set.cfg)
        row = np.concatenate([to_unit(up), to_unit(pred[j]), to_unit(hr[j])], axis=2)
        panels.append(row)
    grid = np.concatenate(panels, axis=1)  # stack images vertically
    Image.fromarray(np.round(grid * 255).astype(np.uint8).transpose(1, 2, 0)).save(out_path)


def train(
    train_set: PairedDataset,
    val_set: PairedDataset,
    model_cfg: ModelConfig,
    loss_cfg: LossConfig,
    cfg: TrainConfig,
    out_dir: str | Path,
    fx: FeatureExtractor | None = None,
    calibration: dict[str, torch.Tensor] | None = None,
) -> TrainResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fx is None:
        fx = seeded_extractor(seed=cfg.seed)
    if calibration is None:
        calibration = uniform_calibration(fx)

    net = build(model_cfg, cfg.seed)
    optimizer = torch.optim.Adam(
        net.parameters(), lr=cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay
    )
    scheduler = PlateauScheduler(cfg.lr, cfg.scheduler)
    order_rng = np.random.Generator(np.random.PCG64(cfg.seed))

    history: list[dict] = []
    best_score = float("inf")
    best_epoch = -1
    stale = 0
    stopped_early = False
    best_path = out_dir / "best"
    lr_now = cfg.lr

    for epoch in range(1, cfg.max_epochs + 1):
        perm = order_rng.permutation(len(train_set))
        sums = {"total": 0.0, "pix": 0.0, "perc": 0.0, "heat": 0.0, "lpips": 0.0}
        seen = 0
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            lr_np, hr_np, heat_np = train_set.batch(idx)
            lr_t = torch.from_numpy(lr_np)
            hr_t = torch.from_numpy(hr_np)
            heat_t = torch.from_numpy(heat_np)

            optimizer.zero_grad()
            if cfg.mixed_precision:
                with torch.autocast("cpu", dtype=torch.bfloat16):
                    loss, breakdown = total_loss(
                        net(lr_t), hr_t, heat_t, loss_cfg, fx, calibration
                    )
            else:
                loss, breakdown = total_loss(net(lr_t), hr_t, heat_t, loss_cfg, fx, calibration)

            if not torch.isfinite(loss):
                dump = {
                    "epoch": epoch,
                    "step": start // cfg.batch_size,
                    "batch_ids": [train_set.ids[i] for i in idx],
                    "breakdown": breakdown,
                }
                with open(out_dir / "nan_dump.json", "w", encoding="utf-8") as fh:
                    json.dump(dump, fh, indent=2)
                raise RuntimeError(f"non-finite loss at epoch {epoch}; see nan_dump.json")

            loss.backward()
            optimizer.step()
            for key in sums:
                sums[key] += breakdown[key] * len(idx)
            seen += len(idx)

        val = _validate(net, val_set, loss_cfg, fx, calibration, cfg.batch_size)
        score = early_stop_score(val["val_psnr"], val["val_ssim"], val["val_lpips"], cfg.early_stop)

        row = {
            "epoch": epoch,
            "lr": lr_now,
            "train_total": sums["total"] / seen,
            "train_pix": sums["pix"] / seen,
            "train_perc": sums["perc"] / seen,
            "train_heat": sums["heat"] / seen,
            "train_lpips": sums["lpips"] / seen,
            **val,
            "score": score,
        }
        history.append(row)

        if score < best_score:
            best_score = score
            best_epoch = epoch
            stale = 0
            save_checkpoint(
                best_path, net, cfg.seed, epoch,
                extra={"score": score, "val_psnr": val["val_psnr"], "val_ssim": val["val_ssim"]},
            )
        else:
            stale += 1

        if cfg.val_dump_every and epoch % cfg.val_dump_every == 0:
            _dump_samples(net, val_set, out_dir / f"val_epoch{epoch:04d}.png")

        lr_now = scheduler.step(score)
        for group in optimizer.param_groups:
            group["lr"] = lr_now

        if stale >= cfg.early_stop.patience_epochs:
            stopped_early = True
            break

    history_path = out_dir / "history.csv"
    with open(history_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for row in history:
            fh.write(",".join(repr(row[c]) if c != "epoch" else str(row[c]) for c in HISTORY_COLUMNS) + "\n")
    with open(out_dir / "train_config.json", "w", encoding="utf-8") as fh:
        json.dump(
            {"train": asdict(cfg), "loss": asdict(loss_cfg), "model": asdict(model_cfg)},
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")

    return TrainResult(
        history_path=history_path,
        best_checkpoint=best_path,
        best_epoch=best_epoch,
        best_score=best_score,
        stopped_early=stopped_early,
        history=history,
    )
