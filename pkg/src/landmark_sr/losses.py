"""Training losses: heatmap-weighted L1, pixel MSE, perceptual, LPIPS.

The heatmap term turns an importance map H in [0,1] into per-pixel weights
w = floor + (1 - floor) * H^gamma and evaluates

    L_heat = (1/N) * sum_i w_i |pred_i - target_i| / sum_j w_j

with the weight grid broadcast across color channels and N the total number
of weighted elements. The printed form carries both the 1/N prefactor and the
sum-of-weights denominator; `norm="weighted_mean"` drops the 1/N so a uniform
map reduces exactly to mean absolute error. Everything is differentiable with
respect to the prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .errors import ConfigError, InputError
from .features import FeatureExtractor

HEAT_NORMS = ("as_printed", "weighted_mean")


@dataclass(frozen=True)
class HeatmapLossConfig:
    gamma: float = 2.0
    floor: float = 0.1
    norm: str = "as_printed"

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ConfigError(f"gamma must be > 1, got {self.gamma}")
        if not 0.0 < self.floor <= 1.0:
            raise ConfigError(f"floor must lie in (0, 1], got {self.floor}")
        if self.norm not in HEAT_NORMS:
            raise ConfigError(f"norm must be one of {HEAT_NORMS}, got {self.norm!r}")


@dataclass(frozen=True)
class LossConfig:
    lambda_perc: float = 0.05
    lambda_heat: float = 1.0
    lambda_lpips: float = 0.05
    heatmap: HeatmapLossConfig = field(default_factory=HeatmapLossConfig)
    perceptual_layers: tuple[str, ...] = ("conv1_2", "conv2_2", "conv3_3")

    def __post_init__(self):
        for name in ("lambda_perc", "lambda_heat", "lambda_lpips"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


def _check_pair(pred: torch.Tensor, target: torch.Tensor) -> None:
    if pred.shape != target.shape:
        raise InputError(f"shape mismatch: pred {tuple(pred.shape)} vs target {tuple(target.shape)}")


def heatmap_weights(heat: torch.Tensor, cfg: HeatmapLossConfig) -> torch.Tensor:
    """Elementwise floor + (1-floor) * H^gamma; output lies in [floor, 1]."""
    heat = torch.as_tensor(heat)
    if heat.numel() and (heat.min() < 0 or heat.max() > 1):
        raise InputError("importance values must lie in [0, 1]")
    return cfg.floor + (1.0 - cfg.floor) * heat**cfg.gamma


def _broadcast_weights(w: torch.Tensor, pred: torch.Tensor) -> torch.Tensor:
    # weight grids are per-pixel; insert the channel axis they broadcast over
    if w.shape[-2:] != pred.shape[-2:]:
        raise InputError(f"heatmap {tuple(w.shape)} does not align with image {tuple(pred.shape)}")
    if w.ndim == pred.ndim - 2:  # (H,W) against (B,C,H,W) or (C,H,W)
        w = w.unsqueeze(0)
    if w.ndim == pred.ndim - 1:  # (B,H,W) against (B,C,H,W)
        w = w.unsqueeze(-3)
    if w.ndim != pred.ndim:
        raise InputError(f"cannot broadcast heatmap of shape {tuple(w.shape)}")
    return w.expand_as(pred)


def heatmap_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    heat: torch.Tensor,
    cfg: HeatmapLossConfig,
) -> torch.Tensor:
    _check_pair(pred, target)
    w = _broadcast_weights(heatmap_weights(heat, cfg).to(pred.dtype), pred)
    num = (w * (pred - target).abs()).sum()
    ratio = num / w.sum()
    if cfg.norm == "weighted_mean":
        return ratio
    return ratio / pred.numel()


def pixel_mse(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    _check_pair(pred, target)
    return ((pred - target) ** 2).mean()


def perceptual_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    fx: FeatureExtractor,
    layers: tuple[str, ...],
) -> torch.Tensor:
    """Sum over tap points of mean squared feature differences."""
    _check_pair(pred, target)
    missing = [l for l in layers if l not in fx.taps]
    if missing:
        raise ConfigError(f"extractor has no tap points {missing}")
    feats_pred = fx(pred)
    feats_target = fx(target)
    total = pred.new_zeros(())
    for layer in layers:
        total = total + ((feats_pred[layer] - feats_target[layer]) ** 2).mean()
    return total


def _unit_normalize(feat: torch.Tensor, eps: float = 1e-10) -> torch.Tensor:
    norm = torch.sqrt((feat**2).sum(dim=1, keepdim=True) + eps)
    return feat / norm


def lpips_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    fx: FeatureExtractor,
    calibration: dict[str, torch.Tensor],
) -> torch.Tensor:
    """Calibrated distance over channel-unit-normalized features."""
    _check_pair(pred, target)
    feats_pred = fx(pred)
    feats_target = fx(target)
    total = pred.new_zeros(())
    for tap in fx.taps:
        if tap not in calibration:
            raise ConfigError(f"calibration missing tap {tap!r}")
        weights = calibration[tap].to(pred.dtype)
        if weights.ndim != 1 or weights.shape[0] != feats_pred[tap].shape[1]:
            raise ConfigError(
                f"calibration for {tap!r} has {tuple(weights.shape)} weights, "
                f"features have {feats_pred[tap].shape[1]} channels"
            )
        if (weights < 0).any():
            raise ConfigError(f"calibration weights for {tap!r} must be >= 0")
        diff = _unit_normalize(feats_pred[tap]) - _unit_normalize(feats_target[tap])
        weighted = weights.view(1, -1, 1, 1) * diff**2
        total = total + weighted.sum(dim=1).mean()
    return total


def total_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    heat: torch.Tensor | None,
    cfg: LossConfig,
    fx: FeatureExtractor | None = None,
    calibration: dict[str, torch.Tensor] | None = None,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Weighted composite loss plus the unweighted per-term breakdown.

    Terms with a zero lambda are skipped entirely (no extractor or heatmap is
    touched for them); skipped terms report 0.0 in the breakdown.
    """
    total = pixel_mse(pred, target)
    breakdown = {"pix": float(total.detach()), "perc": 0.0, "heat": 0.0, "lpips": 0.0}

    if cfg.lambda_heat > 0:
        if heat is None:
            raise InputError("lambda_heat > 0 requires an importance map")
        term = heatmap_loss(pred, target, heat, cfg.heatmap)
        breakdown["heat"] = float(term.detach())
        total = total + cfg.lambda_heat * term
    if cfg.lambda_perc > 0:
        if fx is None:
            raise ConfigError("lambda_perc > 0 requires a feature extractor")
        term = perceptual_loss(pred, target, fx, cfg.perceptual_layers)
        breakdown["perc"] = float(term.detach())
        total = total + cfg.lambda_perc * term
    if cfg.lambda_lpips > 0:
        if fx is None:
            raise ConfigError("lambda_lpips > 0 requires a feature extractor")
        if calibration is None:
            raise ConfigError("lambda_lpips > 0 requires calibration weights")
        term = lpips_loss(pred, target, fx, calibration)
        breakdown["lpips"] = float(term.detach())
        total = total + cfg.lambda_lpips * term

    breakdown["total"] = float(total.detach())
    return total, breakdown
