"""Quality metrics: PSNR, windowed SSIM, and 5-scale MS-SSIM.

All metrics are computed on [0, 1]-valued arrays (HW or CHW; channels are
averaged). SSIM follows the canonical recipe: 11x11 Gaussian window with
sigma 1.5, K1=0.01, K2=0.03, dynamic range 1.0, averaged over valid windows
only. MS-SSIM uses the standard five scale exponents with 2x2 mean-pool
downsampling between scales; at the coarsest 8x8 scale the window shrinks to
fit (largest odd size <= the image side, sigma unchanged) and negative
per-scale terms are clamped to zero before the product.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
PSNR_CAP_DB = 100.0


def _as_channels(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        return a[None]
    if a.ndim == 3:
        return a
    raise InputError(f"expected HW or CHW image, got shape {a.shape}")


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE); +inf for identical inputs."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def _gauss1d(size: int, sigma: float) -> np.ndarray:
    t = np.arange(size, dtype=np.float64) - (size - 1) / 2
    k = np.exp(-(t**2) / (2.0 * sigma**2))
    return k / k.sum()


def _window_mean(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    # separable weighted local mean, valid windows only
    v = np.lib.stride_tricks.sliding_window_view(x, len(k), axis=0) @ k
    return np.lib.stride_tricks.sliding_window_view(v, len(k), axis=1) @ k


def _ssim_cs_single(x: np.ndarray, y: np.ndarray, window: int, sigma: float) -> tuple[float, float]:
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    k = _gauss1d(window, sigma)
    mu1, mu2 = _window_mean(x, k), _window_mean(y, k)
    s11 = _window_mean(x * x, k) - mu1 * mu1
    s22 = _window_mean(y * y, k) - mu2 * mu2
    s12 = _window_mean(x * y, k) - mu1 * mu2
    lum = (2 * mu1 * mu2 + c1) / (mu1**2 + mu2**2 + c1)
    cs = (2 * s12 + c2) / (s11 + s22 + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def _fit_window(h: int, w: int, requested: int) -> int:
    size = min(requested, h, w)
    if size % 2 == 0:
        size -= 1
    if size < 1:
        raise InputError(f"image {h}x{w} smaller than any odd window")
    return size


def ssim(a: np.ndarray, b: np.ndarray, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> float:
    """Mean SSIM over valid windows, averaged across channels."""
    xa, xb = _as_channels(a), _as_channels(b)
    if xa.shape != xb.shape:
        raise InputError(f"shape mismatch {xa.shape} vs {xb.shape}")
    h, w = xa.shape[-2:]
    if h < window or w < window:
        raise InputError(f"image {h}x{w} smaller than the {window}x{window} window")
    vals = [_ssim_cs_single(xa[c], xb[c], window, sigma)[0] for c in range(xa.shape[0])]
    return float(np.mean(vals))


def _downsample2(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    h2, w2 = h // 2, w // 2
    return x[: h2 * 2, : w2 * 2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def ms_ssim(a: np.ndarray, b: np.ndarray, weights: tuple[float, ...] = MS_SSIM_WEIGHTS) -> float:
    """Multi-scale SSIM: cs terms at the finer scales, full SSIM at the coarsest."""
    xa, xb = _as_channels(a), _as_channels(b)
    if xa.shape != xb.shape:
        raise InputError(f"shape mismatch {xa.shape} vs {xb.shape}")
    levels = len(weights)
    min_side = min(xa.shape[-2:])
    if min_side < 2 ** (levels - 1):
        raise InputError(f"min side {min_side} too small for {levels} dyadic scales")

    per_channel = []
    for c in range(xa.shape[0]):
        x, y = xa[c], xb[c]
        score = 1.0
        for level, weight in enumerate(weights):
            win = _fit_window(x.shape[0], x.shape[1], SSIM_WINDOW)
            s, cs = _ssim_cs_single(x, y, win, SSIM_SIGMA)
            term = s if level == levels - 1 else cs
            score *= max(term, 0.0) ** weight
            if level < levels - 1:
                x, y = _downsample2(x), _downsample2(y)
        per_channel.append(score)
    return float(np.mean(per_channel))


@dataclass
class MetricReport:
    """Per-image metric values plus their arithmetic means."""

    image_ids: list[str]
    psnr_db: list[float]
    ssim: list[float]
    ms_ssim: list[float]
    psnr_capped: list[bool] = field(default_factory=list)

    @property
    def mean_psnr_db(self) -> float:
        return float(np.mean(self.psnr_db))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim))

    @property
    def mean_ms_ssim(self) -> float:
        return float(np.mean(self.ms_ssim))

    def to_dict(self) -> dict:
        return {
            "aggregate": {
                "psnr_db": self.mean_psnr_db,
                "ssim": self.mean_ssim,
                "ms_ssim": self.mean_ms_ssim,
                "images": len(self.image_ids),
            },
            "per_image": [
                {
                    "image_id": i,
                    "psnr_db": p,
                    "psnr_capped": c,
                    "ssim": s,
                    "ms_ssim": m,
                }
                for i, p, c, s, m in zip(
                    self.image_ids, self.psnr_db, self.psnr_capped, self.ssim, self.ms_ssim
                )
            ],
        }


def evaluate_pairs(
    image_ids: list[str],
    preds: np.ndarray,
    targets: np.ndarray,
) -> MetricReport:
    """Score [0,1]-valued prediction/target stacks (N,C,H,W) image by image."""
    report = MetricReport(image_ids=list(image_ids), psnr_db=[], ssim=[], ms_ssim=[])
    for pred, target in zip(preds, targets):
        p = psnr(pred, target)
        capped = not math.isfinite(p)
        report.psnr_db.append(PSNR_CAP_DB if capped else p)
        report.psnr_capped.append(capped)
        report.ssim.append(ssim(pred, target))
        report.ms_ssim.append(ms_ssim(pred, target))
    return report


def write_report(report: MetricReport, csv_path: str | Path, json_path: str | Path) -> None:
    """Per-image CSV plus aggregate JSON, the `eval` output pair."""
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "psnr_db", "psnr_capped", "ssim", "ms_ssim"])
        for row in report.to_dict()["per_image"]:
            writer.writerow(
                [row["image_id"], repr(row["psnr_db"]), int(row["psnr_capped"]),
                 repr(row["ssim"]), repr(row["ms_ssim"])]
            )
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
