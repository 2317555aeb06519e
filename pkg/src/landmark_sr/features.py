"""Frozen convolutional feature pyramids for the perceptual/LPIPS terms.

The default pyramid mirrors the VGG16 prefix up to its third block, exposing
taps named conv1_2, conv2_2 and conv3_3 (taken after the ReLU). Weights come
either from a named-tensor container on disk or from a seeded deterministic
initialization, so nothing has to be downloaded. Inputs in [-1, 1] are mapped
to [0, 1] and normalized with ImageNet channel statistics before the first
conv.

Container format (documented interface): a .npz archive with one array per
parameter ("{layer}.weight", "{layer}.bias") plus a "manifest" entry holding
a JSON string with the layer specs, tap names and normalization constants.
LPIPS calibration files use the same scheme with one per-channel weight
vector per tap.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, InputError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class ConvSpec:
    """One conv layer of the pyramid; pooling halves resolution beforehand."""

    name: str
    in_channels: int
    out_channels: int
    kernel: int = 3
    pool_before: bool = False
    relu: bool = True


VGG16_PREFIX = (
    ConvSpec("conv1_1", 3, 64),
    ConvSpec("conv1_2", 64, 64),
    ConvSpec("conv2_1", 64, 128, pool_before=True),
    ConvSpec("conv2_2", 128, 128),
    ConvSpec("conv3_1", 128, 256, pool_before=True),
    ConvSpec("conv3_2", 256, 256),
    ConvSpec("conv3_3", 256, 256),
)
DEFAULT_TAPS = ("conv1_2", "conv2_2", "conv3_3")


class FeatureExtractor(nn.Module):
    """Fixed feature pyramid with named tap points; weights never train."""

    def __init__(
        self,
        specs: tuple[ConvSpec, ...] = VGG16_PREFIX,
        taps: tuple[str, ...] = DEFAULT_TAPS,
        mean: tuple[float, ...] = IMAGENET_MEAN,
        std: tuple[float, ...] = IMAGENET_STD,
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate layer names in extractor spec")
        missing = [t for t in taps if t not in names]
        if missing:
            raise ConfigError(f"tap points {missing} not present in extractor spec")
        self.specs = tuple(specs)
        self.taps = tuple(taps)
        self.convs = nn.ModuleDict(
            {
                s.name: nn.Conv2d(
                    s.in_channels, s.out_channels, s.kernel,
                    padding=s.kernel // 2, dtype=dtype,
                )
                for s in specs
            }
        )
        self.register_buffer("mean", torch.tensor(mean, dtype=dtype).view(1, -1, 1, 1))
        self.register_buffer("std", torch.tensor(std, dtype=dtype).view(1, -1, 1, 1))
        for p in self.parameters():
            p.requires_grad_(False)

    def tap_channels(self) -> dict[str, int]:
        by_name = {s.name: s.out_channels for s in self.specs}
        return {t: by_name[t] for t in self.taps}

    def forward(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        """Map [-1, 1] images to {tap_name: activation}."""
        if x.ndim != 4 or x.shape[1] != self.mean.shape[1]:
            raise InputError(f"extractor expects NxCxHxW with C={self.mean.shape[1]}")
        h = ((x + 1.0) / 2.0 - self.mean) / self.std
        out = {}
        for spec in self.specs:
            if spec.pool_before:
                h = F.max_pool2d(h, 2)
            h = self.convs[spec.name](h)
            if spec.relu:
                h = torch.relu(h)
            if spec.name in self.taps:
                out[spec.name] = h
            if len(out) == len(self.taps):
                break
        return out


def seeded_extractor(
    specs: tuple[ConvSpec, ...] = VGG16_PREFIX,
    taps: tuple[str, ...] = DEFAULT_TAPS,
    seed: int = 0,
    dtype: torch.dtype = torch.float32,
    mean: tuple[float, ...] = IMAGENET_MEAN,
    std: tuple[float, ...] = IMAGENET_STD,
) -> FeatureExtractor:
    """Deterministic He-initialized extractor; no external weights needed."""
    fx = FeatureExtractor(specs, taps, mean, std, dtype)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for spec in fx.specs:
            conv = fx.convs[spec.name]
            fan_in = spec.in_channels * spec.kernel**2
            w = torch.randn(conv.weight.shape, generator=gen, dtype=torch.float64)
            conv.weight.copy_((w * (2.0 / fan_in) ** 0.5).to(conv.weight.dtype))
            conv.bias.zero_()
    return fx


def save_extractor(fx: FeatureExtractor, path: str | Path) -> None:
    manifest = {
        "layers": [asdict(s) for s in fx.specs],
        "taps": list(fx.taps),
        "mean": fx.mean.flatten().tolist(),
        "std": fx.std.flatten().tolist(),
        "tap_shapes": {t: c for t, c in fx.tap_channels().items()},
    }
    arrays = {}
    for name, conv in fx.convs.items():
        arrays[f"{name}.weight"] = conv.weight.detach().cpu().numpy()
        arrays[f"{name}.bias"] = conv.bias.detach().cpu().numpy()
    np.savez(path, manifest=json.dumps(manifest), **arrays)


def load_extractor(path: str | Path, dtype: torch.dtype = torch.float32) -> FeatureExtractor:
    with np.load(path, allow_pickle=False) as archive:
        manifest = json.loads(str(archive["manifest"]))
        specs = tuple(ConvSpec(**entry) for entry in manifest["layers"])
        fx = FeatureExtractor(
            specs,
            tuple(manifest["taps"]),
            tuple(manifest["mean"]),
            tuple(manifest["std"]),
            dtype,
        )
        with torch.no_grad():
            for name, conv in fx.convs.items():
                conv.weight.copy_(torch.from_numpy(archive[f"{name}.weight"]).to(dtype))
                conv.bias.copy_(torch.from_numpy(archive[f"{name}.bias"]).to(dtype))
    return fx


# --- LPIPS calibration -------------------------------------------------------


def uniform_calibration(fx: FeatureExtractor, value: float = 1.0) -> dict[str, torch.Tensor]:
    return {
        tap: torch.full((channels,), value, dtype=fx.mean.dtype)
        for tap, channels in fx.tap_channels().items()
    }


def seeded_calibration(fx: FeatureExtractor, seed: int = 0) -> dict[str, torch.Tensor]:
    gen = torch.Generator().manual_seed(seed)
    out = {}
    for tap, channels in fx.tap_channels().items():
        out[tap] = torch.rand(channels, generator=gen, dtype=torch.float64).to(fx.mean.dtype)
    return out


def save_calibration(cal: dict[str, torch.Tensor], path: str | Path) -> None:
    manifest = {"taps": {k: list(v.shape) for k, v in cal.items()}}
    np.savez(path, manifest=json.dumps(manifest), **{k: v.cpu().numpy() for k, v in cal.items()})


def load_calibration(path: str | Path, dtype: torch.dtype = torch.float32) -> dict[str, torch.Tensor]:
    with np.load(path, allow_pickle=False) as archive:
        manifest = json.loads(str(archive["manifest"]))
        out = {}
        for tap in manifest["taps"]:
            weights = torch.from_numpy(archive[tap]).to(dtype)
            if (weights < 0).any():
                raise ConfigError(f"calibration weights for {tap!r} must be >= 0")
            out[tap] = weights
    return out
