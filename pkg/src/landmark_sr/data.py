"""Dataset plumbing: image ingestion, 8x degradation, splits, pairing.

Layout convention for a dataset root:

    {root}/hr/{id}.png          8-bit RGB 128x128 targets
    {root}/detections.jsonl     detector output (heatmap_prior interface)
    {root}/heatmaps/{id}.png    16-bit importance maps + manifest.json

Images are mapped to [-1, 1] float via v / 127.5 - 1.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError, InputError
from .heatmap import load_heatmap_manifest, load_heatmap_png
from .resample import MODES, resample

HR_SIZE = 128
LR_SIZE = 16


@dataclass(frozen=True)
class DegradationConfig:
    mode: str = "bilinear"
    antialias: bool = True
    bicubic_a: float = -0.5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"degradation mode must be one of {MODES}, got {self.mode!r}")


def load_image(path: str | Path) -> np.ndarray:
    """8-bit RGB file -> float64 CHW array in [-1, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return (arr / 127.5 - 1.0).transpose(2, 0, 1)


def save_image(path: str | Path, chw: np.ndarray) -> None:
    """[-1, 1] CHW array -> 8-bit RGB file (values clamped)."""
    arr = np.clip((np.asarray(chw) + 1.0) * 127.5, 0.0, 255.0)
    Image.fromarray(np.round(arr).astype(np.uint8).transpose(1, 2, 0)).save(path)


def to_unit(chw: np.ndarray) -> np.ndarray:
    """[-1, 1] -> [0, 1] with clamping; the range metrics are computed on."""
    return np.clip((np.asarray(chw) + 1.0) / 2.0, 0.0, 1.0)


def degrade(hr: np.ndarray, cfg: DegradationConfig) -> np.ndarray:
    """3x128x128 -> 3x16x16 with the configured kernel and antialias prefilter.

    Bicubic output is clamped to [-1, 1]; its kernel can overshoot slightly.
    """
    hr = np.asarray(hr, dtype=np.float64)
    if hr.shape != (3, HR_SIZE, HR_SIZE):
        raise InputError(f"degrade expects 3x{HR_SIZE}x{HR_SIZE}, got {hr.shape}")
    lr = resample(hr, LR_SIZE, LR_SIZE, cfg.mode, cfg.bicubic_a, cfg.antialias)
    if cfg.mode == "bicubic":
        lr = np.clip(lr, -1.0, 1.0)
    return lr


def upscale_reference(lr: np.ndarray, cfg: DegradationConfig) -> np.ndarray:
    """Deterministic x8 interpolation, same kernel family as the degradation.

    Serves as both the metric baseline and the network's global-skip term.
    """
    lr = np.asarray(lr, dtype=np.float64)
    if lr.shape != (3, LR_SIZE, LR_SIZE):
        raise InputError(f"upscale expects 3x{LR_SIZE}x{LR_SIZE}, got {lr.shape}")
    return resample(lr, HR_SIZE, HR_SIZE, cfg.mode, cfg.bicubic_a, antialias=False)


@dataclass
class SplitManifest:
    train: list[str]
    val: list[str]
    test: list[str]
    seed: int
    degradation: DegradationConfig = field(default_factory=DegradationConfig)

    def __post_init__(self):
        pools = [set(self.train), set(self.val), set(self.test)]
        total = sum(len(p) for p in pools)
        if len(pools[0] | pools[1] | pools[2]) != total:
            raise DataError("splits overlap or contain duplicate ids")

    @property
    def counts(self) -> dict[str, int]:
        return {"train": len(self.train), "val": len(self.val), "test": len(self.test)}

    def save(self, path: str | Path) -> None:
        payload = {
            "train": self.train,
            "val": self.val,
            "test": self.test,
            "seed": self.seed,
            "counts": self.counts,
            "degradation": asdict(self.degradation),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "SplitManifest":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(
            train=obj["train"],
            val=obj["val"],
            test=obj["test"],
            seed=obj["seed"],
            degradation=DegradationConfig(**obj["degradation"]),
        )


def make_splits(
    ids: list[str],
    ratios: tuple[float, float, float] | None = (0.8, 0.1, 0.1),
    counts: tuple[int, int, int] | None = None,
    seed: int = 0,
    degradation: DegradationConfig | None = None,
) -> SplitManifest:
    """Deterministic disjoint train/val/test split of unique ids."""
    if len(set(ids)) != len(ids):
        raise DataError("ids must be unique")
    n = len(ids)
    if counts is not None:
        n_train, n_val, n_test = counts
    else:
        n_val = int(n * ratios[1])
        n_test = int(n * ratios[2])
        n_train = n - n_val - n_test
    if n_train + n_val + n_test > n:
        raise DataError(f"requested {n_train}+{n_val}+{n_test} ids, only {n} available")

    order = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    shuffled = [ids[i] for i in order]
    return SplitManifest(
        train=shuffled[:n_train],
        val=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val : n_train + n_val + n_test],
        seed=seed,
        degradation=degradation or DegradationConfig(),
    )


class PairedDataset:
    """In-memory (LR, HR, heatmap) triples for one split.

    HR images are kept as uint8 and converted per access; LR tensors are
    cached at load time since the degradation is deterministic. A split id
    without a heatmap manifest entry is an error: silent all-zero substitutes
    would defeat the prior (a stored all-zero map, produced by an empty
    detection record, is fine).
    """

    def __init__(self, root: str | Path, ids: list[str], cfg: DegradationConfig):
        self.root = Path(root)
        self.ids = list(ids)
        self.cfg = cfg
        hr_dir = self.root / "hr"
        manifest_path = self.root / "heatmaps" / "manifest.json"
        if not manifest_path.exists():
            raise DataError(f"missing heatmap manifest {manifest_path}")
        index = load_heatmap_manifest(manifest_path)

        n = len(self.ids)
        self.hr_u8 = np.zeros((n, 3, HR_SIZE, HR_SIZE), dtype=np.uint8)
        self.lr = np.zeros((n, 3, LR_SIZE, LR_SIZE), dtype=np.float32)
        self.heat = np.zeros((n, HR_SIZE, HR_SIZE), dtype=np.float32)
        for k, image_id in enumerate(self.ids):
            path = hr_dir / f"{image_id}.png"
            if not path.exists():
                raise DataError(f"missing HR image {path}")
            if image_id not in index:
                raise DataError(f"no heatmap manifest entry for {image_id!r}")
            hr = load_image(path)
            self.hr_u8[k] = np.round((hr + 1.0) * 127.5).astype(np.uint8)
            self.lr[k] = degrade(hr, cfg).astype(np.float32)
            hmap = load_heatmap_png(self.root / index[image_id], image_id)
            if hmap.values.shape != (HR_SIZE, HR_SIZE):
                raise DataError(f"heatmap for {image_id!r} has shape {hmap.values.shape}")
            self.heat[k] = hmap.values.astype(np.float32)

    def __len__(self) -> int:
        return len(self.ids)

    def hr_batch(self, idx: np.ndarray) -> np.ndarray:
        return self.hr_u8[idx].astype(np.float32) / 127.5 - 1.0

    def batch(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.lr[idx], self.hr_batch(idx), self.heat[idx]
