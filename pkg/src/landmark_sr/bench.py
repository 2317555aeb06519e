"""Inference-efficiency harness: wall-clock latency over repeated passes.

Protocol: a fixed 1x3x16x16 input, a warmup phase, then per-pass timing of
`passes` forward executions (default 200). Timing covers only the forward
call; input preparation and serialization sit outside the timed region. On an
accelerator a synchronization barrier precedes every stop timestamp.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError
from .model import SRNet


@dataclass
class BenchReport:
    mean_latency_ms: float
    std_latency_ms: float
    fps: float
    warmup_passes: int
    measured_passes: int
    device_label: str
    input_shape: tuple[int, int, int, int]

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def measure_latency(
    net: SRNet,
    passes: int = 200,
    warmup: int = 20,
    device: str = "cpu",
) -> BenchReport:
    if passes < 1:
        raise ConfigError("need at least one measured pass")
    if warmup < 0:
        raise ConfigError("warmup must be >= 0")
    dev = torch.device(device)
    net = net.to(dev).eval()
    gen = torch.Generator().manual_seed(0)
    x = torch.randn(1, 3, 16, 16, generator=gen).to(dev)
    sync = torch.cuda.synchronize if dev.type == "cuda" else (lambda: None)

    times_ms = np.zeros(passes)
    with torch.no_grad():
        for _ in range(warmup):
            net(x)
        sync()
        for i in range(passes):
            start = time.perf_counter()
            net(x)
            sync()
            times_ms[i] = (time.perf_counter() - start) * 1e3

    mean = float(times_ms.mean())
    return BenchReport(
        mean_latency_ms=mean,
        std_latency_ms=float(times_ms.std()),
        fps=1000.0 / mean,
        warmup_passes=warmup,
        measured_passes=passes,
        device_label=f"{dev.type} ({torch.get_num_threads()} threads)" if dev.type == "cpu" else str(dev),
        input_shape=(1, 3, 16, 16),
    )
