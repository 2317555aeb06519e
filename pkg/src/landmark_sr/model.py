"""Lightweight encoder-bottleneck-decoder SR network (16x16 -> 128x128).

Layer inventory, spatial path and channel widths are derived once in
`layer_plan`; the torch module, the analytic parameter count and the analytic
MAC count all read from that plan, so they cannot drift apart.

Topology: four encoder stages of two 3x3 convs each (LeakyReLU 0.2) at
channels [48, 96, 192, 384]; stages 2-4 downsample by making their first conv
stride-2 (16 -> 8 -> 4 -> 2), which is the placement that lands on the 7.3M
parameter / 4.0 GMAC budget. A two-conv bottleneck at 2x2/384 follows. The
decoder mirrors with fixed-kernel interpolation, skip concatenation and two
convs per stage back to 16x16/48. A learned upsampler (nearest x2 + conv,
three stages to 128) feeds the refinement head: 1x1 conv, N residual blocks
(two 3x3 convs each) at width 48, 1x1 projection to RGB. The interpolated
input is added as a global skip, so the network predicts a residual.

Interpolations are fixed matrices from `resample` (same kernels as the data
degradation); they carry no parameters and count zero MACs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, InputError
from .resample import resample_matrix

LR_SIZE = 16
HR_SIZE = 128


@dataclass(frozen=True)
class ModelConfig:
    base_channels: int = 48
    encoder_stages: int = 4
    leaky_slope: float = 0.2
    refinement_blocks: int = 5
    refinement_width: int = 48
    upsample_mode_skip: str = "bilinear"
    channel_schedule: tuple[int, ...] = (48, 96, 192, 384)

    def __post_init__(self):
        if self.encoder_stages != len(self.channel_schedule):
            raise ConfigError(
                f"encoder_stages={self.encoder_stages} but schedule has "
                f"{len(self.channel_schedule)} entries"
            )
        if self.channel_schedule[0] != self.base_channels:
            raise ConfigError("channel_schedule must start at base_channels")
        if self.refinement_blocks < 1:
            raise ConfigError("refinement_blocks must be >= 1")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError("leaky_slope must lie in (0, 1)")
        if self.upsample_mode_skip not in ("bilinear", "bicubic"):
            raise ConfigError(f"unknown upsample mode {self.upsample_mode_skip!r}")
        if any(c < 1 for c in self.channel_schedule) or self.refinement_width < 1:
            raise ConfigError("channel widths must be >= 1")


@dataclass(frozen=True)
class PlanEntry:
    name: str
    kind: str  # conv | interp | add
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    out_h: int
    out_w: int

    @property
    def params(self) -> int:
        if self.kind != "conv":
            return 0
        return self.in_channels * self.out_channels * self.kernel**2 + self.out_channels

    @property
    def macs(self) -> int:
        if self.kind != "conv":
            return 0
        return self.out_h * self.out_w * self.out_channels * self.in_channels * self.kernel**2


def layer_plan(cfg: ModelConfig, input_size: int = LR_SIZE) -> list[PlanEntry]:
    """Ordered layer inventory for a given input resolution."""
    plan: list[PlanEntry] = []
    sched = cfg.channel_schedule
    size = input_size

    def conv(name, cin, cout, k, stride, out):
        plan.append(PlanEntry(name, "conv", cin, cout, k, stride, out, out))

    # encoder: stage 1 at full resolution, stages 2..n downsample via their
    # first (stride-2) conv
    conv("enc1a", 3, sched[0], 3, 1, size)
    conv("enc1b", sched[0], sched[0], 3, 1, size)
    for s in range(1, cfg.encoder_stages):
        size //= 2
        conv(f"enc{s + 1}a", sched[s - 1], sched[s], 3, 2, size)
        conv(f"enc{s + 1}b", sched[s], sched[s], 3, 1, size)

    conv("bottleneck1", sched[-1], sched[-1], 3, 1, size)
    conv("bottleneck2", sched[-1], sched[-1], 3, 1, size)

    # decoder: mirror of stages n-1..1, skip concatenation then two convs
    ch = sched[-1]
    for s in range(cfg.encoder_stages - 2, -1, -1):
        size *= 2
        plan.append(PlanEntry(f"dec{s + 1}_up", "interp", ch, ch, 0, 0, size, size))
        conv(f"dec{s + 1}a", ch + sched[s], sched[s], 3, 1, size)
        conv(f"dec{s + 1}b", sched[s], sched[s], 3, 1, size)
        ch = sched[s]

    # learned upsampler: nearest x2 + conv, three stages to the HR frame
    rw = cfg.refinement_width
    cin = ch
    for s in range(3):
        size *= 2
        plan.append(PlanEntry(f"lu{s + 1}_nearest", "interp", cin, cin, 0, 0, size, size))
        conv(f"lu{s + 1}", cin, rw, 3, 1, size)
        cin = rw

    conv("refine_in", rw, rw, 1, 1, size)
    for b in range(cfg.refinement_blocks):
        conv(f"refine_block{b + 1}a", rw, rw, 3, 1, size)
        conv(f"refine_block{b + 1}b", rw, rw, 3, 1, size)
    conv("refine_out", rw, 3, 1, 1, size)
    plan.append(PlanEntry("global_skip", "add", 3, 3, 0, 0, size, size))
    return plan


def count_params(cfg: ModelConfig) -> int:
    return sum(e.params for e in layer_plan(cfg))


def count_macs(cfg: ModelConfig, input_size: int = LR_SIZE) -> int:
    return sum(e.macs for e in layer_plan(cfg, input_size))


def plan_table(cfg: ModelConfig, input_size: int = LR_SIZE) -> str:
    """Per-layer TSV report: name, output shape, params, MACs."""
    lines = ["name\tout_shape\tparams\tmacs"]
    for e in layer_plan(cfg, input_size):
        lines.append(f"{e.name}\t{e.out_channels}x{e.out_h}x{e.out_w}\t{e.params}\t{e.macs}")
    total_p = count_params(cfg)
    total_m = count_macs(cfg, input_size)
    lines.append(f"total\t-\t{total_p}\t{total_m}")
    return "\n".join(lines) + "\n"


class _ResBlock(nn.Module):
    def __init__(self, width: int, slope: float):
        super().__init__()
        self.conv_a = nn.Conv2d(width, width, 3, padding=1)
        self.conv_b = nn.Conv2d(width, width, 3, padding=1)
        self.act = nn.LeakyReLU(slope)

    def forward(self, x):
        return x + self.conv_b(self.act(self.conv_a(x)))


class SRNet(nn.Module):
    """The network materialized from a ModelConfig.

    Forward takes (B, 3, 16, 16) in [-1, 1] and returns (B, 3, 128, 128),
    unclamped (clamping is an inference-time concern; it would zero gradients
    at saturation during training).
    """

    def __init__(self, cfg: ModelConfig, debug_shapes: bool = False):
        super().__init__()
        self.cfg = cfg
        self.debug_shapes = debug_shapes
        sched = cfg.channel_schedule
        self.act = nn.LeakyReLU(cfg.leaky_slope)

        def conv(cin, cout, k=3, stride=1):
            return nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2)

        self.encoder = nn.ModuleList()
        self.encoder.append(nn.ModuleList([conv(3, sched[0]), conv(sched[0], sched[0])]))
        for s in range(1, cfg.encoder_stages):
            self.encoder.append(
                nn.ModuleList([conv(sched[s - 1], sched[s], stride=2), conv(sched[s], sched[s])])
            )
        self.bottleneck1 = conv(sched[-1], sched[-1])
        self.bottleneck2 = conv(sched[-1], sched[-1])

        self.decoder = nn.ModuleList()
        ch = sched[-1]
        for s in range(cfg.encoder_stages - 2, -1, -1):
            self.decoder.append(nn.ModuleList([conv(ch + sched[s], sched[s]), conv(sched[s], sched[s])]))
            ch = sched[s]

        rw = cfg.refinement_width
        self.upsampler = nn.ModuleList([conv(ch if s == 0 else rw, rw) for s in range(3)])
        self.refine_in = conv(rw, rw, k=1)
        self.blocks = nn.ModuleList([_ResBlock(rw, cfg.leaky_slope) for _ in range(cfg.refinement_blocks)])
        self.refine_out = conv(rw, 3, k=1)

        # fixed interpolation matrices: decoder x2 steps and the x8 global skip
        a = -0.5
        size = LR_SIZE // 2 ** (cfg.encoder_stages - 1)
        for s in range(cfg.encoder_stages - 1):
            m = resample_matrix(size, size * 2, cfg.upsample_mode_skip, a, antialias=False)
            self.register_buffer(f"up_mat_{s}", torch.from_numpy(m).to(torch.float32))
            size *= 2
        skip = resample_matrix(LR_SIZE, HR_SIZE, cfg.upsample_mode_skip, a, antialias=False)
        self.register_buffer("skip_mat", torch.from_numpy(skip).to(torch.float32))

    @staticmethod
    def _interp(x: torch.Tensor, mat: torch.Tensor) -> torch.Tensor:
        m = mat.to(x.dtype)
        return torch.einsum("ij,bcjk,lk->bcil", m, x, m)

    def interpolate_input(self, x: torch.Tensor) -> torch.Tensor:
        """The global-skip term: fixed x8 interpolation of the LR input."""
        return self._interp(x, self.skip_mat)

    def _assert_size(self, t: torch.Tensor, size: int) -> None:
        if self.debug_shapes and t.shape[-1] != size:
            raise AssertionError(f"expected spatial size {size}, got {tuple(t.shape)}")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1:] != (3, LR_SIZE, LR_SIZE):
            raise InputError(f"expected Bx3x{LR_SIZE}x{LR_SIZE} input, got {tuple(x.shape)}")
        act = self.act
        skips = []
        h = x
        size = LR_SIZE
        for s, (conv_a, conv_b) in enumerate(self.encoder):
            h = act(conv_b(act(conv_a(h))))
            if s > 0:
                size //= 2
            self._assert_size(h, size)
            skips.append(h)
        h = act(self.bottleneck2(act(self.bottleneck1(h))))

        for d, (conv_a, conv_b) in enumerate(self.decoder):
            h = self._interp(h, getattr(self, f"up_mat_{d}"))
            size *= 2
            skip = skips[self.cfg.encoder_stages - 2 - d]
            h = act(conv_b(act(conv_a(torch.cat([h, skip], dim=1)))))
            self._assert_size(h, size)

        for conv in self.upsampler:
            h = torch.nn.functional.interpolate(h, scale_factor=2, mode="nearest")
            h = act(conv(h))
            size *= 2
            self._assert_size(h, size)

        h = self.refine_in(h)
        for block in self.blocks:
            h = block(h)
        residual = self.refine_out(h)
        return residual + self.interpolate_input(x)


def build(cfg: ModelConfig, seed: int, debug_shapes: bool = False) -> SRNet:
    """Materialize the network with a seed-deterministic initialization.

    Conv kernels use He fan-in scaling matched to the LeakyReLU slope; biases
    start at zero. The one exception is the final RGB projection, which starts
    at zero so the initial forward pass equals the interpolated input: with
    He noise everywhere the 25-conv residual stack emits outputs with std ~8
    and early training only fights amplitude. Identical seeds give
    bit-identical parameters.
    """
    net = SRNet(cfg, debug_shapes=debug_shapes)
    gen = torch.Generator().manual_seed(seed)
    gain2 = 2.0 / (1.0 + cfg.leaky_slope**2)
    with torch.no_grad():
        for name, module in net.named_modules():
            if isinstance(module, nn.Conv2d):
                fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
                std = (gain2 / fan_in) ** 0.5
                w = torch.randn(module.weight.shape, generator=gen, dtype=torch.float64)
                module.weight.copy_((w * std).to(module.weight.dtype))
                module.bias.zero_()
        net.refine_out.weight.zero_()
    return net


def materialized_param_count(net: SRNet) -> int:
    return sum(p.numel() for p in net.parameters() if p.requires_grad)


# --- checkpoints --------------------------------------------------------------


def save_checkpoint(
    path: str | Path,
    net: SRNet,
    seed: int,
    epoch: int,
    extra: dict | None = None,
    optimizer_state: str | None = None,
) -> None:
    """Named-tensor container (.npz) plus a JSON sidecar with the config."""
    path = Path(path)
    arrays = {k: v.detach().cpu().numpy() for k, v in net.state_dict().items()}
    np.savez(path.with_suffix(".npz"), **arrays)
    sidecar = {
        "model_config": asdict(net.cfg),
        "seed": seed,
        "epoch": epoch,
        "optimizer_state": optimizer_state,
    }
    if extra:
        sidecar.update(extra)
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str | Path) -> tuple[SRNet, dict]:
    path = Path(path)
    with open(path.with_suffix(".json"), "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    cfg_dict = dict(sidecar["model_config"])
    cfg_dict["channel_schedule"] = tuple(cfg_dict["channel_schedule"])
    cfg = ModelConfig(**cfg_dict)
    net = SRNet(cfg)
    with np.load(path.with_suffix(".npz"), allow_pickle=False) as archive:
        state = {k: torch.from_numpy(archive[k]) for k in archive.files}
    try:
        net.load_state_dict(state)
    except RuntimeError as exc:
        raise ConfigError(f"checkpoint weights do not match its config: {exc}") from exc
    return net, sidecar
