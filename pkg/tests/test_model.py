import numpy as np
import pytest
import torch

from landmark_sr.errors import ConfigError, InputError
from landmark_sr.model import (
    ModelConfig,
    build,
    count_macs,
    count_params,
    layer_plan,
    load_checkpoint,
    materialized_param_count,
    plan_table,
    save_checkpoint,
)

TINY = ModelConfig(
    base_channels=4,
    channel_schedule=(4, 6, 8, 10),
    refinement_blocks=1,
    refinement_width=4,
)


class TestBudgets:
    def test_default_parameter_budget(self):
        p = count_params(ModelConfig())
        assert p == 7306371
        assert 7.3e6 * 0.95 <= p <= 7.3e6 * 1.05

    def test_one_block_parameter_budget(self):
        p = count_params(ModelConfig(refinement_blocks=1))
        assert p == 7140099
        assert 7.1e6 * 0.95 <= p <= 7.1e6 * 1.05

    def test_parameter_delta_is_four_blocks(self):
        delta = count_params(ModelConfig()) - count_params(ModelConfig(refinement_blocks=1))
        assert delta == 4 * (2 * (48 * 48 * 9 + 48))  # ~0.166M

    def test_default_mac_budget(self):
        m = count_macs(ModelConfig())
        assert m == 3987247104
        assert 4.0e9 * 0.9 <= m <= 4.0e9 * 1.1

    def test_one_block_mac_budget(self):
        m = count_macs(ModelConfig(refinement_blocks=1))
        assert m == 1269338112
        assert 1.28e9 * 0.9 <= m <= 1.28e9 * 1.1

    def test_mac_delta_is_exactly_four_blocks(self):
        delta = count_macs(ModelConfig()) - count_macs(ModelConfig(refinement_blocks=1))
        assert delta == 4 * 2 * (128 * 128 * 48 * 48 * 9)

    def test_single_conv_mac_formula(self):
        # one 3x3 conv, 48 -> 48 at 128x128
        entry = next(e for e in layer_plan(ModelConfig()) if e.name == "refine_block1a")
        assert entry.macs == 16384 * 48 * 48 * 9 == 339738624

    def test_single_conv_param_formula(self):
        # 3x3 conv 48 -> 96 with bias (the stage-2 downsample)
        entry = next(e for e in layer_plan(ModelConfig()) if e.name == "enc2a")
        assert entry.params == 48 * 96 * 9 + 96 == 41568

    @pytest.mark.parametrize("cfg", [ModelConfig(), ModelConfig(refinement_blocks=1), TINY])
    def test_materialized_equals_analytic(self, cfg):
        net = build(cfg, seed=0)
        assert materialized_param_count(net) == count_params(cfg)


class TestPlan:
    def test_spatial_path(self):
        plan = {e.name: e for e in layer_plan(ModelConfig())}
        assert [plan[f"enc{s}b"].out_h for s in (1, 2, 3, 4)] == [16, 8, 4, 2]
        assert plan["bottleneck2"].out_h == 2
        assert [plan[f"dec{s}b"].out_h for s in (3, 2, 1)] == [4, 8, 16]
        assert [plan[f"lu{s}"].out_h for s in (1, 2, 3)] == [32, 64, 128]
        assert plan["refine_out"].out_h == 128

    def test_interpolations_cost_nothing(self):
        for entry in layer_plan(ModelConfig()):
            if entry.kind != "conv":
                assert entry.params == 0 and entry.macs == 0

    def test_table_format(self):
        table = plan_table(ModelConfig())
        lines = table.strip().splitlines()
        assert lines[0] == "name\tout_shape\tparams\tmacs"
        assert lines[-1].startswith("total\t")
        total = int(lines[-1].split("\t")[2])
        assert total == count_params(ModelConfig())


class TestForward:
    def test_output_shape(self):
        net = build(TINY, seed=0)
        y = net(torch.randn(2, 3, 16, 16))
        assert y.shape == (2, 3, 128, 128)

    def test_wrong_input_shape(self):
        net = build(TINY, seed=0)
        with pytest.raises(InputError):
            net(torch.randn(1, 3, 32, 32))

    def test_zero_projection_gives_plain_interpolation(self):
        net = build(TINY, seed=1)
        with torch.no_grad():
            net.refine_out.weight.zero_()
            net.refine_out.bias.zero_()
        x = torch.randn(1, 3, 16, 16)
        torch.testing.assert_close(net(x), net.interpolate_input(x), rtol=0, atol=0)

    def test_batched_equals_looped(self):
        net = build(TINY, seed=2)
        gen = torch.Generator().manual_seed(3)
        x = torch.randn(4, 3, 16, 16, generator=gen)
        with torch.no_grad():
            batched = net(x)
            looped = torch.cat([net(x[i : i + 1]) for i in range(4)])
        torch.testing.assert_close(batched, looped, rtol=0, atol=2e-6)

    def test_seed_determinism(self):
        a = build(TINY, seed=42)
        b = build(TINY, seed=42)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)
        x = torch.randn(1, 3, 16, 16)
        with torch.no_grad():
            torch.testing.assert_close(a(x), b(x), rtol=0, atol=0)

    def test_different_seeds_differ(self):
        a = build(TINY, seed=0)
        b = build(TINY, seed=1)
        assert not torch.equal(a.encoder[0][0].weight, b.encoder[0][0].weight)

    def test_debug_shape_mode(self):
        net = build(TINY, seed=0, debug_shapes=True)
        net(torch.randn(1, 3, 16, 16))  # passes all internal assertions

    def test_global_skip_matches_reference_upscaler(self):
        from landmark_sr.data import DegradationConfig, upscale_reference

        net = build(ModelConfig(), seed=0)
        gen = torch.Generator().manual_seed(4)
        x = torch.randn(1, 3, 16, 16, generator=gen)
        skip = net.interpolate_input(x.double())[0].numpy()
        ref = upscale_reference(x[0].double().numpy(), DegradationConfig(mode="bilinear"))
        np.testing.assert_allclose(skip, ref, atol=1e-12)

    def test_end_to_end_gradient_sampled_params(self):
        # pixel MSE through the tiny net in float64; sampled coordinates
        net = build(TINY, seed=5).double()
        gen = torch.Generator().manual_seed(6)
        x = torch.randn(1, 3, 16, 16, generator=gen, dtype=torch.float64)
        target = torch.randn(1, 3, 128, 128, generator=gen, dtype=torch.float64)

        def loss_fn():
            return ((net(x) - target) ** 2).mean()

        loss = loss_fn()
        loss.backward()
        rng = np.random.default_rng(7)
        checked = 0
        for param in net.parameters():
            flat = param.data.view(-1)
            gflat = param.grad.view(-1)
            for i in rng.choice(flat.numel(), size=min(3, flat.numel()), replace=False):
                orig = float(flat[i])
                eps = 1e-5
                with torch.no_grad():
                    flat[i] = orig + eps
                    up = float(loss_fn())
                    flat[i] = orig - eps
                    down = float(loss_fn())
                    flat[i] = orig
                numeric = (up - down) / (2 * eps)
                analytic = float(gflat[i])
                scale = max(abs(numeric), abs(analytic), 1e-8)
                assert abs(numeric - analytic) / scale < 1e-4
                checked += 1
        assert checked >= 30


class TestConfigValidation:
    def test_schedule_length_mismatch(self):
        with pytest.raises(ConfigError):
            ModelConfig(encoder_stages=3)

    def test_schedule_start(self):
        with pytest.raises(ConfigError):
            ModelConfig(channel_schedule=(32, 96, 192, 384))

    def test_bad_blocks(self):
        with pytest.raises(ConfigError):
            ModelConfig(refinement_blocks=0)

    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            ModelConfig(upsample_mode_skip="nearest")


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        net = build(TINY, seed=9)
        save_checkpoint(tmp_path / "ckpt", net, seed=9, epoch=3, extra={"score": -1.0})
        loaded, sidecar = load_checkpoint(tmp_path / "ckpt")
        assert sidecar["epoch"] == 3 and sidecar["seed"] == 9
        assert sidecar["score"] == -1.0
        x = torch.randn(1, 3, 16, 16)
        with torch.no_grad():
            torch.testing.assert_close(net(x), loaded(x), rtol=0, atol=0)

    def test_mismatched_config_rejected(self, tmp_path):
        net = build(TINY, seed=0)
        save_checkpoint(tmp_path / "ckpt", net, seed=0, epoch=1)
        # corrupt the sidecar config so weights no longer match
        import json

        sidecar = json.loads((tmp_path / "ckpt.json").read_text())
        sidecar["model_config"]["refinement_blocks"] = 3
        (tmp_path / "ckpt.json").write_text(json.dumps(sidecar))
        with pytest.raises(ConfigError):
            load_checkpoint(tmp_path / "ckpt")
