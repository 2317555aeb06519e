import numpy as np
import pytest
import torch

from landmark_sr.errors import ConfigError, InputError
from landmark_sr.features import (
    VGG16_PREFIX,
    ConvSpec,
    load_calibration,
    load_extractor,
    save_calibration,
    save_extractor,
    seeded_calibration,
    seeded_extractor,
    uniform_calibration,
)


def test_default_tap_shapes():
    fx = seeded_extractor(seed=0)
    x = torch.randn(1, 3, 128, 128)
    feats = fx(x)
    assert feats["conv1_2"].shape == (1, 64, 128, 128)
    assert feats["conv2_2"].shape == (1, 128, 64, 64)
    assert feats["conv3_3"].shape == (1, 256, 32, 32)


def test_weights_are_frozen():
    fx = seeded_extractor(seed=0)
    assert all(not p.requires_grad for p in fx.parameters())


def test_seeded_determinism():
    a = seeded_extractor(seed=11)
    b = seeded_extractor(seed=11)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    c = seeded_extractor(seed=12)
    assert not torch.equal(a.convs["conv1_1"].weight, c.convs["conv1_1"].weight)


def test_gradient_flows_to_input_not_weights():
    fx = seeded_extractor(seed=0)
    x = torch.randn(1, 3, 32, 32, requires_grad=True)
    feats = fx(x)
    feats["conv1_2"].sum().backward()
    assert x.grad is not None
    assert fx.convs["conv1_1"].weight.grad is None


def test_extractor_round_trip(tmp_path):
    specs = (ConvSpec("a", 3, 4), ConvSpec("b", 4, 6, pool_before=True))
    fx = seeded_extractor(specs, ("a", "b"), seed=3)
    save_extractor(fx, tmp_path / "fx.npz")
    back = load_extractor(tmp_path / "fx.npz")
    assert back.taps == ("a", "b")
    x = torch.randn(1, 3, 16, 16)
    fa, fb = fx(x), back(x)
    torch.testing.assert_close(fa["b"], fb["b"], rtol=0, atol=0)


def test_unknown_tap_rejected():
    with pytest.raises(ConfigError):
        seeded_extractor(VGG16_PREFIX, ("conv4_1",))


def test_wrong_channel_input_rejected():
    fx = seeded_extractor(seed=0)
    with pytest.raises(InputError):
        fx(torch.randn(1, 1, 32, 32))


def test_calibration_round_trip(tmp_path):
    fx = seeded_extractor(seed=0)
    cal = seeded_calibration(fx, seed=4)
    save_calibration(cal, tmp_path / "cal.npz")
    back = load_calibration(tmp_path / "cal.npz")
    for tap in fx.taps:
        torch.testing.assert_close(back[tap], cal[tap], rtol=0, atol=0)


def test_negative_calibration_rejected_on_load(tmp_path):
    fx = seeded_extractor(seed=0)
    cal = uniform_calibration(fx)
    cal["conv1_2"] = cal["conv1_2"] * -1.0
    save_calibration(cal, tmp_path / "bad.npz")
    with pytest.raises(ConfigError):
        load_calibration(tmp_path / "bad.npz")


def test_uniform_calibration_shapes():
    fx = seeded_extractor(seed=0)
    cal = uniform_calibration(fx, 2.5)
    assert cal["conv3_3"].shape == (256,)
    assert float(cal["conv1_2"].max()) == 2.5


def test_input_normalization_applied():
    # with zero-mean/unit-std stats, an identity conv returns (x+1)/2 exactly
    spec = (ConvSpec("id", 3, 3, kernel=1, relu=False),)
    fx = seeded_extractor(spec, ("id",), seed=0, mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0))
    with torch.no_grad():
        fx.convs["id"].weight.copy_(torch.eye(3).view(3, 3, 1, 1))
        fx.convs["id"].bias.zero_()
    x = torch.rand(1, 3, 4, 4) * 2 - 1
    np.testing.assert_allclose(fx(x)["id"].numpy(), ((x + 1) / 2).numpy(), atol=1e-7)
