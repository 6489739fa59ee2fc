import pytest
import torch

from organet.config import EncoderConfig, toy_config
from organet.encoder import (
    DualEncoder,
    InitBlock,
    PatchMerging,
    ResNetStage,
    SwinStage,
    window_partition,
    window_reverse,
)
from organet.errors import ConfigError


@pytest.fixture(scope="module")
def toy_encoder():
    torch.manual_seed(0)
    return DualEncoder(toy_config().encoder).eval()


class TestInitBlock:
    @pytest.mark.parametrize("side,c0,out", [(224, 96, 56), (112, 32, 28)])
    def test_quarter_resolution(self, side, c0, out):
        with torch.no_grad():
            y = InitBlock(c0).eval()(torch.rand(1, 3, side, side))
        assert y.shape == (1, c0, out, out)

    def test_indivisible_side(self):
        with pytest.raises(ConfigError, match="divisible by 16"):
            InitBlock(32)(torch.rand(1, 3, 225, 225))


class TestResNetStage:
    def test_zeros_finite(self):
        stage = ResNetStage(32, 16, 2, 1, 32).eval()
        raw, aligned = stage(torch.zeros(1, 32, 28, 28))
        assert torch.isfinite(raw).all() and torch.isfinite(aligned).all()

    def test_stage_table(self):
        c0 = 32
        s0 = ResNetStage(c0, 16, 1, 1, c0).eval()
        s1 = ResNetStage(s0.out_channels, 32, 1, 2, 2 * c0).eval()
        with torch.no_grad():
            raw0, a0 = s0(torch.rand(1, c0, 56, 56))
            _, a1 = s1(raw0)
        assert a0.shape == (1, c0, 56, 56)
        assert a1.shape == (1, 2 * c0, 28, 28)


class TestWindows:
    def test_window_counts(self):
        x = torch.arange(56 * 56, dtype=torch.float32).view(1, 56, 56, 1)
        win = window_partition(x, 7)
        assert win.shape == (64, 49, 1)
        assert sorted(win.flatten().tolist()) == list(range(56 * 56))
        assert torch.equal(window_reverse(win, 7, 56, 56), x)

    @pytest.mark.parametrize("shift", [0, 3])
    def test_partition_index_oracle(self, shift):
        s, w = 14, 7
        ids = torch.arange(s * s).view(1, s, s, 1).float()
        rolled = torch.roll(ids, shifts=(-shift, -shift), dims=(1, 2)) if shift else ids
        win = window_partition(rolled, w).squeeze(-1)
        for wi in range(win.shape[0]):
            expected_window = None
            for tok in win[wi].long().tolist():
                a, b = divmod(tok, s)
                idx = (((a - shift) % s) // w, ((b - shift) % s) // w)
                expected_window = expected_window or idx
                assert idx == expected_window

    def test_shifted_partition_differs(self):
        s, w = 14, 7
        ids = torch.arange(s * s).view(1, s, s, 1).float()
        plain = {frozenset(r.tolist()) for r in window_partition(ids, w).squeeze(-1)}
        shifted_ids = torch.roll(ids, shifts=(-3, -3), dims=(1, 2))
        shifted = {frozenset(r.tolist()) for r in window_partition(shifted_ids, w).squeeze(-1)}
        assert plain != shifted

    def test_indivisible(self):
        with pytest.raises(ConfigError):
            window_partition(torch.zeros(1, 10, 10, 1), 7)

    def test_stage_preserves_shape(self):
        stage = SwinStage(16, 14, 2, 2, 7)
        x = torch.randn(2, 14, 14, 16)
        assert stage(x).shape == x.shape
        assert stage.blocks[1].shift == 3 and stage.blocks[0].shift == 0

    def test_stage_rejects_bad_side(self):
        with pytest.raises(ConfigError):
            SwinStage(16, 10, 2, 2, 7)


class TestPatchMerging:
    def test_shape(self):
        assert PatchMerging(8)(torch.randn(1, 4, 4, 8)).shape == (1, 2, 2, 16)

    def test_constant_in_constant_out(self):
        y = PatchMerging(8)(torch.full((1, 4, 4, 8), 0.7))
        assert torch.allclose(y, y[:, :1, :1].expand_as(y))

    def test_odd_side(self):
        with pytest.raises(ValueError):
            PatchMerging(8)(torch.randn(1, 7, 7, 8))


class TestEncoderForward:
    def test_toy_pyramid(self, toy_encoder):
        with torch.no_grad():
            p0, p1, p2 = toy_encoder(torch.rand(1, 3, 112, 112))
        assert p0.shape == (1, 32, 28, 28)
        assert p1.shape == (1, 64, 14, 14)
        assert p2.shape == (1, 128, 7, 7)

    def test_default_pyramid(self):
        torch.manual_seed(0)
        enc = DualEncoder(EncoderConfig()).eval()
        with torch.no_grad():
            p0, p1, p2 = enc(torch.rand(1, 3, 224, 224))
        assert p0.shape == (1, 96, 56, 56)
        assert p1.shape == (1, 192, 28, 28)
        assert p2.shape == (1, 384, 14, 14)
        assert all(torch.isfinite(p).all() for p in (p0, p1, p2))

    def test_zero_image_finite(self, toy_encoder):
        with torch.no_grad():
            levels = toy_encoder(torch.zeros(1, 3, 112, 112))
        assert all(torch.isfinite(p).all() for p in levels)

    def test_random_inputs_finite(self, toy_encoder):
        with torch.no_grad():
            levels = toy_encoder(torch.rand(2, 3, 112, 112))
        for a, b in zip(levels[:-1], levels[1:]):
            assert b.shape[-1] * 2 == a.shape[-1] and b.shape[1] == 2 * a.shape[1]
        assert all(torch.isfinite(p).all() for p in levels)

    def test_gradient_reaches_both_branches_and_all_fusions(self):
        torch.manual_seed(3)
        enc = DualEncoder(toy_config().encoder)
        levels = enc(torch.rand(2, 3, 112, 112))
        sum((p**2).mean() for p in levels).backward()
        dead = [n for n, p in enc.named_parameters() if p.grad is None or p.grad.abs().sum() == 0]
        assert dead == []

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            DualEncoder(EncoderConfig(base_channels=32, input_size=112))  # 32 channels, 3 heads
