import pytest
import torch

from organet.config import EncoderConfig, toy_config
from organet.decoder import BidirectionalCrossFusion, PatchExpand, ProgressiveDecoder
from organet.model import LGBPOrgaNet, model_forward


class TestPatchExpand:
    def test_rearrangement_matches_loop(self):
        torch.manual_seed(0)
        c = 8
        pe = PatchExpand(c).double()
        x = torch.randn(1, c, 3, 3, dtype=torch.float64)
        y = pe(x)
        assert y.shape == (1, c // 2, 6, 6)
        for i in range(3):
            for j in range(3):
                lin = pe.expand(x[0, :, i, j])
                for di in range(2):
                    for dj in range(2):
                        k = 2 * di + dj
                        ref = pe.norm(lin[k * c // 2 : (k + 1) * c // 2])
                        torch.testing.assert_close(y[0, :, 2 * i + di, 2 * j + dj], ref)

    def test_odd_channels(self):
        with pytest.raises(ValueError):
            PatchExpand(7)


@pytest.fixture
def bcf():
    torch.manual_seed(1)
    return BidirectionalCrossFusion(16, 8, heads=4)


class TestBCF:
    def test_initialization(self, bcf):
        assert bcf.gamma_h2l.item() == pytest.approx(0.1) and bcf.gamma_l2h.item() == pytest.approx(0.1)
        assert bcf.gate[2].bias.item() == 0.0
        assert bcf.bias_table.shape == (15 * 15, 4)

    def test_shapes_and_gate(self, bcf):
        out, d = bcf(torch.randn(2, 16, 8, 8), torch.randn(2, 32, 4, 4), return_details=True)
        assert out.shape == (2, 16, 8, 8)
        assert d["gate"].shape == (2, 64, 1)
        assert ((d["gate"] > 0) & (d["gate"] < 1)).all()
        for key in ("attn_h2l", "attn_l2h"):
            assert d[key].shape == (2, 4, 64, 64)
            assert (d[key].sum(-1) - 1).abs().max().item() < 1e-6

    def test_gate_mixes_directions(self, bcf):
        _, d = bcf(torch.randn(1, 16, 8, 8), torch.randn(1, 32, 4, 4), return_details=True)
        expected = d["gate"] * d["o_h2l"] + (1 - d["gate"]) * d["o_l2h"]
        torch.testing.assert_close(d["fused"], expected)

    def test_zero_gamma_reduces_to_skip(self, bcf):
        with torch.no_grad():
            bcf.gamma_h2l.zero_()
            bcf.gamma_l2h.zero_()
        high = torch.randn(1, 16, 8, 8)
        out = bcf(high, torch.randn(1, 32, 4, 4))
        tok = high.flatten(2).transpose(1, 2)
        ref = bcf.out_proj(torch.cat([tok, tok], dim=-1)).transpose(1, 2).reshape(1, 16, 8, 8)
        torch.testing.assert_close(out, ref)

    def test_contract_violations(self, bcf):
        with pytest.raises(ValueError):
            bcf(torch.randn(1, 16, 8, 8), torch.randn(1, 16, 4, 4))
        with pytest.raises(ValueError):
            bcf(torch.randn(1, 16, 6, 6), torch.randn(1, 32, 3, 3))

    def test_every_parameter_gets_gradient(self, bcf):
        out = bcf(torch.randn(2, 16, 8, 8), torch.randn(2, 32, 4, 4))
        (out**2).mean().backward()
        for name, p in bcf.named_parameters():
            assert p.grad is not None and p.grad.abs().sum() > 0, name


class TestDecoder:
    def test_shape_contract(self):
        dec = ProgressiveDecoder(8).eval()
        with torch.no_grad():
            out = dec(torch.randn(2, 8, 28, 28), torch.randn(2, 16, 14, 14), torch.randn(2, 32, 7, 7))
        assert out.shape == (2, 2, 112, 112)

    def test_level_mismatch(self):
        with pytest.raises(ValueError):
            ProgressiveDecoder(8)(torch.randn(1, 8, 28, 28), torch.randn(1, 16, 12, 12), torch.randn(1, 32, 6, 6))


class TestModel:
    @pytest.mark.parametrize(
        "cfg",
        [toy_config().encoder, EncoderConfig()],
        ids=["112-c32", "224-c96"],
    )
    def test_probability_maps(self, cfg):
        torch.manual_seed(0)
        model = LGBPOrgaNet(cfg)
        side = cfg.input_size
        prob = model_forward(model, torch.randn(1, 3, side, side))
        assert prob.shape == (1, 2, side, side)
        assert torch.isfinite(prob).all()
        assert (prob.sum(dim=1) - 1).abs().max().item() < 1e-6

    def test_predict_restores_mode(self):
        model = LGBPOrgaNet(toy_config().encoder).train()
        model.predict_proba(torch.randn(1, 3, 112, 112))
        assert model.training

    def test_backward_reaches_every_parameter(self):
        torch.manual_seed(0)
        model = LGBPOrgaNet(toy_config().encoder)
        logits = model(torch.randn(2, 3, 112, 112))
        logits.softmax(1)[:, 1].mean().backward()
        dead = [n for n, p in model.named_parameters() if p.grad is None or p.grad.abs().sum() == 0]
        assert dead == []
