from __future__ import annotations

import torch
import torch.nn as nn

from .config import EncoderConfig
from .decoder import BidirectionalCrossFusion, ProgressiveDecoder
from .encoder import DualEncoder


class LGBPOrgaNet(nn.Module):
    """Dual encoder, two cross-fusion sites (P0/P1 and P1/P2) and the progressive decoder."""

    def __init__(self, cfg: EncoderConfig | None = None):
        super().__init__()
        cfg = cfg or EncoderConfig()
        cfg.validate()
        self.cfg = cfg
        c0, side0 = cfg.base_channels, cfg.input_size // 4
        self.encoder = DualEncoder(cfg)
        bcf = dict(heads=cfg.bcf_heads, hidden_ratio=cfg.prefuse_hidden_ratio, gamma_init=cfg.bcf_gamma_init)
        self.bcf01 = BidirectionalCrossFusion(c0, side0, **bcf)
        self.bcf12 = BidirectionalCrossFusion(2 * c0, side0 // 2, **bcf)
        self.decoder = ProgressiveDecoder(c0)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        """Two-channel logits (background, organoid) at input resolution."""
        p0, p1, p2 = self.encoder(image)
        p0f = self.bcf01(p0, p1)
        p1f = self.bcf12(p1, p2)
        return self.decoder(p0f, p1f, p2)

    @torch.no_grad()
    def predict_proba(self, image: torch.Tensor) -> torch.Tensor:
        was_training = self.training
        self.eval()
        try:
            return self(image).softmax(dim=1)
        finally:
            self.train(was_training)


def model_forward(model: LGBPOrgaNet, image: torch.Tensor) -> torch.Tensor:
    """Per-pixel class probabilities ``(B, 2, H, W)``; channel 1 is organoid."""
    return model.predict_proba(image)
