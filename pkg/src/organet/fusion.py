"""LGBP fusion: per-band cross attention between CNN and transformer features.

Both streams are split into Gaussian frequency sub-bands, transformer queries
attend to CNN keys/values inside every band, the attended bands are summed, and
a sigmoid gate blends that result with a projection of the raw concatenation.
"""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn as nn

from .attention import attend, merge_heads, split_heads, tokens, untokens
from .errors import ConfigError
from .freqbank import GaussianBandBank, eval_band, fourier, inverse_fourier, make_radius_grid, reconstruct_sum


class BandCrossAttention(nn.Module):
    """Queries from the transformer band, keys and values from the CNN band."""

    def __init__(self, channels: int, heads: int = 4):
        super().__init__()
        if channels % heads:
            raise ValueError(f"{channels} channels not divisible by {heads} heads")
        self.heads = heads
        self.q = nn.Linear(channels, channels, bias=False)
        self.k = nn.Linear(channels, channels, bias=False)
        self.v = nn.Linear(channels, channels, bias=False)

    def forward(self, f_t: torch.Tensor, f_c: torch.Tensor, return_weights: bool = False):
        if f_t.shape != f_c.shape:
            raise ValueError(f"band shapes differ: {tuple(f_t.shape)} vs {tuple(f_c.shape)}")
        h, w = f_t.shape[-2:]
        t, c = tokens(f_t), tokens(f_c)
        q = split_heads(self.q(t), self.heads)
        k = split_heads(self.k(c), self.heads)
        v = split_heads(self.v(c), self.heads)
        if return_weights:
            out, weights = attend(q, k, v, return_weights=True)
            return untokens(merge_heads(out), h, w), weights
        return untokens(merge_heads(attend(q, k, v)), h, w)


class LGBPFusion(nn.Module):
    def __init__(
        self,
        channels: int,
        num_bands: int = 4,
        heads: int = 4,
        mu: Sequence[float] | None = None,
        sigma: float | Sequence[float] = 0.15,
        alpha: float | Sequence[float] = 1.0,
    ):
        super().__init__()
        self.channels = channels
        self.bank = GaussianBandBank(num_bands, mu=mu, sigma=sigma, alpha=alpha)
        self.band_attn = nn.ModuleList(BandCrossAttention(channels, heads) for _ in range(num_bands))
        # both concatenations carry 2C channels; the gate and the spatial path reduce them to C
        self.gate = nn.Conv2d(2 * channels, channels, 1)
        self.proj = nn.Conv2d(2 * channels, channels, 1)

    def forward(self, f_c: torch.Tensor, f_t: torch.Tensor, return_details: bool = False):
        if f_c.shape != f_t.shape:
            raise ValueError(f"fusion inputs differ: {tuple(f_c.shape)} vs {tuple(f_t.shape)}")
        if len(self.band_attn) != self.bank.num_bands:
            raise ConfigError(f"filter bank has {self.bank.num_bands} bands but {len(self.band_attn)} attention blocks")
        h, w = f_c.shape[-2:]
        grid = make_radius_grid(h, w, dtype=f_c.dtype, device=f_c.device)
        spec_c, spec_t = fourier(f_c), fourier(f_t)
        attended, weights = [], []
        for k, attn in enumerate(self.band_attn):
            mask = eval_band(self.bank, k, grid).to(f_c.dtype)
            fc_k = inverse_fourier(spec_c * mask)
            ft_k = inverse_fourier(spec_t * mask)
            if return_details:
                out, wts = attn(ft_k, fc_k, return_weights=True)
                weights.append(wts)
            else:
                out = attn(ft_k, fc_k)
            attended.append(out)
        fused = reconstruct_sum(attended)
        gate = torch.sigmoid(self.gate(torch.cat([f_t, fused], dim=1)))
        spatial = self.proj(torch.cat([f_c, f_t], dim=1))
        out = gate * fused + (1 - gate) * spatial
        if return_details:
            return out, {"fused": fused, "spatial": spatial, "gate": gate, "attention": weights}
        return out
