"""Bidirectional cross fusion of adjacent pyramid levels and the progressive decoder."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import attend, merge_heads, split_heads, tokens, untokens
from .encoder import relative_position_index


class PatchExpand(nn.Module):
    """Linear c -> 2c, then each 2x2 output cell takes one c/2 channel group.

    ``(B, c, s, s) -> (B, c/2, 2s, 2s)``.
    """

    def __init__(self, channels: int, identity_init: bool = False):
        super().__init__()
        if channels % 2:
            raise ValueError(f"patch expansion needs an even channel count, got {channels}")
        self.channels = channels
        self.expand = nn.Linear(channels, 2 * channels, bias=False)
        self.norm = nn.LayerNorm(channels // 2)
        if identity_init:
            with torch.no_grad():
                self.expand.weight.copy_(torch.cat([torch.eye(channels), torch.eye(channels)]))

    def forward(self, x):
        b, c, s, t = x.shape
        if c != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {c}")
        y = self.expand(x.permute(0, 2, 3, 1))  # (B, s, t, 2c)
        y = y.reshape(b, s, t, 2, 2, c // 2).permute(0, 1, 3, 2, 4, 5).reshape(b, 2 * s, 2 * t, c // 2)
        return self.norm(y).permute(0, 3, 1, 2)


class BidirectionalCrossFusion(nn.Module):
    """Mutual attention between a pyramid level and the upsampled level below it.

    ``p_high`` is ``(B, C, s, s)``; ``p_low`` is ``(B, 2C, s/2, s/2)``.
    """

    def __init__(
        self,
        channels: int,
        side: int,
        heads: int = 4,
        hidden_ratio: float = 2.0,
        gamma_init: float = 0.1,
    ):
        super().__init__()
        if channels % heads:
            raise ValueError(f"{channels} channels not divisible by {heads} heads")
        c = channels
        self.channels, self.side, self.heads = c, side, heads
        self.expand = PatchExpand(2 * c)
        self.norm_high = nn.LayerNorm(c)
        self.norm_low = nn.LayerNorm(c)
        hidden = int(round(hidden_ratio * c))
        self.prefuse = nn.Sequential(nn.Linear(2 * c, hidden), nn.GELU(), nn.Linear(hidden, c))
        self.q_h, self.k_h, self.v_h = nn.Linear(c, c), nn.Linear(c, c), nn.Linear(c, c)
        self.q_l, self.k_l, self.v_l = nn.Linear(c, c), nn.Linear(c, c), nn.Linear(c, c)
        self.proj_h2l = nn.Linear(c, c)
        self.proj_l2h = nn.Linear(c, c)
        self.gamma_h2l = nn.Parameter(torch.tensor(float(gamma_init)))
        self.gamma_l2h = nn.Parameter(torch.tensor(float(gamma_init)))
        self.bias_table = nn.Parameter(torch.zeros((2 * side - 1) ** 2, heads))
        nn.init.trunc_normal_(self.bias_table, std=0.02)
        self.register_buffer("bias_index", relative_position_index(side, side), persistent=False)
        self.gate = nn.Sequential(nn.Linear(2 * c, c), nn.GELU(), nn.Linear(c, 1))
        nn.init.zeros_(self.gate[2].bias)
        self.out_proj = nn.Linear(2 * c, c)

    def position_bias(self) -> torch.Tensor:
        return self.bias_table[self.bias_index].permute(2, 0, 1).unsqueeze(0)

    def forward(self, p_high: torch.Tensor, p_low: torch.Tensor, return_details: bool = False):
        b, c, s, t = p_high.shape
        if c != self.channels or s != self.side or t != self.side:
            raise ValueError(
                f"high-resolution input {tuple(p_high.shape)} does not match C={self.channels}, side={self.side}"
            )
        if p_low.shape[1:] != (2 * c, s // 2, t // 2):
            raise ValueError(
                f"low-resolution input {tuple(p_low.shape)} breaks the pyramid contract for {tuple(p_high.shape)}"
            )

        high = tokens(p_high)
        up = tokens(self.expand(p_low))
        high_n, up_n = self.norm_high(high), self.norm_low(up)
        cross = self.prefuse(torch.cat([high_n, up_n], dim=-1))
        bias = self.position_bias()
        h = self.heads

        q, k, v = split_heads(self.q_h(high_n), h), split_heads(self.k_h(up_n), h), split_heads(self.v_h(up_n), h)
        res_h2l = attend(q, k, v, bias, return_weights=return_details)
        q, k, v = split_heads(self.q_l(up_n), h), split_heads(self.k_l(cross), h), split_heads(self.v_l(cross), h)
        res_l2h = attend(q, k, v, bias, return_weights=return_details)
        if return_details:
            (o_h2l, w_h2l), (o_l2h, w_l2h) = res_h2l, res_l2h
        else:
            o_h2l, o_l2h = res_h2l, res_l2h

        o_h2l = self.gamma_h2l * self.proj_h2l(merge_heads(o_h2l))
        o_l2h = self.gamma_l2h * self.proj_l2h(merge_heads(o_l2h))
        g = torch.sigmoid(self.gate(torch.cat([o_h2l, o_l2h], dim=-1)))  # (B, N, 1)
        fused = g * o_h2l + (1 - g) * o_l2h
        out = self.out_proj(torch.cat([high, high + fused], dim=-1))
        out = untokens(out, s, t)
        if return_details:
            return out, {
                "gate": g,
                "fused": fused,
                "o_h2l": o_h2l,
                "o_l2h": o_l2h,
                "attn_h2l": w_h2l,
                "attn_l2h": w_l2h,
            }
        return out


class ConvBlock(nn.Sequential):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__(
            nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
        )


def upsample(x: torch.Tensor, factor: int = 2) -> torch.Tensor:
    return F.interpolate(x, scale_factor=factor, mode="bilinear", align_corners=False)


class ProgressiveDecoder(nn.Module):
    """Layer-by-layer concatenation upsampling to two-class logits at input resolution."""

    def __init__(self, base_channels: int, num_classes: int = 2):
        super().__init__()
        c0 = base_channels
        self.conv_0_1 = ConvBlock(c0 + 2 * c0, c0)
        self.conv_1_2 = ConvBlock(2 * c0 + 4 * c0, 2 * c0)
        self.final_conv = ConvBlock(2 * c0 + c0 + c0, c0)
        self.seg_head = nn.Conv2d(c0, num_classes, 1)

    def forward(self, p0f: torch.Tensor, p1f: torch.Tensor, p2: torch.Tensor) -> torch.Tensor:
        if p1f.shape[-1] * 2 != p0f.shape[-1] or p2.shape[-1] * 2 != p1f.shape[-1]:
            raise ValueError(
                f"pyramid sides {p0f.shape[-1]}/{p1f.shape[-1]}/{p2.shape[-1]} do not halve level to level"
            )
        p01 = self.conv_0_1(torch.cat([upsample(p1f), p0f], dim=1))
        p12 = self.conv_1_2(torch.cat([upsample(p2), p1f], dim=1))
        top = self.final_conv(torch.cat([upsample(p12), p01, p0f], dim=1))
        return self.seg_head(upsample(top, 4))
