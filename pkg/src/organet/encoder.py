"""Dual-branch encoder: bottleneck ResNet stream and shifted-window transformer stream.

The two streams share a convolutional stem.  At each of three scales the
(channel-aligned) ResNet output and the transformer output are fused by
:class:`~organet.fusion.LGBPFusion`; the fused map is recorded in the pyramid and
patch-merged into the next transformer stage.  The ResNet stream keeps consuming
its own outputs.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import EncoderConfig, check_input_side
from .errors import ConfigError
from .fusion import LGBPFusion


class FeaturePyramid(NamedTuple):
    p0: torch.Tensor
    p1: torch.Tensor
    p2: torch.Tensor


class InitBlock(nn.Module):
    """7x7/2 conv, BN, ReLU, 3x3/2 max-pool: quarter resolution."""

    def __init__(self, out_channels: int, window: int = 7):
        super().__init__()
        self.window = window
        self.conv = nn.Conv2d(3, out_channels, 7, stride=2, padding=3, bias=False)
        self.bn = nn.BatchNorm2d(out_channels)
        self.pool = nn.MaxPool2d(3, stride=2, padding=1)

    def forward(self, x):
        h, w = x.shape[-2:]
        check_input_side(h, self.window)
        check_input_side(w, self.window)
        return self.pool(F.relu(self.bn(self.conv(x))))


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, in_channels: int, planes: int, stride: int = 1):
        super().__init__()
        out = planes * self.expansion
        self.conv1 = nn.Conv2d(in_channels, planes, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = nn.Conv2d(planes, planes, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(planes)
        self.conv3 = nn.Conv2d(planes, out, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(out)
        self.downsample = None
        if stride != 1 or in_channels != out:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_channels, out, 1, stride=stride, bias=False), nn.BatchNorm2d(out)
            )

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        y = F.relu(self.bn1(self.conv1(x)))
        y = F.relu(self.bn2(self.conv2(y)))
        y = self.bn3(self.conv3(y))
        return F.relu(y + identity)


class ResNetStage(nn.Module):
    """Bottleneck blocks plus the 1x1 conv that aligns channels with the transformer stream."""

    def __init__(self, in_channels: int, planes: int, blocks: int, stride: int, align_to: int):
        super().__init__()
        layers = [Bottleneck(in_channels, planes, stride)]
        layers += [Bottleneck(planes * Bottleneck.expansion, planes) for _ in range(blocks - 1)]
        self.blocks = nn.Sequential(*layers)
        self.out_channels = planes * Bottleneck.expansion
        self.align = nn.Conv2d(self.out_channels, align_to, 1)

    def forward(self, x):
        raw = self.blocks(x)
        return raw, self.align(raw)


# --- shifted-window transformer -------------------------------------------------


def window_partition(x: torch.Tensor, window: int) -> torch.Tensor:
    """(B, H, W, C) -> (B * nW, window*window, C)."""
    b, h, w, c = x.shape
    if h % window or w % window:
        raise ConfigError(f"feature side {h}x{w} not divisible by window {window}")
    x = x.reshape(b, h // window, window, w // window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window * window, c)


def window_reverse(windows: torch.Tensor, window: int, h: int, w: int) -> torch.Tensor:
    c = windows.shape[-1]
    b = windows.shape[0] // ((h // window) * (w // window))
    x = windows.reshape(b, h // window, w // window, window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(b, h, w, c)


def relative_position_index(h: int, w: int) -> torch.Tensor:
    """Index into a ((2h-1)*(2w-1)) bias table for every pair of cells in an h x w grid."""
    coords = torch.stack(torch.meshgrid(torch.arange(h), torch.arange(w), indexing="ij")).flatten(1)
    rel = coords[:, :, None] - coords[:, None, :]
    return (rel[0] + h - 1) * (2 * w - 1) + (rel[1] + w - 1)


def shifted_window_mask(side: int, window: int, shift: int) -> torch.Tensor:
    """Additive mask (nW, N, N) keeping attention inside each rolled region."""
    img = torch.zeros(1, side, side, 1)
    cuts = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
    label = 0
    for hs in cuts:
        for ws in cuts:
            img[:, hs, ws, :] = label
            label += 1
    ids = window_partition(img, window).squeeze(-1)
    diff = ids[:, None, :] - ids[:, :, None]
    return diff.ne(0).float() * -100.0


class WindowAttention(nn.Module):
    def __init__(self, dim: int, window: int, heads: int):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        self.bias_table = nn.Parameter(torch.zeros((2 * window - 1) ** 2, heads))
        nn.init.trunc_normal_(self.bias_table, std=0.02)
        self.register_buffer("bias_index", relative_position_index(window, window), persistent=False)

    def forward(self, x, mask=None):
        bw, n, c = x.shape
        qkv = self.qkv(x).view(bw, n, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q * self.scale) @ k.transpose(-2, -1)
        attn = attn + self.bias_table[self.bias_index].permute(2, 0, 1).unsqueeze(0)
        if mask is not None:
            nw = mask.shape[0]
            attn = attn.view(bw // nw, nw, self.heads, n, n) + mask[None, :, None]
            attn = attn.view(bw, self.heads, n, n)
        attn = attn.softmax(-1)
        out = (attn @ v).transpose(1, 2).reshape(bw, n, c)
        return self.proj(out)


class SwinBlock(nn.Module):
    def __init__(self, dim: int, side: int, heads: int, window: int, shift: int, mlp_ratio: float = 4.0):
        super().__init__()
        if side <= window:
            window, shift = side, 0
        self.window, self.shift, self.side = window, shift, side
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, window, heads)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))
        mask = shifted_window_mask(side, window, shift) if shift else None
        self.register_buffer("attn_mask", mask, persistent=False)

    def forward(self, x):
        # x: (B, H, W, C)
        b, h, w, c = x.shape
        y = self.norm1(x)
        if self.shift:
            y = torch.roll(y, shifts=(-self.shift, -self.shift), dims=(1, 2))
        win = self.attn(window_partition(y, self.window), self.attn_mask)
        y = window_reverse(win, self.window, h, w)
        if self.shift:
            y = torch.roll(y, shifts=(self.shift, self.shift), dims=(1, 2))
        x = x + y
        return x + self.mlp(self.norm2(x))


class SwinStage(nn.Module):
    """Alternating regular / shifted window blocks followed by a LayerNorm."""

    def __init__(self, dim: int, side: int, depth: int, heads: int, window: int, mlp_ratio: float = 4.0):
        super().__init__()
        if side % window and side > window:
            raise ConfigError(f"token side {side} not divisible by window {window}")
        self.blocks = nn.ModuleList(
            SwinBlock(dim, side, heads, window, 0 if i % 2 == 0 else window // 2, mlp_ratio) for i in range(depth)
        )
        self.norm = nn.LayerNorm(dim)

    def forward(self, x):
        for blk in self.blocks:
            x = blk(x)
        return self.norm(x)


class PatchMerging(nn.Module):
    """Concatenate 2x2 neighbourhoods (4c) and reduce linearly to 2c."""

    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(4 * dim)
        self.reduction = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x):
        b, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"patch merging needs even sides, got {h}x{w}")
        x = torch.cat([x[:, 0::2, 0::2], x[:, 1::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 1::2]], dim=-1)
        return self.reduction(self.norm(x))


# --- the encoder ----------------------------------------------------------------


class DualEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        c0 = cfg.base_channels
        widths = [c0, 2 * c0, 4 * c0]
        sides = [cfg.input_size // 4, cfg.input_size // 8, cfg.input_size // 16]
        self.stem = InitBlock(c0, cfg.window)

        self.resnet = nn.ModuleList()
        in_ch = c0
        for i in range(3):
            stage = ResNetStage(in_ch, cfg.resnet_planes * 2**i, cfg.resnet_blocks[i], 1 if i == 0 else 2, widths[i])
            self.resnet.append(stage)
            in_ch = stage.out_channels

        self.swin = nn.ModuleList(
            SwinStage(widths[i], sides[i], cfg.stage_depths[i], cfg.stage_heads[i], cfg.window, cfg.mlp_ratio)
            for i in range(3)
        )
        self.merge = nn.ModuleList(PatchMerging(widths[i]) for i in range(2))
        self.fusion = nn.ModuleList(
            LGBPFusion(
                widths[i],
                cfg.num_bands,
                cfg.fusion_heads,
                mu=cfg.band_mu,
                sigma=cfg.band_sigma,
                alpha=cfg.band_alpha,
            )
            for i in range(3)
        )

    def forward(self, image: torch.Tensor) -> FeaturePyramid:
        stem = self.stem(image)
        conv_raw = stem
        tokens = stem.permute(0, 2, 3, 1)
        levels = []
        for i in range(3):
            if i > 0:
                tokens = self.merge[i - 1](levels[-1].permute(0, 2, 3, 1))
            conv_raw, conv_aligned = self.resnet[i](conv_raw)
            trans = self.swin[i](tokens).permute(0, 3, 1, 2)
            levels.append(self.fusion[i](conv_aligned, trans))
        return FeaturePyramid(*levels)
