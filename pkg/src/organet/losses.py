"""Training losses on the soft foreground map ``p`` (values in [0, 1]).

All functions accept ``(..., H, W)`` tensors.  Shape-dependent losses (IQ, Dice)
are evaluated per image and averaged over the leading dimensions; focal loss is a
mean over every pixel.
"""

from __future__ import annotations

import math

import torch

from .config import LossWeights
from .errors import ConfigError

PROB_CLAMP = 1e-7


def spatial_gradients(p: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Forward differences with a zero pad past the last row/column."""
    zeros_col = torch.zeros_like(p[..., :, :1])
    zeros_row = torch.zeros_like(p[..., :1, :])
    dx = torch.cat([p[..., :, 1:], zeros_col], dim=-1) - p
    dy = torch.cat([p[..., 1:, :], zeros_row], dim=-2) - p
    return dx, dy


def iq_loss(p: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Squared-gradient "perimeter" over 4*pi*area.

    Not scale invariant: the numerator grows with the perimeter, not its square.
    """
    dx, dy = spatial_gradients(p)
    num = (dx**2 + dy**2).sum(dim=(-2, -1))
    den = 4 * math.pi * (p.sum(dim=(-2, -1)) + eps)
    return (num / den).mean()


def dice_loss(p: torch.Tensor, target: torch.Tensor, smooth: float = 1.0) -> torch.Tensor:
    if p.shape != target.shape:
        raise ValueError(f"prediction {tuple(p.shape)} and target {tuple(target.shape)} differ")
    target = target.to(p.dtype)
    inter = (p * target).sum(dim=(-2, -1))
    total = p.sum(dim=(-2, -1)) + target.sum(dim=(-2, -1))
    return (1 - (2 * inter + smooth) / (total + smooth)).mean()


def focal_loss(p: torch.Tensor, target: torch.Tensor, alpha: float = 0.25, gamma: float = 2.0) -> torch.Tensor:
    """Mean of -alpha (1 - p_t)^gamma log(p_t); alpha is a constant weight."""
    if p.shape != target.shape:
        raise ValueError(f"prediction {tuple(p.shape)} and target {tuple(target.shape)} differ")
    target = target.to(p.dtype)
    p = p.clamp(PROB_CLAMP, 1 - PROB_CLAMP)
    p_t = target * p + (1 - target) * (1 - p)
    return (-alpha * (1 - p_t) ** gamma * torch.log(p_t)).mean()


def total_loss(p: torch.Tensor, target: torch.Tensor, weights: LossWeights | None = None):
    """Weighted sum; returns ``(total, {"iq": .., "dice": .., "focal": ..})``."""
    w = weights or LossWeights()
    if min(w.lambda_iq, w.lambda_dice, w.lambda_focal) < 0:
        raise ConfigError("loss weights must be nonnegative")
    parts = {
        "iq": iq_loss(p, w.iq_eps),
        "dice": dice_loss(p, target, w.dice_smooth),
        "focal": focal_loss(p, target, w.focal_alpha, w.focal_gamma),
    }
    return combine(parts, w), parts


def combine(parts: dict, w: LossWeights):
    return w.lambda_iq * parts["iq"] + w.lambda_dice * parts["dice"] + w.lambda_focal * parts["focal"]
