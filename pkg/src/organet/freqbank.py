"""Learnable Gaussian band-pass filter bank over the 2-D frequency plane.

Feature maps are channel-first tensors ``(..., H, W)``; every transform acts on
the last two axes.  Frequency coordinates follow the unshifted ``fft2`` layout
and are normalized so each axis spans [-0.5, 0.5).
"""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn as nn

SIGMA_MIN = 1e-3
DEFAULT_MU = (0.05, 0.2, 0.35, 0.5)
DEFAULT_SIGMA = 0.15
DEFAULT_ALPHA = 1.0
IMAG_TOL = 1e-4


def make_radius_grid(height: int, width: int, dtype=torch.float32, device=None) -> torch.Tensor:
    """Normalized distance of every frequency bin to DC, laid out like ``fft2``."""
    if int(height) < 1 or int(width) < 1:
        raise ValueError(f"radius grid needs positive dimensions, got {height}x{width}")
    fy = torch.fft.fftfreq(int(height), dtype=dtype, device=device)
    fx = torch.fft.fftfreq(int(width), dtype=dtype, device=device)
    return torch.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)


class GaussianBandBank(nn.Module):
    """K Gaussian band-pass filters with learnable center, bandwidth and exponent."""

    def __init__(
        self,
        num_bands: int = 4,
        mu: Sequence[float] | None = None,
        sigma: float | Sequence[float] = DEFAULT_SIGMA,
        alpha: float | Sequence[float] = DEFAULT_ALPHA,
    ):
        super().__init__()
        if num_bands < 1:
            raise ValueError("filter bank needs at least one band")
        if mu is None:
            mu = DEFAULT_MU if num_bands == len(DEFAULT_MU) else torch.linspace(0.05, 0.5, num_bands).tolist()
        mu = _as_vector(mu, num_bands, "mu")
        sigma = _as_vector(sigma, num_bands, "sigma")
        alpha = _as_vector(alpha, num_bands, "alpha")
        self.mu = nn.Parameter(mu)
        self.sigma = nn.Parameter(sigma)
        self.alpha = nn.Parameter(alpha)

    @property
    def num_bands(self) -> int:
        return self.mu.numel()

    def masks(self, grid: torch.Tensor) -> torch.Tensor:
        """All K band masks stacked as ``(K, H, W)``."""
        return torch.stack([eval_band(self, k, grid) for k in range(self.num_bands)])

    def extra_repr(self) -> str:
        return f"num_bands={self.num_bands}"


def _as_vector(value, n: int, name: str) -> torch.Tensor:
    t = torch.as_tensor(value, dtype=torch.float32).flatten()
    if t.numel() == 1:
        t = t.expand(n).clone()
    if t.numel() != n:
        raise ValueError(f"{name} has {t.numel()} entries, expected {n}")
    return t


def eval_band(bank: GaussianBandBank, band_index: int, grid: torch.Tensor) -> torch.Tensor:
    """Gain of band ``band_index`` at every cell of ``grid``.

    B_k(r) = exp(-(r - mu)^2 / (2 sigma^2)) ** max(0, alpha), with sigma
    clamped to ``SIGMA_MIN``.
    """
    if not 0 <= band_index < bank.num_bands:
        raise ValueError(f"band index {band_index} out of range for {bank.num_bands} bands")
    mu = bank.mu[band_index]
    sigma = bank.sigma[band_index].clamp_min(SIGMA_MIN)
    alpha = torch.relu(bank.alpha[band_index])
    grid = grid.to(mu.dtype)
    # exp(x)**a == exp(a*x); the product form keeps gradients finite at alpha == 0
    return torch.exp(alpha * (-((grid - mu) ** 2) / (2 * sigma**2)))


def fourier(x: torch.Tensor) -> torch.Tensor:
    return torch.fft.fft2(x, dim=(-2, -1))


def inverse_fourier(x: torch.Tensor, check_real: bool = False) -> torch.Tensor:
    out = torch.fft.ifft2(x, dim=(-2, -1))
    if check_real:
        imag = out.imag.abs().max().item() if out.numel() else 0.0
        scale = max(1.0, out.real.abs().max().item()) if out.numel() else 1.0
        assert imag < IMAG_TOL * scale, f"inverse transform left imaginary residue {imag:.3g}"
    return out.real


def decompose(
    feature: torch.Tensor,
    bank: GaussianBandBank,
    grid: torch.Tensor | None = None,
    check_real: bool = False,
) -> list[torch.Tensor]:
    """Split ``feature`` into K spatial-domain sub-bands, one per filter."""
    if feature.dim() < 2:
        raise ValueError("feature map needs at least two (spatial) dimensions")
    h, w = feature.shape[-2:]
    if grid is None:
        grid = make_radius_grid(h, w, dtype=feature.dtype, device=feature.device)
    elif tuple(grid.shape) != (h, w):
        raise ValueError(f"radius grid {tuple(grid.shape)} does not match feature {h}x{w}")
    spectrum = fourier(feature)
    bands = []
    for k in range(bank.num_bands):
        mask = eval_band(bank, k, grid).to(feature.dtype)
        bands.append(inverse_fourier(spectrum * mask, check_real=check_real))
    return bands


def reconstruct_sum(bands: Sequence[torch.Tensor]) -> torch.Tensor:
    """Recombine sub-bands.

    Summing in the spatial domain equals inverse-transforming the summed spectra,
    because the transform is linear.
    """
    if len(bands) == 0:
        raise ValueError("no bands to reconstruct")
    shape = bands[0].shape
    for b in bands[1:]:
        if b.shape != shape:
            raise ValueError(f"band shapes differ: {tuple(shape)} vs {tuple(b.shape)}")
    out = bands[0]
    for b in bands[1:]:
        out = out + b
    return out


def reconstruct_via_spectrum(bands: Sequence[torch.Tensor]) -> torch.Tensor:
    """Literal transform, sum, inverse path; used to cross-check ``reconstruct_sum``."""
    total = sum(fourier(b) for b in bands)
    return inverse_fourier(total)
