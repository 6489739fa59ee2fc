from __future__ import annotations

import numpy as np

C1_DEFAULT = (0.01 * 255) ** 2
C2_DEFAULT = (0.03 * 255) ** 2


def ssim(a, b, c1: float = C1_DEFAULT, c2: float = C2_DEFAULT) -> float:
    """Single-window SSIM over whole patches (population moments)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"patch shapes differ: {a.shape} vs {b.shape}")
    mu_a, mu_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    cov = ((a - mu_a) * (b - mu_b)).mean()
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(num / den)
