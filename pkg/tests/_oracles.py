"""Independent scalar references shared by the unit and acceptance tests."""

import itertools
import math

import numpy as np


def iq_scalar(p):
    """Pixel loop with explicit zero padding past the last row and column."""
    h, w = len(p), len(p[0])
    num = 0.0
    area = 0.0
    for i in range(h):
        for j in range(w):
            right = p[i][j + 1] if j + 1 < w else 0.0
            down = p[i + 1][j] if i + 1 < h else 0.0
            num += (right - p[i][j]) ** 2 + (down - p[i][j]) ** 2
            area += p[i][j]
    return num / (4 * math.pi * (area + 1e-6))


def dice_scalar(p, y, smooth=1.0):
    inter = sum(a * b for a, b in zip(p, y))
    return 1 - (2 * inter + smooth) / (sum(p) + sum(y) + smooth)


def focal_scalar(p, y, alpha=0.25, gamma=2.0):
    total = 0.0
    for a, b in zip(p, y):
        a = min(max(a, 1e-7), 1 - 1e-7)
        pt = a if b == 1 else 1 - a
        total += -alpha * (1 - pt) ** gamma * math.log(pt)
    return total / len(p)


def brute_force_assignment(cost):
    """Minimum total cost over every injective row-to-column map."""
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if n <= m:
        return min(sum(cost[i, c] for i, c in enumerate(cols)) for cols in itertools.permutations(range(m), n))
    return min(sum(cost[r, j] for j, r in enumerate(rows)) for rows in itertools.permutations(range(n), m))


def _coverage(signed_distance):
    # one-pixel linear ramp across the boundary
    return np.clip(0.5 - signed_distance, 0.0, 1.0)


def shape_maps(area=256.0, canvas=300, antialias=True):
    """Disk, square and 1-pixel-wide bar of (nominally) equal area, centred on the canvas."""
    yy, xx = np.mgrid[0:canvas, 0:canvas] + 0.5
    c = canvas / 2
    r = math.sqrt(area / math.pi)
    side = math.sqrt(area)
    sd_disk = np.hypot(xx - c, yy - c) - r
    sd_square = np.maximum(abs(xx - c), abs(yy - c)) - side / 2
    sd_bar = np.maximum(abs(xx - c) - area / 2, abs(yy - c) - 0.5)
    if antialias:
        return {k: _coverage(v) for k, v in (("disk", sd_disk), ("square", sd_square), ("bar", sd_bar))}
    ci = canvas // 2
    bar = np.zeros((canvas, canvas))
    half = int(area) // 2
    bar[ci, ci - half : ci - half + int(area)] = 1.0
    return {"disk": (sd_disk <= 0).astype(float), "square": (sd_square <= 0).astype(float), "bar": bar}
