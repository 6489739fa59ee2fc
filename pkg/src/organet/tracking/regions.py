from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from ..config import TrackerConfig

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass
class Region:
    centroid: tuple[float, float]  # (x, y) = (column, row)
    area: int
    bbox: tuple[int, int, int, int]  # x_min, y_min, x_max, y_max, inclusive
    patch: np.ndarray  # float grayscale, 0..255, resized to a common side

    @property
    def x(self) -> float:
        return self.centroid[0]

    @property
    def y(self) -> float:
        return self.centroid[1]


def resize_patch(patch: np.ndarray, side: int) -> np.ndarray:
    img = Image.fromarray(np.asarray(patch, dtype=np.float32), mode="F")
    return np.asarray(img.resize((side, side), Image.BILINEAR), dtype=np.float64)


def connected_regions(mask, config: TrackerConfig | None = None, image=None) -> list[Region]:
    """8-connected foreground components with area >= ``min_area``.

    The SSIM patch is cut from ``image`` (grayscale 0..255) when given, otherwise
    from the component's own silhouette.
    """
    cfg = config or TrackerConfig()
    m = np.asarray(mask).astype(bool)
    labels, n = ndimage.label(m, structure=EIGHT_CONNECTED)
    if n == 0:
        return []
    gray = None
    if image is not None:
        gray = np.asarray(image, dtype=np.float64)
        if gray.ndim == 3:
            gray = gray.mean(axis=-1)
        if gray.shape != m.shape:
            raise ValueError(f"image {gray.shape} and mask {m.shape} differ")
    regions = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        own = labels[sl] == idx
        area = int(own.sum())
        if area < cfg.min_area:
            continue
        rows, cols = np.nonzero(own)
        cy = float(rows.mean()) + sl[0].start
        cx = float(cols.mean()) + sl[1].start
        crop = gray[sl] if gray is not None else own * 255.0
        regions.append(
            Region(
                centroid=(cx, cy),
                area=area,
                bbox=(sl[1].start, sl[0].start, sl[1].stop - 1, sl[0].stop - 1),
                patch=resize_patch(crop, cfg.ssim_patch_side),
            )
        )
    return regions
