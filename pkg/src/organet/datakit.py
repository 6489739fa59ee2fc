"""Image/mask loading, model-input preprocessing, and synthetic organoid scenes.

Dataset layout on disk: ``<root>/images/<stem>.<ext>`` paired with
``<root>/masks/<stem>.png``; sequences use frame-numbered stems (``seq_0001``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .config import PreprocessConfig, SynthConfig, check_input_side
from .errors import DecodeError, EmptyDatasetError, MissingFileError, ShapeMismatchError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")
MASK_THRESHOLD = 127


@dataclass
class SamplePair:
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    mask: np.ndarray  # (H, W) uint8 in {0, 1}
    source_id: str
    instances: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.image.shape[:2] != self.mask.shape:
            raise ShapeMismatchError(
                f"{self.source_id}: image {self.image.shape[:2]} and mask {self.mask.shape} differ"
            )


def _open(path: Path) -> Image.Image:
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from None
    return img


def read_image(path: str | Path) -> np.ndarray:
    img = _open(Path(path))
    if img.mode in ("I;16", "I;16B", "I"):
        arr = np.asarray(img, dtype=np.float32)
        arr = arr / max(float(arr.max()), 1.0)
        return np.repeat(arr[..., None], 3, axis=-1)
    return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0


def read_mask(path: str | Path) -> np.ndarray:
    img = _open(Path(path))
    arr = np.asarray(img.convert("L"))
    return (arr >= MASK_THRESHOLD).astype(np.uint8)


def load_sample(image_path: str | Path, mask_path: str | Path) -> SamplePair:
    image = read_image(image_path)
    mask = read_mask(mask_path)
    return SamplePair(image=image, mask=mask, source_id=Path(image_path).stem)


def list_images(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFileError(f"no such directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_dataset(root: str | Path) -> list[SamplePair]:
    root = Path(root)
    images = list_images(root / "images")
    masks = {p.stem: p for p in list_images(root / "masks")}
    samples = []
    for img in images:
        if img.stem not in masks:
            raise MissingFileError(f"no mask for image {img.name} in {root / 'masks'}")
        samples.append(load_sample(img, masks[img.stem]))
    if not samples:
        raise EmptyDatasetError(f"no image/mask pairs under {root}")
    return samples


def save_png(array: np.ndarray, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path)


def mask_to_png(mask: np.ndarray) -> np.ndarray:
    return (np.asarray(mask) > 0).astype(np.uint8) * 255


def image_to_png(image: np.ndarray) -> np.ndarray:
    return (np.clip(image, 0, 1) * 255 + 0.5).astype(np.uint8)


# --- preprocessing ----------------------------------------------------------------


def preprocess_image(
    image: np.ndarray, side: int, cfg: PreprocessConfig | None = None, window: int = 7
) -> torch.Tensor:
    """Resize an ``(H, W, 3)`` image in [0, 1] to ``(3, side, side)`` and standardize."""
    check_input_side(side, window)
    cfg = cfg or PreprocessConfig()
    x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1)
    if x.shape[-2:] != (side, side):
        x = F.interpolate(x[None], size=(side, side), mode="bilinear", align_corners=False, antialias=True)[0]
    mean = torch.tensor(cfg.mean, dtype=torch.float32)[:, None, None]
    std = torch.tensor(cfg.std, dtype=torch.float32)[:, None, None]
    return (x - mean) / std


def resize_mask(mask, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour resize of a binary mask."""
    m = torch.from_numpy(np.ascontiguousarray(mask, dtype=np.float32))
    if m.shape == (height, width):
        return m.numpy().astype(np.uint8)
    out = F.interpolate(m[None, None], size=(height, width), mode="nearest-exact")[0, 0]
    return out.numpy().astype(np.uint8)


def preprocess(
    sample: SamplePair,
    side: int,
    cfg: PreprocessConfig | None = None,
    window: int = 7,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Standardized ``(3, side, side)`` float tensor and ``(side, side)`` binary mask."""
    x = preprocess_image(sample.image, side, cfg, window)
    return x, torch.from_numpy(resize_mask(sample.mask, side, side).astype(np.float32))


# --- synthetic scenes -------------------------------------------------------------


@dataclass
class _Blob:
    cx: float
    cy: float
    radius: float
    aspect: float
    angle: float
    harmonics: np.ndarray  # (k, 2): amplitude, phase for k = 2, 3, 4
    vx: float
    vy: float
    tone: float


def _layout(cfg: SynthConfig, horizon: int):
    rng = np.random.default_rng([cfg.seed, 7919])
    n = int(rng.integers(cfg.n_organoids[0], cfg.n_organoids[1] + 1))
    n_bub = int(rng.integers(cfg.n_bubbles[0], cfg.n_bubbles[1] + 1))
    grow = cfg.growth ** max(horizon - 1, 0)
    blobs: list[_Blob] = []
    placed: list[tuple[np.ndarray, float]] = []  # trajectory points, max radius
    margin = 2.0
    for _ in range(n):
        for _attempt in range(200):
            r = float(rng.uniform(*cfg.radius))
            reach = r * grow * (1 + cfg.deform) * 1.25
            theta = rng.uniform(0, 2 * np.pi)
            vx, vy = cfg.drift * np.cos(theta), cfg.drift * np.sin(theta)
            travel = np.array([vx, vy]) * max(horizon - 1, 0)
            lo = reach + margin
            hi_x = cfg.canvas - reach - margin
            xs = (lo + max(-travel[0], 0), hi_x - max(travel[0], 0))
            ys = (lo + max(-travel[1], 0), hi_x - max(travel[1], 0))
            if xs[0] >= xs[1] or ys[0] >= ys[1]:
                continue
            cx, cy = rng.uniform(*xs), rng.uniform(*ys)
            steps = np.arange(max(horizon, 1))[:, None]
            path = np.array([cx, cy]) + steps * np.array([vx, vy])
            if all(np.min(np.hypot(*(path - other).T)) > reach + oreach + 3 for other, oreach in placed):
                placed.append((path, reach))
                blobs.append(
                    _Blob(
                        cx=cx,
                        cy=cy,
                        radius=r,
                        aspect=float(rng.uniform(0.8, 1.25)),
                        angle=float(rng.uniform(0, np.pi)),
                        harmonics=np.column_stack([rng.uniform(-1, 1, 3), rng.uniform(0, 2 * np.pi, 3)]),
                        vx=vx,
                        vy=vy,
                        tone=float(rng.uniform(0.25, 0.45)),
                    )
                )
                break
    bubbles = []
    for _ in range(n_bub):
        for _attempt in range(200):
            r = float(rng.uniform(*cfg.bubble_radius))
            bx, by = rng.uniform(r + 1, cfg.canvas - r - 1, size=2)
            if all(np.min(np.hypot(*(path - (bx, by)).T)) > reach + r + 2 for path, reach in placed):
                bubbles.append((bx, by, r))
                break
    shade = rng.uniform(-0.12, 0.12, size=3)  # background gradient coefficients
    return blobs, bubbles, shade


def _blob_mask(b: _Blob, frame: int, cfg: SynthConfig, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    r = b.radius * cfg.growth**frame
    cx, cy = b.cx + b.vx * frame, b.cy + b.vy * frame
    dx, dy = xx - cx, yy - cy
    ca, sa = np.cos(b.angle), np.sin(b.angle)
    u, v = ca * dx + sa * dy, -sa * dx + ca * dy
    a_ax, b_ax = r * b.aspect, r / b.aspect
    rho = np.hypot(u / a_ax, v / b_ax)
    theta = np.arctan2(v / b_ax, u / a_ax)
    wobble = sum(amp * np.cos(k * theta + ph) for k, (amp, ph) in zip((2, 3, 4), b.harmonics))
    return rho <= 1.0 + cfg.deform * wobble / 3.0


def synth_scene(cfg: SynthConfig, frame: int = 0, horizon: int = 1) -> SamplePair:
    """Render frame ``frame`` of the scene described by ``cfg``.

    ``horizon`` is the sequence length the layout must stay collision-free for;
    pass the same value for every frame of one sequence.
    """
    if frame < 0:
        raise ValueError("frame must be nonnegative")
    cfg.validate()
    blobs, bubbles, shade = _layout(cfg, max(horizon, frame + 1))
    n = cfg.canvas
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    rng = np.random.default_rng([cfg.seed, frame, 104729])

    bg = 0.72 + shade[0] * (xx / n - 0.5) + shade[1] * (yy / n - 0.5)
    bg -= shade[2] * np.hypot(xx / n - 0.5, yy / n - 0.5)
    img = bg.copy()

    # faint defocused debris in the background
    debris = ndimage.gaussian_filter(rng.standard_normal((n, n)), 3.0)
    img += 0.04 * debris / (debris.std() + 1e-9)

    for bx, by, r in bubbles:
        d = np.hypot(xx - bx, yy - by)
        ring = np.exp(-((d - r) ** 2) / (2 * 0.9**2))
        img -= 0.35 * ring
        img += 0.12 * np.exp(-((d - r + 1.8) ** 2) / (2 * 0.8**2))

    instances = np.zeros((n, n), dtype=np.int32)
    texture = ndimage.gaussian_filter(rng.standard_normal((n, n)), 1.2)
    texture /= texture.std() + 1e-9
    for idx, b in enumerate(blobs, start=1):
        inside = _blob_mask(b, frame, cfg, yy, xx)
        instances[inside & (instances == 0)] = idx
        if not inside.any():
            continue
        edge = inside & ~ndimage.binary_erosion(inside, iterations=2)
        img[inside] = b.tone + 0.06 * texture[inside]
        img[edge] -= 0.08

    img = ndimage.gaussian_filter(img, 0.7)
    img += cfg.noise_sigma * rng.standard_normal((n, n))
    tint = np.array([1.0, 0.97, 0.93])
    rgb = np.clip(img[..., None] * tint, 0.0, 1.0).astype(np.float32)
    mask = (instances > 0).astype(np.uint8)
    return SamplePair(image=rgb, mask=mask, source_id=f"synth_s{cfg.seed}_f{frame:04d}", instances=instances)


def synth_dataset(cfg: SynthConfig, count: int, seed_offset: int = 0) -> list[SamplePair]:
    """``count`` independent scenes with seeds ``cfg.seed + seed_offset + i``."""
    return [synth_scene(replace(cfg, seed=cfg.seed + seed_offset + i)) for i in range(count)]


def synth_sequence(cfg: SynthConfig, n_frames: int) -> list[SamplePair]:
    return [synth_scene(cfg, t, horizon=n_frames) for t in range(n_frames)]
