"""Figures for training logs, evaluation bins and tracking results.

Figures go through the object-oriented Agg API, so nothing here touches
pyplot's global state or needs a display.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib as mpl
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.ticker import MaxNLocator
from PIL import Image, ImageDraw
from scipy import ndimage

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}
FIG_SIZE = (5.0, 3.2)
_PALETTE = mpl.colormaps["tab10"].colors + mpl.colormaps["Dark2"].colors


def track_color(track_id: int) -> tuple[float, float, float]:
    """Fixed colour per track id; cycles after 18 ids."""
    return tuple(float(c) for c in _PALETTE[track_id % len(_PALETTE)])


def _rgb255(track_id: int) -> tuple[int, int, int]:
    return tuple(int(round(255 * c)) for c in track_color(track_id))


def _save(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasAgg(fig)
    fig.savefig(path)
    return path


def plot_loss_curve(rows: list[dict], path: str | Path) -> Path:
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=FIG_SIZE)
        ax = fig.add_subplot()
        epochs = [int(r["epoch"]) for r in rows]
        for key, style in (("total", "-"), ("dice", "--"), ("focal", ":"), ("iq", "-.")):
            vals = [float(r[key]) for r in rows]
            ax.plot(epochs, vals, style, label=key)
        if all(float(r[k]) > 0 for r in rows for k in ("total", "dice", "focal", "iq")):
            ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.xaxis.set_major_locator(MaxNLocator(integer=True))
        ax.set_ylabel("loss")
        ax.legend(frameon=False)
        lr_ax = ax.twinx()
        lr_ax.step(epochs, [float(r["lr"]) for r in rows], where="post", color="0.6", lw=0.8)
        lr_ax.set_yscale("log")
        lr_ax.set_ylabel("learning rate", color="0.45")
        lr_ax.grid(False)
        return _save(fig, path)


def plot_iou_bins(bins: list[dict], path: str | Path) -> Path:
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=FIG_SIZE)
        ax = fig.add_subplot()
        labels, means, counts = [], [], []
        for b in bins:
            hi = "inf" if b["area_max"] is None or math.isinf(float(b["area_max"])) else int(b["area_max"])
            labels.append(f"{int(b['area_min'])}-{hi}")
            means.append(np.nan if b["mean_iou"] is None else float(b["mean_iou"]))
            counts.append(int(b["count"]))
        x = np.arange(len(bins))
        bars = ax.bar(x, np.nan_to_num(means), color=track_color(0), width=0.7)
        for rect, n, m in zip(bars, counts, means):
            text = f"n={n}" if not np.isnan(m) else "none"
            ax.annotate(
                text, (rect.get_x() + rect.get_width() / 2, rect.get_height()), ha="center", va="bottom", fontsize=7
            )
        ax.set_xticks(x, labels, rotation=30, ha="right")
        ax.set_ylim(0, 1.08)
        ax.set_xlabel("organoid area (px)")
        ax.set_ylabel("mean IoU")
        return _save(fig, path)


def plot_area_series(tracks: dict[str, list[dict]], path: str | Path) -> Path:
    """``tracks`` maps id -> entries with ``frame``, ``area`` and ``flag`` (tracks JSON layout)."""
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=FIG_SIZE)
        ax = fig.add_subplot()
        for key in sorted(tracks, key=int):
            entries = tracks[key]
            color = track_color(int(key))
            frames = [e["frame"] for e in entries]
            ax.plot(frames, [e["area"] for e in entries], color=color, label=f"id {key}")
            gaps = [e for e in entries if e["flag"] != "matched"]
            if gaps:
                ax.plot([e["frame"] for e in gaps], [e["area"] for e in gaps], "o", mfc="none", color=color)
        ax.set_xlabel("frame")
        ax.xaxis.set_major_locator(MaxNLocator(integer=True))
        ax.set_ylabel("area (px)")
        if len(tracks) <= 12:
            ax.legend(frameon=False, ncol=2)
        return _save(fig, path)


def draw_overlay(image: np.ndarray, labels: np.ndarray, entries: list[tuple[int, int, dict]]) -> np.ndarray:
    """Colour each tracked component's outline by track id.

    ``labels`` is the frame's component label image; ``entries`` holds
    ``(track_id, label, info)`` with ``label == 0`` for predicted placeholders,
    drawn as a cross at ``info['cx'], info['cy']``.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    rgb = (np.clip(img, 0, 1) * 255 + 0.5).astype(np.uint8)
    for track_id, label, _ in entries:
        if label <= 0:
            continue
        own = labels == label
        edge = own & ~ndimage.binary_erosion(own)
        rgb[edge] = _rgb255(track_id)
    canvas = Image.fromarray(rgb)
    draw = ImageDraw.Draw(canvas)
    for track_id, label, info in entries:
        x, y = info["cx"], info["cy"]
        color = _rgb255(track_id)
        if label <= 0:
            draw.line([(x - 3, y - 3), (x + 3, y + 3)], fill=color)
            draw.line([(x - 3, y + 3), (x + 3, y - 3)], fill=color)
        draw.text((x + 2, y - 10), str(track_id), fill=color)
    return np.asarray(canvas)
