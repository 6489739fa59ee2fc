"""Pixel-level segmentation metrics and the per-organoid IoU protocol."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
DEFAULT_AREA_EDGES = (0, 256, 512, 1024, 2048, 4096, math.inf)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    dice: float
    mean_dice: float
    iou: float
    f1: float
    # names of metrics whose denominator was zero (reported as 0.0)
    degenerate: list[str] = field(default_factory=list)

    METRIC_KEYS = ("accuracy", "precision", "recall", "dice", "mean_dice", "iou", "f1")

    def as_dict(self) -> dict:
        return asdict(self)


def _as_binary(mask, name: str) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.dtype == bool:
        return arr
    values = np.unique(arr)
    if not np.isin(values, (0, 1)).all():
        raise ValueError(f"{name} mask is not binary (values {values[:5].tolist()}...)")
    return arr.astype(bool)


def confusion_counts(pred, gt) -> ConfusionCounts:
    p, g = _as_binary(pred, "predicted"), _as_binary(gt, "ground-truth")
    if p.shape != g.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp=tp, tn=int(p.size - tp - fp - fn), fp=fp, fn=fn)


def metrics_report(c: ConfusionCounts) -> MetricsReport:
    if c.total <= 0:
        raise ValueError("metrics need at least one pixel")
    flags: list[str] = []

    def ratio(num, den, name):
        if den == 0:
            flags.append(name)
            return 0.0
        return num / den

    precision = ratio(c.tp, c.tp + c.fp, "precision")
    recall = ratio(c.tp, c.tp + c.fn, "recall")
    dice = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, "dice")
    dice_bg = ratio(2 * c.tn, 2 * c.tn + c.fp + c.fn, "dice_background")
    iou = ratio(c.tp, c.tp + c.fp + c.fn, "iou")
    f1 = ratio(2 * precision * recall, precision + recall, "f1")
    return MetricsReport(
        accuracy=(c.tp + c.tn) / c.total,
        precision=precision,
        recall=recall,
        dice=dice,
        mean_dice=(dice + dice_bg) / 2,
        iou=iou,
        f1=f1,
        degenerate=flags,
    )


def label_instances(mask) -> np.ndarray:
    """8-connected component labels (0 = background)."""
    labels, _ = ndimage.label(np.asarray(mask).astype(bool), structure=EIGHT_CONNECTED)
    return labels


def per_instance_iou(pred, gt_instances, margin: float = 10) -> list[tuple[int, float]]:
    """IoU inside each ground-truth instance's bounding box grown by ``margin`` pixels.

    ``gt_instances`` is either an integer label image or a binary mask (labelled
    here by 8-connectivity).
    """
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    p = _as_binary(pred, "predicted")
    labels = np.asarray(gt_instances)
    if labels.shape != p.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {labels.shape}")
    if labels.dtype == bool or labels.max(initial=0) <= 1:
        labels = label_instances(labels)
    gt = labels > 0
    h, w = p.shape
    out = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        area = int(np.count_nonzero(labels[sl] == idx))
        if math.isinf(margin):
            box = (slice(0, h), slice(0, w))
        else:
            m = int(margin)
            box = (
                slice(max(sl[0].start - m, 0), min(sl[0].stop + m, h)),
                slice(max(sl[1].start - m, 0), min(sl[1].stop + m, w)),
            )
        pc, gc = p[box], gt[box]
        union = np.count_nonzero(pc | gc)
        out.append((area, np.count_nonzero(pc & gc) / union if union else 0.0))
    return out


def iou_by_area(pairs, edges=DEFAULT_AREA_EDGES) -> list[dict]:
    """Bin (area, iou) pairs into ``[lo, hi)`` area ranges."""
    rows = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        vals = [iou for area, iou in pairs if lo <= area < hi]
        rows.append(
            {
                "area_min": lo,
                "area_max": hi,
                "count": len(vals),
                "mean_iou": float(np.mean(vals)) if vals else None,
            }
        )
    return rows
