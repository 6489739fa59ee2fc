"""SGD training with a step learning-rate schedule and optional weight averaging."""

from __future__ import annotations

import csv
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch.optim.swa_utils import AveragedModel, update_bn

from .config import SCHEMA_VERSION, RunConfig
from .datakit import SamplePair, preprocess
from .errors import CheckpointError, EmptyDatasetError, NumericFailure
from .losses import total_loss
from .metrics import ConfusionCounts, MetricsReport, confusion_counts, iou_by_area, metrics_report, per_instance_iou
from .model import LGBPOrgaNet

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "lr", "total", "iq", "dice", "focal")
CHECKPOINT_NAME = "checkpoint.pt"
LOG_NAME = "train_log.csv"


def lr_at(epoch: int, lr0: float = 0.01, step_epochs: int = 10, gamma: float = 0.1) -> float:
    return lr0 * gamma ** (epoch // step_epochs)


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def to_tensors(samples: list[SamplePair], cfg: RunConfig) -> tuple[torch.Tensor, torch.Tensor]:
    if not samples:
        raise EmptyDatasetError("dataset is empty")
    pairs = [preprocess(s, cfg.encoder.input_size, cfg.preprocess, cfg.encoder.window) for s in samples]
    return torch.stack([p[0] for p in pairs]), torch.stack([p[1] for p in pairs])


def _augment(x: torch.Tensor, y: torch.Tensor, cfg: RunConfig, gen: torch.Generator):
    if cfg.train.augment_flip:
        if torch.rand(1, generator=gen).item() < 0.5:
            x, y = x.flip(-1), y.flip(-1)
        if torch.rand(1, generator=gen).item() < 0.5:
            x, y = x.flip(-2), y.flip(-2)
    if cfg.train.augment_rotate:
        k = int(torch.randint(0, 4, (1,), generator=gen).item())
        x, y = torch.rot90(x, k, (-2, -1)), torch.rot90(y, k, (-2, -1))
    return x, y


@dataclass
class TrainResult:
    model: LGBPOrgaNet
    log: list[dict] = field(default_factory=list)
    steps: int = 0
    checkpoint: Path | None = None


def save_checkpoint(path: str | Path, model: LGBPOrgaNet, cfg: RunConfig, **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "model": model.state_dict(), **extra}
    tmp = path.with_suffix(".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> tuple[LGBPOrgaNet, RunConfig, dict]:
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    except Exception as exc:  # corrupt or foreign file
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not isinstance(payload, dict) or payload.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(f"{path} is not a version-{SCHEMA_VERSION} checkpoint")
    cfg = RunConfig.from_dict(payload["config"])
    model = LGBPOrgaNet(cfg.encoder)
    try:
        model.load_state_dict(payload["model"])
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint weights do not match its embedded config: {exc}") from None
    model.eval()
    return model, cfg, payload


def write_log_csv(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*LOG_COLUMNS, "schema_version"])
        for row in rows:
            cells = [f"{row[k]:.10g}" if isinstance(row[k], float) else row[k] for k in LOG_COLUMNS]
            w.writerow([*cells, SCHEMA_VERSION])
    return path


def train(
    cfg: RunConfig,
    dataset: list[SamplePair],
    out_dir: str | Path | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Fit a fresh model; writes ``checkpoint.pt`` and ``train_log.csv`` under ``out_dir`` if given."""
    cfg.validate()
    tc = cfg.train
    seed_everything(tc.seed)
    x_all, y_all = to_tensors(dataset, cfg)
    n = x_all.shape[0]
    model = LGBPOrgaNet(cfg.encoder)
    optimizer = torch.optim.SGD(model.parameters(), lr=tc.lr0, momentum=tc.momentum, weight_decay=tc.weight_decay)
    gen = torch.Generator().manual_seed(tc.seed)

    steps_per_epoch = math.ceil(n / tc.batch_size)
    epochs = tc.epochs
    if tc.max_steps is not None:
        epochs = min(epochs, math.ceil(tc.max_steps / steps_per_epoch))
    avg_start = epochs - max(1, math.ceil(tc.averaging_fraction * epochs))
    averaged = AveragedModel(model) if tc.weight_averaging else None

    out_dir = Path(out_dir) if out_dir is not None else None
    result = TrainResult(model=model)
    step = 0
    for epoch in range(epochs):
        lr = lr_at(epoch, tc.lr0, tc.lr_step_epochs, tc.lr_gamma)
        for group in optimizer.param_groups:
            group["lr"] = lr
        model.train()
        order = torch.randperm(n, generator=gen)
        sums = {"total": 0.0, "iq": 0.0, "dice": 0.0, "focal": 0.0}
        batches = 0
        for start in range(0, n, tc.batch_size):
            if tc.max_steps is not None and step >= tc.max_steps:
                break
            idx = order[start : start + tc.batch_size]
            x, y = _augment(x_all[idx], y_all[idx], cfg, gen)
            prob = model(x).softmax(dim=1)[:, 1]
            loss, parts = total_loss(prob, y, cfg.loss)
            if not torch.isfinite(loss):
                raise NumericFailure(
                    f"non-finite loss at epoch {epoch}, step {step}: "
                    + ", ".join(f"{k}={v.item():.4g}" for k, v in parts.items())
                )
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            step += 1
            batches += 1
            sums["total"] += loss.item()
            for k, v in parts.items():
                sums[k] += v.item()
        if batches == 0:
            break
        row = {"epoch": epoch, "lr": lr, **{k: v / batches for k, v in sums.items()}}
        result.log.append(row)
        log.info("epoch %d lr %.3g loss %.4f", epoch, lr, row["total"])
        if on_epoch is not None:
            on_epoch(row)
        if averaged is not None and epoch >= avg_start:
            averaged.update_parameters(model)
        if out_dir is not None:
            save_checkpoint(out_dir / CHECKPOINT_NAME, model, cfg, epoch=epoch, lr=lr, step=step, averaged=False)
            write_log_csv(result.log, out_dir / LOG_NAME)

    if averaged is not None and averaged.n_averaged.item() > 0:
        update_bn([x_all[i : i + tc.batch_size] for i in range(0, n, tc.batch_size)], averaged)
        model.load_state_dict(averaged.module.state_dict())
    model.eval()
    result.steps = step
    if out_dir is not None:
        result.checkpoint = save_checkpoint(
            out_dir / CHECKPOINT_NAME, model, cfg, epoch=len(result.log) - 1, step=step, averaged=averaged is not None
        )
        write_log_csv(result.log, out_dir / LOG_NAME)
    return result


@dataclass
class EvalResult:
    report: MetricsReport
    counts: ConfusionCounts
    instance_iou: list[tuple[int, float]]
    area_bins: list[dict]


@torch.no_grad()
def predict_masks(model: LGBPOrgaNet, x: torch.Tensor, batch_size: int = 4) -> np.ndarray:
    model.eval()
    out = []
    for i in range(0, x.shape[0], batch_size):
        out.append(model(x[i : i + batch_size]).argmax(dim=1).to(torch.uint8))
    return torch.cat(out).numpy()


def evaluate(model: LGBPOrgaNet, cfg: RunConfig, dataset: list[SamplePair], margin: float = 10) -> EvalResult:
    if not dataset:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    x, y = to_tensors(dataset, cfg)
    preds = predict_masks(model, x, cfg.train.batch_size)
    gts = y.numpy().astype(np.uint8)
    counts = ConfusionCounts()
    pairs: list[tuple[int, float]] = []
    for pred, gt in zip(preds, gts):
        counts = counts + confusion_counts(pred, gt)
        pairs.extend(per_instance_iou(pred, gt, margin))
    return EvalResult(report=metrics_report(counts), counts=counts, instance_iou=pairs, area_bins=iou_by_area(pairs))


def evaluate_checkpoint(path: str | Path, dataset: list[SamplePair], margin: float = 10) -> EvalResult:
    model, cfg, _ = load_checkpoint(path)
    return evaluate(model, cfg, dataset, margin)
