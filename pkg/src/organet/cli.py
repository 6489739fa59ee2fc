"""``organet`` command line: train, segment, track, eval, synth and report.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from . import plotting
from .config import SCHEMA_VERSION, RunConfig, apply_overrides, dump_config, load_config
from .datakit import (
    image_to_png,
    list_images,
    load_dataset,
    mask_to_png,
    preprocess_image,
    read_image,
    read_mask,
    save_png,
    synth_dataset,
    synth_scene,
)
from .errors import CheckpointError, ConfigError, DataError, NumericFailure
from .metrics import EIGHT_CONNECTED, MetricsReport
from .tracking import read_tracks_json, track_sequence, tracks_document, write_area_csvs, write_tracks_json
from .train import LOG_COLUMNS, LOG_NAME, evaluate, load_checkpoint, train

log = logging.getLogger("organet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


# --- shared helpers -----------------------------------------------------------


def _existing_dir(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"{what} is required")
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} {p} is not a directory")
    return p


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config, toy=getattr(args, "toy", False))
    return _finish_config(cfg, args)


def _finish_config(cfg: RunConfig, args) -> RunConfig:
    cfg = apply_overrides(cfg, args.set or [])
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
        cfg.synth.seed = args.seed
    return cfg.validate()


def _echo(cfg: RunConfig, out_dir: Path, args) -> None:
    invocation = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    dump_config(cfg, out_dir, cfg.train.seed, extra=invocation)


def _checkpoint_config(args) -> tuple[torch.nn.Module, RunConfig]:
    model, cfg, _ = load_checkpoint(args.checkpoint)
    if getattr(args, "config", None):
        raise UsageError("--config cannot be combined with a checkpoint; use --set for tracker or synth tweaks")
    return model, _finish_config(cfg, args)


def _write_json(doc: dict, path: Path) -> Path:
    path.write_text(json.dumps(doc, indent=2))
    return path


def _clean_bins(bins: list[dict]) -> list[dict]:
    return [{**b, "area_max": None if math.isinf(b["area_max"]) else b["area_max"]} for b in bins]


@torch.no_grad()
def _predict(model, cfg: RunConfig, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Foreground probability and binary mask at the image's own resolution."""
    x = preprocess_image(image, cfg.encoder.input_size, cfg.preprocess, cfg.encoder.window)
    prob = model.predict_proba(x[None])[0, 1]
    h, w = image.shape[:2]
    if prob.shape != (h, w):
        prob = torch.nn.functional.interpolate(prob[None, None], size=(h, w), mode="bilinear", align_corners=False)[
            0, 0
        ]
    prob = prob.numpy()
    return prob, (prob > 0.5).astype(np.uint8)


# --- commands -----------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _run_config(args)
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    if args.max_steps is not None:
        cfg.train.max_steps = args.max_steps
    cfg.validate()
    out_dir = Path(args.out_dir)
    if args.synthetic:
        if args.data_dir:
            raise UsageError("pass either a data directory or --synthetic, not both")
        dataset = synth_dataset(cfg.synth, cfg.train.n_synthetic)
    else:
        dataset = load_dataset(_existing_dir(args.data_dir, "data directory"))
    _echo(cfg, out_dir, args)

    def report(row):
        print(
            f"epoch {row['epoch']} lr {row['lr']:.6g} total {row['total']:.8f} "
            f"iq {row['iq']:.8f} dice {row['dice']:.8f} focal {row['focal']:.8f}",
            flush=True,
        )

    result = train(cfg, dataset, out_dir, on_epoch=report)
    plotting.plot_loss_curve(result.log, out_dir / "loss_curve.png")
    print(f"checkpoint: {result.checkpoint}")
    return EXIT_OK


def cmd_segment(args) -> int:
    model, cfg = _checkpoint_config(args)
    images = list_images(_existing_dir(args.images_dir, "images directory"))
    if not images:
        raise UsageError(f"no images in {args.images_dir}")
    out_dir = Path(args.out_dir)
    _echo(cfg, out_dir, args)
    failures = 0
    for path in images:
        try:
            image = read_image(path)
        except DataError as exc:
            log.warning("skipping %s: %s", path.name, exc)
            failures += 1
            continue
        prob, mask = _predict(model, cfg, image)
        save_png(mask_to_png(mask), out_dir / "masks" / f"{path.stem}.png")
        if args.prob:
            save_png((np.clip(prob, 0, 1) * 255 + 0.5).astype(np.uint8), out_dir / "prob" / f"{path.stem}.png")
    if failures == len(images):
        raise DataError("no image could be read")
    print(f"segmented {len(images) - failures} of {len(images)} images into {out_dir / 'masks'}")
    return EXIT_OK


def _frame_labels(mask: np.ndarray) -> tuple[np.ndarray, dict]:
    from scipy import ndimage

    labels, _ = ndimage.label(mask.astype(bool), structure=EIGHT_CONNECTED)
    by_bbox = {}
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        by_bbox[(sl[1].start, sl[0].start, sl[1].stop - 1, sl[0].stop - 1)] = idx
    return labels, by_bbox


def cmd_track(args) -> int:
    if args.masks_dir and args.checkpoint:
        raise UsageError("pass either --masks-dir or --checkpoint, not both")
    images = None
    if args.checkpoint:
        model, cfg = _checkpoint_config(args)
        paths = list_images(_existing_dir(args.images_dir, "--images-dir"))
        if not paths:
            raise UsageError("empty image sequence")
        images = [read_image(p) for p in paths]
        masks = [_predict(model, cfg, im)[1] for im in images]
    else:
        cfg = _run_config(args)
        paths = list_images(_existing_dir(args.masks_dir, "--masks-dir"))
        if not paths:
            raise UsageError("empty mask sequence")
        masks = [read_mask(p) for p in paths]
        if args.images_dir:
            image_paths = list_images(_existing_dir(args.images_dir, "--images-dir"))
            if len(image_paths) != len(paths):
                raise DataError(f"{len(image_paths)} images for {len(paths)} masks")
            images = [read_image(p) for p in image_paths]
    out_dir = Path(args.out_dir)
    _echo(cfg, out_dir, args)

    gray = None if images is None else [im.mean(axis=-1) * 255.0 for im in images]
    tracker = track_sequence(masks, cfg.tracker, images=gray)
    names = [p.stem for p in paths]
    write_tracks_json(tracker, out_dir / "tracks.json", frame_names=names)
    write_area_csvs(tracker, out_dir / "areas")
    doc = tracks_document(tracker, names)
    plotting.plot_area_series(doc["tracks"], out_dir / "area_series.png")

    if not args.no_overlays:
        per_frame: dict[int, list] = {}
        for t in tracker.all_tracks:
            for e in t.history:
                per_frame.setdefault(e.frame, []).append((t.id, e))
        for k, (mask, name) in enumerate(zip(masks, names)):
            labels, by_bbox = _frame_labels(mask)
            entries = []
            for track_id, e in per_frame.get(k, []):
                label = by_bbox.get(e.region.bbox, 0) if e.region is not None else 0
                entries.append((track_id, label, {"cx": e.centroid[0], "cy": e.centroid[1]}))
            base = images[k] if images is not None else np.repeat(mask[..., None], 3, axis=-1) * 0.35
            save_png(plotting.draw_overlay(base, labels, entries), out_dir / "overlays" / f"{name}.png")
    print(f"{doc['track_count']} tracks over {len(masks)} frames -> {out_dir / 'tracks.json'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, cfg = _checkpoint_config(args)
    if args.synthetic:
        if args.data_dir:
            raise UsageError("pass either a data directory or --synthetic, not both")
        dataset = synth_dataset(cfg.synth, args.count, seed_offset=args.seed_offset)
    else:
        dataset = load_dataset(_existing_dir(args.data_dir, "data directory"))
    out_dir = Path(args.out_dir)
    _echo(cfg, out_dir, args)
    result = evaluate(model, cfg, dataset, margin=args.margin)
    report = result.report.as_dict()
    bins = _clean_bins(result.area_bins)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "n_samples": len(dataset),
        "metrics": {k: report[k] for k in MetricsReport.METRIC_KEYS},
        "degenerate": report["degenerate"],
        "counts": asdict(result.counts),
        "instance_margin": args.margin,
        "area_bins": bins,
    }
    _write_json(doc, out_dir / "metrics.json")
    _write_bins_csv(bins, out_dir / "iou_by_area.csv")
    plotting.plot_iou_bins(bins, out_dir / "iou_by_area.png")
    print(" ".join(f"{k}={doc['metrics'][k]:.4f}" for k in MetricsReport.METRIC_KEYS))
    return EXIT_OK


def _write_bins_csv(bins: list[dict], path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["area_min", "area_max", "count", "mean_iou", "schema_version"])
        for b in bins:
            w.writerow(
                [
                    b["area_min"],
                    "inf" if b["area_max"] is None else b["area_max"],
                    b["count"],
                    "" if b["mean_iou"] is None else f"{b['mean_iou']:.6f}",
                    SCHEMA_VERSION,
                ]
            )


def cmd_synth(args) -> int:
    cfg = _run_config(args)
    out_dir = Path(args.out_dir)
    _echo(cfg, out_dir, args)
    if args.frames:
        samples = [synth_scene(cfg.synth, t, horizon=args.frames) for t in range(args.frames)]
        stems = [f"seq_{t:04d}" for t in range(args.frames)]
    else:
        samples = synth_dataset(cfg.synth, args.count)
        stems = [f"scene_{i:04d}" for i in range(args.count)]
    for s, stem in zip(samples, stems):
        save_png(image_to_png(s.image), out_dir / "images" / f"{stem}.png")
        save_png(mask_to_png(s.mask), out_dir / "masks" / f"{stem}.png")
        save_png(s.instances.astype(np.uint16), out_dir / "instances" / f"{stem}.png")
    print(f"wrote {len(samples)} image/mask pairs to {out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    out_dir = Path(args.out_dir)
    rows = []
    for run in args.run_dirs:
        run = _existing_dir(run, "run directory")
        tag = run.name
        log_path = run / LOG_NAME
        if log_path.is_file():
            with log_path.open(newline="") as fh:
                log_rows = [{k: float(r[k]) for k in LOG_COLUMNS} for r in csv.DictReader(fh)]
            if log_rows:
                fig = plotting.plot_loss_curve(log_rows, out_dir / f"{tag}_loss_curve.png")
                last = log_rows[-1]
                rows.append([tag, "final_total_loss", f"{last['total']:.6g}", fig.name])
        metrics_path = run / "metrics.json"
        if metrics_path.is_file():
            doc = json.loads(metrics_path.read_text())
            fig = plotting.plot_iou_bins(doc["area_bins"], out_dir / f"{tag}_iou_by_area.png")
            for k, v in doc["metrics"].items():
                rows.append([tag, k, f"{v:.6g}", fig.name])
        tracks_path = run / "tracks.json"
        if tracks_path.is_file():
            doc = read_tracks_json(tracks_path)
            fig = plotting.plot_area_series(doc["tracks"], out_dir / f"{tag}_area_series.png")
            rows.append([tag, "track_count", str(doc["track_count"]), fig.name])
    if not rows:
        raise DataError("no train_log.csv, metrics.json or tracks.json found in the given directories")
    with (out_dir / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "quantity", "value", "figure", "schema_version"])
        w.writerows([*r, SCHEMA_VERSION] for r in rows)
    dump_config(RunConfig(), out_dir, extra={"command": "report", "run_dirs": [str(r) for r in args.run_dirs]})
    print(f"report with {len(rows)} rows -> {out_dir / 'summary.csv'}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--set", action="append", metavar="BLOCK.KEY=VALUE", help="override one config value (repeatable)")
    p.add_argument("--seed", type=int, help="seed for training and synthesis")
    p.add_argument("--out-dir", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="organet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("data_dir", nargs="?", help="dataset root with images/ and masks/")
    p.add_argument("--synthetic", action="store_true", help="train on generated scenes (train.n_synthetic of them)")
    p.add_argument("--toy", action="store_true", help="start from the 112 px, 32-channel geometry")
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="write binary masks for a directory of images")
    p.add_argument("checkpoint")
    p.add_argument("images_dir")
    p.add_argument("--prob", action="store_true", help="also write 8-bit probability maps")
    _common(p, config=False)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("track", help="track organoids through a frame sequence")
    p.add_argument("--masks-dir", help="per-frame binary masks (0/255 PNG)")
    p.add_argument("--checkpoint", help="segment --images-dir with this model instead of reading masks")
    p.add_argument("--images-dir", help="frames for the similarity term and overlays")
    p.add_argument("--no-overlays", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="metrics of a checkpoint on a labelled dataset")
    p.add_argument("checkpoint")
    p.add_argument("data_dir", nargs="?")
    p.add_argument("--synthetic", action="store_true", help="evaluate on generated scenes")
    p.add_argument("--count", type=int, default=50, help="number of generated scenes")
    p.add_argument("--seed-offset", type=int, default=100000, help="seed offset keeping generated scenes held out")
    p.add_argument("--margin", type=float, default=10.0, help="bounding-box margin for per-organoid IoU")
    _common(p, config=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic dataset or sequence")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--frames", type=int, help="emit one sequence of this many frames instead of independent scenes")
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="render figures and a summary CSV from run directories")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"organet {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as exc:
        print(f"organet {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericFailure as exc:
        print(f"organet {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
