"""Tracks JSON and per-track area CSV files."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .tracker import Tracker, area_series

SCHEMA_VERSION = 1
AREA_COLUMNS = ("frame", "area", "flag")


def tracks_document(tracker: Tracker, frame_names: list[str] | None = None) -> dict:
    tracks = {}
    for t in tracker.all_tracks:
        tracks[str(t.id)] = [
            {
                "frame": e.frame,
                "cx": round(e.centroid[0], 4),
                "cy": round(e.centroid[1], 4),
                "area": e.area,
                "flag": e.flag,
            }
            for e in t.history
        ]
    doc = {"schema_version": SCHEMA_VERSION, "track_count": len(tracks), "tracks": tracks}
    if frame_names is not None:
        doc["frames"] = list(frame_names)
    return doc


def write_tracks_json(tracker: Tracker, path: str | Path, frame_names: list[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(tracks_document(tracker, frame_names), indent=2))
    return path


def read_tracks_json(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported tracks schema_version {doc.get('schema_version')!r}")
    return doc


def area_csv_name(track_id: int) -> str:
    return f"track_{track_id:03d}_area.csv"


def write_area_csvs(tracker: Tracker, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in tracker.all_tracks:
        path = out_dir / area_csv_name(t.id)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*AREA_COLUMNS, "schema_version"])
            w.writerows([*row, SCHEMA_VERSION] for row in area_series(t))
        paths.append(path)
    return paths


def read_area_csv(path: str | Path) -> list[tuple[int, int, str]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["frame"]), int(r["area"]), r["flag"]) for r in rows]
