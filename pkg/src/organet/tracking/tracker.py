"""Adjacent-frame organoid association with Kalman gap filling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..config import TrackerConfig
from .assignment import hungarian
from .kalman import ConstantVelocityKalman
from .regions import Region
from .similarity import ssim

MATCHED = "matched"
PREDICTED = "predicted"


@dataclass
class TrackEntry:
    frame: int
    centroid: tuple[float, float]
    area: int
    flag: str
    region: Region | None = None


@dataclass
class Track:
    id: int
    kalman: ConstantVelocityKalman
    last_region: Region
    history: list[TrackEntry] = field(default_factory=list)
    miss_count: int = 0

    @property
    def alive_frames(self) -> list[int]:
        return [e.frame for e in self.history]


def euclid(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def match_cost(a: Region, b: Region, config: TrackerConfig | None = None, anchor=None) -> float:
    """alpha * distance + beta * (1 - ssim) by default; ``cost_mode='literal'`` uses beta * ssim.

    ``anchor`` replaces ``a``'s centroid as the distance origin (the Kalman prediction
    when called from the tracker).
    """
    cfg = config or TrackerConfig()
    d = euclid(a.centroid if anchor is None else anchor, b.centroid)
    s = ssim(a.patch, b.patch, cfg.ssim_c1, cfg.ssim_c2)
    if cfg.cost_mode == "literal":
        return cfg.alpha * d + cfg.beta * s
    return cfg.alpha * d + cfg.beta * (1.0 - s)


def kalman_predict(track: Track) -> tuple[float, float]:
    return track.kalman.predict()


def kalman_update(track: Track, measurement) -> tuple[float, float]:
    return track.kalman.update(measurement)


def area_series(track: Track) -> list[tuple[int, int, str]]:
    """(frame, area, flag); predicted frames carry the last observed area."""
    return [(e.frame, e.area, e.flag) for e in track.history]


class Tracker:
    """Owns the live tracks of one sequence; feed it one frame of regions at a time."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.config.validate()
        self.tracks: list[Track] = []
        self.retired: list[Track] = []
        self._next_id = 0

    @property
    def all_tracks(self) -> list[Track]:
        return sorted(self.retired + self.tracks, key=lambda t: t.id)

    def _spawn(self, region: Region, frame: int) -> Track:
        cfg = self.config
        kf = ConstantVelocityKalman(region.centroid, cfg.process_noise, cfg.measurement_noise, cfg.initial_velocity_var)
        track = Track(id=self._next_id, kalman=kf, last_region=region)
        track.history.append(TrackEntry(frame, region.centroid, region.area, MATCHED, region))
        self._next_id += 1
        return track

    def cost_matrix(self, regions: list[Region], predictions: list[tuple[float, float]]) -> np.ndarray:
        cost = np.empty((len(self.tracks), len(regions)))
        for i, (track, pred) in enumerate(zip(self.tracks, predictions)):
            for j, region in enumerate(regions):
                cost[i, j] = match_cost(track.last_region, region, self.config, anchor=pred)
        return cost

    def step(self, regions: list[Region], frame: int) -> list[Track]:
        cfg = self.config
        predictions = [kalman_predict(t) for t in self.tracks]
        pairs = []
        if self.tracks and regions:
            cost = self.cost_matrix(regions, predictions)
            # strict comparison so that a zero gate disables matching altogether
            pairs = [(i, j) for i, j in hungarian(cost) if cost[i, j] < cfg.cost_gate]
        matched_tracks = {i for i, _ in pairs}
        matched_regions = {j for _, j in pairs}

        for i, j in pairs:
            track, region = self.tracks[i], regions[j]
            kalman_update(track, region.centroid)
            track.last_region = region
            track.miss_count = 0
            track.history.append(TrackEntry(frame, region.centroid, region.area, MATCHED, region))

        survivors = []
        for i, track in enumerate(self.tracks):
            if i not in matched_tracks:
                track.miss_count += 1
                if track.miss_count > cfg.max_age:
                    while track.history and track.history[-1].flag == PREDICTED:
                        track.history.pop()
                    self.retired.append(track)
                    continue
                last_area = track.history[-1].area
                track.history.append(TrackEntry(frame, predictions[i], last_area, PREDICTED))
            survivors.append(track)

        for j, region in enumerate(regions):
            if j not in matched_regions:
                survivors.append(self._spawn(region, frame))
        self.tracks = survivors
        return self.tracks


def track_step(tracker: Tracker, regions: list[Region], frame_index: int) -> list[Track]:
    return tracker.step(regions, frame_index)


def track_sequence(masks, config: TrackerConfig | None = None, images=None, frames=None) -> Tracker:
    """Run the tracker over a list of binary masks (and optional grayscale images)."""
    from .regions import connected_regions

    tracker = Tracker(config)
    frames = list(range(len(masks))) if frames is None else list(frames)
    for k, mask in enumerate(masks):
        image = None if images is None else images[k]
        tracker.step(connected_regions(mask, tracker.config, image=image), frames[k])
    return tracker
