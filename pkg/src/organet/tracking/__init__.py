from .assignment import assignment_cost, hungarian
from .io import read_area_csv, read_tracks_json, tracks_document, write_area_csvs, write_tracks_json
from .kalman import ConstantVelocityKalman
from .regions import Region, connected_regions
from .similarity import ssim
from .tracker import (
    MATCHED,
    PREDICTED,
    Track,
    Tracker,
    area_series,
    kalman_predict,
    kalman_update,
    match_cost,
    track_sequence,
    track_step,
)

__all__ = [
    "MATCHED",
    "PREDICTED",
    "ConstantVelocityKalman",
    "Region",
    "Track",
    "Tracker",
    "area_series",
    "assignment_cost",
    "connected_regions",
    "hungarian",
    "kalman_predict",
    "kalman_update",
    "match_cost",
    "read_area_csv",
    "read_tracks_json",
    "ssim",
    "track_sequence",
    "track_step",
    "tracks_document",
    "write_area_csvs",
    "write_tracks_json",
]
