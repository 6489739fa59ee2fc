import numpy as np
from numpy.testing import assert_array_equal
from PIL import Image

from organet.plotting import draw_overlay, plot_area_series, plot_iou_bins, plot_loss_curve, track_color


def _is_png(path):
    with Image.open(path) as im:
        return im.format == "PNG" and im.size[0] > 100


def test_loss_curve(tmp_path):
    rows = [
        {"epoch": e, "lr": 0.01 * 0.1 ** (e // 10), "total": 1 / (e + 1), "iq": 0.1, "dice": 0.5, "focal": 0.2}
        for e in range(21)
    ]
    assert _is_png(plot_loss_curve(rows, tmp_path / "sub" / "loss.png"))


def test_loss_curve_with_zero_values(tmp_path):
    rows = [{"epoch": 0, "lr": 0.01, "total": 0.0, "iq": 0.0, "dice": 0.0, "focal": 0.0}]
    assert _is_png(plot_loss_curve(rows, tmp_path / "loss.png"))


def test_iou_bins_with_empty_bin(tmp_path):
    bins = [
        {"area_min": 0, "area_max": 256, "mean_iou": 0.7, "count": 3},
        {"area_min": 256, "area_max": None, "mean_iou": None, "count": 0},
        {"area_min": 512, "area_max": float("inf"), "mean_iou": 0.9, "count": 1},
    ]
    assert _is_png(plot_iou_bins(bins, tmp_path / "bins.png"))


def test_area_series(tmp_path):
    tracks = {
        "1": [{"frame": 0, "area": 100, "flag": "matched"}, {"frame": 1, "area": 110, "flag": "predicted"}],
        "2": [{"frame": 1, "area": 50, "flag": "matched"}],
    }
    assert _is_png(plot_area_series(tracks, tmp_path / "areas.png"))


def test_palette_is_stable_and_distinct():
    assert track_color(3) == track_color(3)
    assert len({track_color(i) for i in range(18)}) == 18
    assert track_color(0) == track_color(18)


def test_overlay_outlines_in_track_colour():
    image = np.full((40, 40), 0.5)
    labels = np.zeros((40, 40), dtype=np.int32)
    labels[10:20, 10:20] = 1
    out = draw_overlay(image, labels, [(4, 1, {"cx": 14.5, "cy": 14.5}), (5, 0, {"cx": 30.0, "cy": 30.0})])
    assert out.shape == (40, 40, 3) and out.dtype == np.uint8
    want = np.round(255 * np.array(track_color(4))).astype(np.uint8)
    assert_array_equal(out[10, 15], want)
    assert_array_equal(out[0, 0], [128, 128, 128])
    cross = np.round(255 * np.array(track_color(5))).astype(np.uint8)
    assert_array_equal(out[27, 27], cross)
