import math

import numpy as np
import pytest
from _oracles import brute_force_assignment
from hypothesis import given, settings
from hypothesis import strategies as st

from organet.config import TrackerConfig
from organet.tracking import (
    MATCHED,
    PREDICTED,
    ConstantVelocityKalman,
    Region,
    Tracker,
    area_series,
    assignment_cost,
    connected_regions,
    hungarian,
    match_cost,
    read_area_csv,
    read_tracks_json,
    ssim,
    track_sequence,
    write_area_csvs,
    write_tracks_json,
)
from organet.tracking.similarity import C1_DEFAULT, C2_DEFAULT


def square_mask(shape, corners, size=5):
    m = np.zeros(shape, np.uint8)
    for r, c in corners:
        m[r : r + size, c : c + size] = 1
    return m


def disk_mask(shape, center, radius):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    return ((xx - center[0]) ** 2 + (yy - center[1]) ** 2 <= radius**2).astype(np.uint8)


def fake_region(centroid, patch, area=50):
    return Region(centroid=centroid, area=area, bbox=(0, 0, 1, 1), patch=np.asarray(patch, float))


class TestConnectedRegions:
    def test_empty(self):
        assert connected_regions(np.zeros((10, 10))) == []

    def test_two_squares(self):
        regions = connected_regions(square_mask((30, 30), [(2, 3), (20, 15)]))
        assert [r.area for r in regions] == [25, 25]
        assert regions[0].centroid == (5.0, 4.0)
        assert regions[1].centroid == (17.0, 22.0)
        assert regions[0].bbox == (3, 2, 7, 6)
        assert regions[0].patch.shape == (32, 32)

    def test_diagonal_touch_is_one_region(self):
        m = np.zeros((12, 12), np.uint8)
        m[0:4, 0:4] = 1
        m[4:8, 4:8] = 1
        (region,) = connected_regions(m, TrackerConfig(min_area=1))
        assert region.area == 32

    def test_min_area_filter(self):
        m = square_mask((20, 20), [(0, 0)], size=3)
        assert connected_regions(m, TrackerConfig(min_area=10)) == []
        assert len(connected_regions(m, TrackerConfig(min_area=9))) == 1

    def test_bbox_contains_centroid(self):
        m = disk_mask((40, 40), (20, 18), 7)
        (r,) = connected_regions(m)
        x0, y0, x1, y1 = r.bbox
        assert x0 <= r.x <= x1 and y0 <= r.y <= y1

    def test_image_patch(self):
        m = square_mask((20, 20), [(5, 5)])
        img = np.arange(400, dtype=float).reshape(20, 20)
        (r,) = connected_regions(m, image=img)
        assert r.patch.min() >= img[5:10, 5:10].min() - 1e-9
        assert r.patch.max() <= img[5:10, 5:10].max() + 1e-9


def ssim_scalar(a, b, c1, c2):
    a, b = list(np.ravel(a)), list(np.ravel(b))
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    va = sum((x - ma) ** 2 for x in a) / n
    vb = sum((y - mb) ** 2 for y in b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b)) / n
    return (2 * ma * mb + c1) * (2 * cov + c2) / ((ma**2 + mb**2 + c1) * (va + vb + c2))


class TestSSIM:
    def test_identical(self):
        a = np.random.default_rng(0).uniform(0, 255, (32, 32))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_two_constants(self):
        a, b = np.full((8, 8), 10.0), np.full((8, 8), 200.0)
        expected = (2 * 10 * 200 + C1_DEFAULT) / (10**2 + 200**2 + C1_DEFAULT)
        assert ssim(a, b) == pytest.approx(expected, rel=1e-14)
        assert ssim(a, b) < 1

    def test_negative_patch(self):
        a = np.random.default_rng(1).normal(0, 40, (16, 16))
        a -= a.mean()
        assert ssim(a, -a) < 0

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_matches_scalar_and_is_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(0, 255, (6, 6)), rng.uniform(0, 255, (6, 6))
        assert ssim(a, b) == pytest.approx(ssim_scalar(a, b, C1_DEFAULT, C2_DEFAULT), rel=1e-9, abs=1e-12)
        assert ssim(a, b) == pytest.approx(ssim(b, a), rel=1e-12, abs=1e-15)
        assert -1 <= ssim(a, b) <= 1

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((4, 4)), np.zeros((4, 5)))


class TestMatchCost:
    def test_identical_is_zero(self):
        patch = np.random.default_rng(0).uniform(0, 255, (32, 32))
        r = fake_region((3.0, 4.0), patch)
        assert match_cost(r, r) == pytest.approx(0.0, abs=1e-12)

    def test_modes(self):
        patch = np.random.default_rng(0).uniform(0, 255, (8, 8))
        a, b = fake_region((0.0, 0.0), patch), fake_region((6.0, 8.0), patch)
        assert match_cost(a, b, TrackerConfig(alpha=1, beta=5)) == pytest.approx(10.0, abs=1e-12)
        assert match_cost(a, b, TrackerConfig(alpha=1, beta=5, cost_mode="literal")) == pytest.approx(15.0, abs=1e-12)

    def test_anchor_replaces_origin(self):
        patch = np.ones((4, 4))
        a, b = fake_region((0.0, 0.0), patch), fake_region((6.0, 8.0), patch)
        assert match_cost(a, b, anchor=(6.0, 8.0)) == pytest.approx(0.0, abs=1e-12)


class TestHungarian:
    def test_diagonal(self):
        assert sorted(hungarian([[1, 2], [2, 1]])) == [(0, 0), (1, 1)]

    def test_single(self):
        assert hungarian([[5]]) == [(0, 0)]

    def test_empty(self):
        assert hungarian(np.zeros((0, 3))) == []

    def test_anti_diagonal(self):
        assert sorted(hungarian([[9, 1], [1, 9]])) == [(0, 1), (1, 0)]

    @pytest.mark.parametrize("shape", [(2, 5), (5, 2), (4, 4), (1, 3)])
    def test_rectangular(self, shape):
        cost = np.random.default_rng(sum(shape)).integers(0, 50, shape)
        pairs = hungarian(cost)
        assert len(pairs) == min(shape)
        assert len({i for i, _ in pairs}) == len({j for _, j in pairs}) == len(pairs)
        assert assignment_cost(cost, pairs) == brute_force_assignment(cost)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(1, 6), m=st.integers(1, 6), seed=st.integers(0, 2**31 - 1))
    def test_optimal_vs_brute_force(self, n, m, seed):
        cost = np.random.default_rng(seed).integers(0, 100, (n, m))
        assert assignment_cost(cost, hungarian(cost)) == brute_force_assignment(cost)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            hungarian([[1.0, np.inf]])


class TestKalman:
    def test_stationary_prediction_exact(self):
        kf = ConstantVelocityKalman((12.5, -3.0))
        assert kf.predict() == (12.5, -3.0)

    def test_constant_velocity(self):
        truth = [(10.0 + 2 * t, 20.0 + 3 * t) for t in range(7)]
        kf = ConstantVelocityKalman(truth[0])
        for t in range(1, 6):
            kf.predict()
            kf.update(truth[t])
        px, py = kf.peek()
        assert math.hypot(px - truth[6][0], py - truth[6][1]) < 0.5
        vx, vy = kf.velocity
        assert abs(vx - 2) < 0.1 and abs(vy - 3) < 0.1

    def test_zero_innovation_keeps_position(self):
        kf = ConstantVelocityKalman((5.0, 5.0))
        kf.predict()
        kf.update((7.0, 8.0))
        pred = kf.predict()
        assert kf.update(pred) == pytest.approx(pred, abs=1e-12)

    def test_covariance_stays_symmetric(self):
        kf = ConstantVelocityKalman((0.0, 0.0))
        for t in range(30):
            kf.predict()
            kf.update((t * 1.5, -t))
        np.testing.assert_allclose(kf.P, kf.P.T, atol=1e-12)
        assert np.linalg.eigvalsh(kf.P).min() > 0


class TestTrackStep:
    def test_cold_start(self):
        tracker = Tracker()
        tracker.step(connected_regions(square_mask((40, 40), [(2, 2), (2, 20), (20, 10)])), 0)
        assert [t.id for t in tracker.tracks] == [0, 1, 2]

    def test_shifted_regions_keep_ids(self):
        tracker = Tracker()
        tracker.step(connected_regions(square_mask((40, 40), [(5, 5), (20, 25)])), 0)
        before = {t.id: t.last_region.centroid for t in tracker.tracks}
        tracker.step(connected_regions(square_mask((40, 40), [(6, 6), (21, 26)])), 1)
        assert sorted(t.id for t in tracker.tracks) == [0, 1]
        for t in tracker.tracks:
            bx, by = before[t.id]
            assert t.last_region.centroid == (bx + 1, by + 1)
            assert [e.flag for e in t.history] == [MATCHED, MATCHED]

    def test_one_frame_gap(self):
        masks = [disk_mask((64, 64), (20 + 2 * t, 30), 8) for t in range(5)]
        masks[2] = np.zeros_like(masks[2])
        tracker = track_sequence(masks)
        (track,) = tracker.all_tracks
        assert track.id == 0
        assert [e.flag for e in track.history] == [MATCHED, MATCHED, PREDICTED, MATCHED, MATCHED]
        series = area_series(track)
        assert series[2] == (2, series[1][1], PREDICTED)

    def test_area_series_values(self):
        masks = [disk_mask((64, 64), (32, 32), r) for r in (10, 11, 12, 13, 14)]
        (track,) = track_sequence(masks).all_tracks
        for (frame, area, flag), r in zip(area_series(track), (10, 11, 12, 13, 14)):
            assert flag == MATCHED
            assert abs(area - math.pi * r * r) / (math.pi * r * r) < 0.05

    def test_zero_gate_never_matches(self):
        masks = [square_mask((30, 30), [(5, 5)])] * 3
        tracker = track_sequence(masks, TrackerConfig(cost_gate=0, max_age=0))
        assert [t.id for t in tracker.all_tracks] == [0, 1, 2]
        assert all(len(t.history) == 1 for t in tracker.all_tracks)

    def test_retirement_trims_placeholders(self):
        masks = [square_mask((30, 30), [(5, 5)])] + [np.zeros((30, 30), np.uint8)] * 5
        tracker = track_sequence(masks, TrackerConfig(max_age=2))
        assert tracker.tracks == []
        (track,) = tracker.retired
        assert [e.flag for e in track.history] == [MATCHED]

    def test_region_assigned_once_and_ids_unique(self):
        rng = np.random.default_rng(3)
        tracker = Tracker()
        for frame in range(8):
            corners = [tuple(rng.integers(0, 55, 2)) for _ in range(rng.integers(0, 4))]
            tracker.step(connected_regions(square_mask((60, 60), corners)), frame)
            seen = [id(e.region) for t in tracker.tracks for e in t.history if e.frame == frame and e.region]
            assert len(seen) == len(set(seen))
        ids = [t.id for t in tracker.all_tracks]
        assert len(ids) == len(set(ids))


class TestTrackIO:
    def test_round_trip(self, tmp_path):
        masks = [disk_mask((64, 64), (20 + 2 * t, 30), 8) for t in range(4)]
        masks[1] = np.zeros_like(masks[1])
        tracker = track_sequence(masks)
        path = write_tracks_json(tracker, tmp_path / "tracks.json")
        doc = read_tracks_json(path)
        assert doc["schema_version"] == 1
        (entries,) = doc["tracks"].values()
        assert [e["flag"] for e in entries] == [MATCHED, PREDICTED, MATCHED, MATCHED]
        (csv_path,) = write_area_csvs(tracker, tmp_path)
        rows = read_area_csv(csv_path)
        assert [r[0] for r in rows] == [0, 1, 2, 3]
        assert rows[1][1] == rows[0][1] and rows[1][2] == PREDICTED
