"""Tests for scanline smoothness, feature extraction, projection, grouping."""
import numpy as np
import pytest

from fploc.features import (
    KIND_CORNER,
    KIND_SURFACE,
    UNCLASSIFIED,
    FeatureConfig,
    FeatureSet,
    compute_smoothness,
    extract_features,
    features_to_csv,
    group_surface_points,
    project_features,
)
from fploc.plans import square_room
from fploc.segmentation import SegmentationConfig, VerticalState, segment_scan
from fploc.simulate import Pose6, Scene, simulate_scan, spinning_sensor


def _line_points(n, origin=(4.0, -2.0, 0.0), direction=(0.0, 1.0, 0.0),
                 step=0.02):
    t = np.arange(n)[:, None] * step
    return np.asarray(origin) + t * np.asarray(direction)


class TestSmoothness:
    def test_collinear_points_have_zero_curvature(self):
        pts = _line_points(40)
        rr = np.linalg.norm(pts, axis=1)
        c = compute_smoothness(pts, rr, window=5)
        interior = c[5:-5]
        assert np.all(np.isfinite(interior))
        assert np.max(interior) < 1e-12

    def test_ends_are_invalid(self):
        pts = _line_points(30)
        rr = np.linalg.norm(pts, axis=1)
        c = compute_smoothness(pts, rr, window=5)
        assert np.all(np.isnan(c[:5])) and np.all(np.isnan(c[-5:]))

    def test_corner_is_local_max(self):
        # Right-angle junction at index 30: wall along +y then along +x.
        a = _line_points(31, origin=(4.0, -0.6, 0.0), direction=(0, 1, 0))
        b = _line_points(30, origin=a[-1] + (0.02, 0.0, 0.0),
                         direction=(1, 0, 0))
        pts = np.vstack((a, b))
        rr = np.linalg.norm(pts, axis=1)
        c = compute_smoothness(pts, rr, window=5)
        peak = int(np.nanargmax(c))
        assert abs(peak - 30) <= 1
        assert c[peak] > 5 * np.nanmedian(c)

    def test_range_jump_invalidates_neighborhood(self):
        pts = _line_points(40)
        rr = np.linalg.norm(pts, axis=1).copy()
        pts2 = pts.copy()
        pts2[20:] += np.array([2.0, 0.0, 0.0])  # occlusion edge
        rr2 = np.linalg.norm(pts2, axis=1)
        c = compute_smoothness(pts2, rr2, window=5)
        assert np.all(np.isnan(c[16:25]))

    def test_window_validation(self):
        pts = _line_points(10)
        with pytest.raises(ValueError):
            compute_smoothness(pts, np.linalg.norm(pts, axis=1), window=1)

    def test_short_line_all_nan(self):
        pts = _line_points(8)
        c = compute_smoothness(pts, np.linalg.norm(pts, axis=1), window=5)
        assert np.all(np.isnan(c))


def _scan_and_segment(plan, pose, n_rings=32, n_az=512, noise=0.0, seed=0):
    scene = Scene(plan, ceiling_z=3.0)
    sensor = spinning_sensor(n_rings, 16.6, n_az, range_noise_sigma=noise)
    scan = simulate_scan(scene, pose, sensor, seed=seed)
    seg = segment_scan(scan, SegmentationConfig(ceiling_z_m=3.0))
    return scan, seg


class TestExtraction:
    def test_square_room_finds_all_four_corners(self):
        plan = square_room(8.0)
        pose = Pose6(0.3, -0.2, 2.2, yaw=0.1)
        scan, seg = _scan_and_segment(plan, pose)
        feats = extract_features(seg, scan.azimuths.shape[0])
        corners = feats.xy[feats.kind == KIND_CORNER]
        assert corners.shape[0] >= 4
        # Map each corner into the world frame and check junction proximity.
        R = pose.rotation()
        world = (corners @ R.T) + pose.translation
        junctions = np.array([[4, 4], [4, -4], [-4, 4], [-4, -4]], float)
        d = np.linalg.norm(world[:, None, :2] - junctions[None], axis=2)
        nearest = d.min(axis=1)
        assert np.all(nearest < 0.15)
        # Every junction should be seen by at least one ring.
        assert np.all(d.min(axis=0) < 0.15)

    def test_per_sector_caps_on_single_contiguous_run(self):
        # One ring, one contiguous 512-column run along a straight wall:
        # per sector at most `surfaces_per_sector` surfaces and no corners.
        from fploc.segmentation import SegmentedScan
        n_az = 512
        pts = _line_points(n_az, origin=(4.0, -5.0, 0.0),
                           direction=(0, 1, 0), step=0.02)
        rr = np.linalg.norm(pts, axis=1)
        state = VerticalState(2.2, 0.0, 0.0, np.array([0.0, 0.0, -1.0]))
        seg = SegmentedScan(np.empty((0, 3)), np.empty((0, 3)), pts,
                            np.zeros(n_az, np.int32),
                            np.arange(n_az, dtype=np.int32), rr, state)
        cfg = FeatureConfig()
        feats = extract_features(seg, n_az, cfg)
        assert np.all(feats.kind == KIND_SURFACE)
        assert len(feats) <= cfg.n_sectors * cfg.surfaces_per_sector
        sector = (feats.azimuth_idx //
                  (n_az / cfg.n_sectors)).astype(int)
        assert np.bincount(sector).max() <= cfg.surfaces_per_sector

    def test_total_feature_count_bounded_in_room(self):
        plan = square_room(8.0)
        scan, seg = _scan_and_segment(plan, Pose6(0.0, 0.0, 2.2))
        cfg = FeatureConfig()
        feats = extract_features(seg, scan.azimuths.shape[0], cfg)
        # Loose global bound: caps are enforced per contiguous wall run,
        # and a ring gains at most a handful of runs from occluded arcs.
        per_ring_cap = cfg.n_sectors * (cfg.corners_per_sector +
                                        cfg.surfaces_per_sector)
        assert 0 < len(feats) <= 4 * scan.n_rings * per_ring_cap

    def test_flat_wall_yields_no_corners(self):
        # A single long wall: nothing in view should classify as a corner.
        from fploc.geometry import FloorPlan, Segment
        plan = FloorPlan([Segment(-50.0, 4.0, 50.0, 4.0),
                          Segment(-50.0, -50.0, 50.0, -50.0)])
        scan, seg = _scan_and_segment(plan, Pose6(0.0, 0.0, 2.2))
        feats = extract_features(seg, scan.azimuths.shape[0])
        near = np.linalg.norm(feats.xy[:, :2], axis=1) < 20.0
        assert np.count_nonzero((feats.kind == KIND_CORNER) & near) == 0

    def test_corner_min_separation(self):
        plan = square_room(8.0)
        scan, seg = _scan_and_segment(plan, Pose6(0.0, 0.0, 2.2))
        cfg = FeatureConfig()
        feats = extract_features(seg, scan.azimuths.shape[0], cfg)
        for ring in np.unique(feats.ring):
            m = (feats.ring == ring) & (feats.kind == KIND_CORNER)
            cols = np.sort(feats.azimuth_idx[m])
            if cols.size > 1:
                assert np.min(np.diff(cols)) >= cfg.corner_min_separation


class TestProjection:
    def test_merge_prefers_corner_kind_and_averages_position(self):
        xy = np.array([[1.000, 2.000, 0.0],
                       [1.004, 2.004, 0.0],     # same 3 cm cell as row 0
                       [5.000, 5.000, 0.0]])
        feats = FeatureSet(xy,
                           np.array([KIND_SURFACE, KIND_CORNER, KIND_SURFACE],
                                    np.uint8),
                           np.full(3, UNCLASSIFIED, np.int32),
                           np.zeros(3, np.int32), np.arange(3, dtype=np.int32))
        state = VerticalState(2.2, 0.0, 0.0, np.array([0.0, 0.0, -1.0]))
        out = project_features(feats, state)
        assert len(out) == 2
        merged = out.xy[np.argmin(np.linalg.norm(out.xy - [1.002, 2.002],
                                                 axis=1))]
        assert np.allclose(merged, [1.002, 2.002], atol=1e-9)
        kinds = out.kind[np.lexsort(out.xy.T)]
        assert KIND_CORNER in out.kind

    def test_projection_compensates_roll(self):
        # A point straight ahead on a rolled sensor lands where the level
        # sensor would see it.
        roll = np.deg2rad(4.0)
        p_level = np.array([[3.0, 1.0, 0.5]])
        from fploc.transforms import rot_x
        p_rolled = p_level @ rot_x(roll)  # rotate world point into sensor frame
        feats = FeatureSet(p_rolled, np.array([KIND_SURFACE], np.uint8),
                           np.array([UNCLASSIFIED], np.int32),
                           np.zeros(1, np.int32), np.zeros(1, np.int32))
        state = VerticalState(2.2, roll, 0.0, np.array([0.0, 0.0, -1.0]))
        out = project_features(feats, state)
        assert np.allclose(out.xy[0], p_level[0, :2], atol=1e-12)

    def test_empty_input(self):
        feats = FeatureSet(np.empty((0, 3)), np.empty(0, np.uint8),
                           np.empty(0, np.int32), np.empty(0, np.int32),
                           np.empty(0, np.int32))
        state = VerticalState(2.2, 0.0, 0.0, np.array([0.0, 0.0, -1.0]))
        assert len(project_features(feats, state)) == 0


class TestGrouping:
    def _mk(self, xy, kinds):
        n = len(kinds)
        return FeatureSet(np.asarray(xy, float), np.asarray(kinds, np.uint8),
                          np.full(n, UNCLASSIFIED, np.int32),
                          np.zeros(n, np.int32),
                          np.arange(n, dtype=np.int32))

    def test_collinear_run_shares_group(self):
        xy = [[0, 0], [0.5, 0], [1.0, 0], [1.5, 0], [2.0, 2.0]]
        kinds = [KIND_SURFACE] * 4 + [KIND_CORNER]
        out = group_surface_points(self._mk(xy, kinds))
        gids = out.group[:4]
        assert gids[0] >= 0 and np.all(gids == gids[0])
        assert out.group[4] == UNCLASSIFIED

    def test_corner_splits_runs_into_distinct_groups(self):
        xy = [[0, 0], [0.5, 0], [1.0, 0],
              [1.0, 0],                      # corner
              [1.0, 0.5], [1.0, 1.0], [1.0, 1.5]]
        kinds = [KIND_SURFACE] * 3 + [KIND_CORNER] + [KIND_SURFACE] * 3
        out = group_surface_points(self._mk(xy, kinds))
        g1, g2 = out.group[0], out.group[4]
        assert g1 >= 0 and g2 >= 0 and g1 != g2

    def test_scattered_run_stays_unclassified(self):
        rng = np.random.default_rng(3)
        xy = rng.uniform(-1, 1, size=(8, 2))
        out = group_surface_points(self._mk(xy, [KIND_SURFACE] * 8))
        assert np.all(out.group == UNCLASSIFIED)

    def test_short_run_not_grouped(self):
        xy = [[0, 0], [0.5, 0]]
        out = group_surface_points(self._mk(xy, [KIND_SURFACE] * 2))
        assert np.all(out.group == UNCLASSIFIED)


def test_csv_export_round_numbers():
    feats = FeatureSet(np.array([[1.25, -2.5]]),
                       np.array([KIND_CORNER], np.uint8),
                       np.array([3], np.int32), np.array([7], np.int32),
                       np.array([11], np.int32))
    text = features_to_csv(feats)
    lines = text.strip().splitlines()
    assert lines[0] == "x,y,kind,group,ring"
    assert lines[1] == "1.250000,-2.500000,1,3,7"
