"""LOAM-style corner/surface feature extraction on wall points, gravity
aligned projection to 2D, and PCA grouping of surface runs between corners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .segmentation import SegmentedScan, VerticalState
from .transforms import rot_x, rot_y

KIND_SURFACE = 0
KIND_CORNER = 1
UNCLASSIFIED = -1


@dataclass(frozen=True)
class FeatureConfig:
    window: int = 5                  # smoothness neighbors per side
    # The curvature statistic is normalized by range and neighborhood size,
    # so corner magnitudes scale with the azimuth step; 0.02 separates right
    # angle junctions from flat walls for sensors near 512 columns.
    corner_threshold: float = 0.02
    surface_threshold: float = 0.01
    n_sectors: int = 6
    corners_per_sector: int = 2
    surfaces_per_sector: int = 4
    corner_min_separation: int = 10  # azimuth columns
    range_jump_m: float = 0.3
    merge_epsilon_m: float = 0.03
    pca_ratio: float = 0.05
    min_group_run: int = 3


@dataclass
class FeatureSet:
    """Flat arrays, one row per feature point."""
    xy: np.ndarray                       # (m, 2) projected  (or (m,3) pre-projection)
    kind: np.ndarray                     # (m,) KIND_*
    group: np.ndarray                    # (m,) group id or UNCLASSIFIED
    ring: np.ndarray                     # (m,)
    azimuth_idx: np.ndarray              # (m,)
    timestamp: float = 0.0
    smoothness: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __len__(self) -> int:
        return self.xy.shape[0]


def compute_smoothness(ring_points: np.ndarray, ranges: np.ndarray,
                       window: int = 5,
                       range_jump_m: float = 0.3) -> np.ndarray:
    """Curvature proxy per point of one contiguous scanline.

    c_i = || sum_{j in S} (p_j - p_i) || / (|S| * ||p_i||) over the 2w
    contiguous neighbors. Points within w of the line ends, or within w
    of a range discontinuity, get NaN.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    n = ring_points.shape[0]
    c = np.full(n, np.nan)
    if n < 2 * window + 1:
        return c
    w = window
    csum = np.vstack((np.zeros(3), np.cumsum(ring_points, axis=0)))
    total = csum[2 * w + 1:] - csum[:-2 * w - 1]          # window sums, len n-2w
    center = ring_points[w:n - w]
    diff = total - (2 * w + 1) * center
    norm_p = np.linalg.norm(center, axis=1)
    c[w:n - w] = np.linalg.norm(diff, axis=1) / (2 * w * np.maximum(norm_p, 1e-12))
    # Invalidate around range discontinuities (occlusion edges).
    jumps = np.abs(np.diff(ranges)) > range_jump_m
    for j in np.nonzero(jumps)[0]:
        c[max(0, j - w + 1):j + w + 1] = np.nan
    return c


def _contiguous_runs(cols: np.ndarray) -> list[np.ndarray]:
    """Split sorted azimuth columns into maximal consecutive runs."""
    if cols.size == 0:
        return []
    breaks = np.nonzero(np.diff(cols) > 1)[0]
    return np.split(cols, breaks + 1)


def extract_features(seg: SegmentedScan, n_azimuth: int,
                     config: FeatureConfig = FeatureConfig(),
                     timestamp: float = 0.0) -> FeatureSet:
    """Classify wall points into corner/surface features, per ring and
    azimuth sector, with per-sector caps and corner non-max suppression."""
    pts_list, kind_list, ring_list, az_list, c_list = [], [], [], [], []
    sector_size = n_azimuth / config.n_sectors
    for ring in np.unique(seg.wall_rings):
        sel = seg.wall_rings == ring
        cols = seg.wall_azimuth_idx[sel]
        order = np.argsort(cols)
        cols = cols[order]
        pts = seg.wall_points[sel][order]
        rr = seg.wall_ranges[sel][order]
        for run in _contiguous_runs(cols):
            if run.size < 2 * config.window + 1:
                continue
            i0 = np.searchsorted(cols, run[0])
            sl = slice(i0, i0 + run.size)
            c = compute_smoothness(pts[sl], rr[sl], config.window,
                                   config.range_jump_m)
            valid = np.isfinite(c)
            sectors = (run / sector_size).astype(int)
            for s in np.unique(sectors):
                in_s = valid & (sectors == s)
                idx = np.nonzero(in_s)[0]
                if idx.size == 0:
                    continue
                # Corners: strongest curvature first, suppression window.
                cand = idx[c[idx] > config.corner_threshold]
                cand = cand[np.argsort(c[cand])[::-1]]
                taken: list[int] = []
                for i in cand:
                    if len(taken) >= config.corners_per_sector:
                        break
                    if all(abs(run[i] - run[t]) >= config.corner_min_separation
                           for t in taken):
                        taken.append(int(i))
                surf = idx[c[idx] < config.surface_threshold]
                if surf.size > config.surfaces_per_sector:
                    pick = np.linspace(0, surf.size - 1,
                                       config.surfaces_per_sector).astype(int)
                    surf = surf[pick]
                for i in taken:
                    pts_list.append(pts[sl][i])
                    kind_list.append(KIND_CORNER)
                    ring_list.append(ring)
                    az_list.append(run[i])
                    c_list.append(c[i])
                for i in surf:
                    pts_list.append(pts[sl][i])
                    kind_list.append(KIND_SURFACE)
                    ring_list.append(ring)
                    az_list.append(run[i])
                    c_list.append(c[i])
    if not pts_list:
        return FeatureSet(np.empty((0, 3)), np.empty(0, np.uint8),
                          np.empty(0, np.int32), np.empty(0, np.int32),
                          np.empty(0, np.int32), timestamp)
    return FeatureSet(np.asarray(pts_list), np.asarray(kind_list, np.uint8),
                      np.full(len(pts_list), UNCLASSIFIED, np.int32),
                      np.asarray(ring_list, np.int32),
                      np.asarray(az_list, np.int32), timestamp,
                      np.asarray(c_list))


def project_features(features: FeatureSet, state: VerticalState,
                     config: FeatureConfig = FeatureConfig()) -> FeatureSet:
    """Roll/pitch-compensate 3D features and drop z; collapse duplicates
    closer than the merge grid (corner kind wins, positions averaged)."""
    if len(features) == 0:
        return FeatureSet(np.empty((0, 2)), features.kind, features.group,
                          features.ring, features.azimuth_idx, features.timestamp)
    R = rot_y(state.pitch) @ rot_x(state.roll)
    xy = (features.xy @ R.T)[:, :2]
    eps = config.merge_epsilon_m
    cells = np.round(xy / eps).astype(np.int64)
    # Merge by grid cell: centroid position, corner kind dominant.
    _, inverse, counts = np.unique(cells, axis=0, return_inverse=True,
                                   return_counts=True)
    k = counts.shape[0]
    mx = np.zeros(k)
    my = np.zeros(k)
    np.add.at(mx, inverse, xy[:, 0])
    np.add.at(my, inverse, xy[:, 1])
    kind = np.zeros(k, np.uint8)
    np.maximum.at(kind, inverse, features.kind)
    ring = np.full(k, -1, np.int32)
    ring[inverse] = features.ring
    az = np.zeros(k, np.int32)
    az[inverse] = features.azimuth_idx
    merged = np.column_stack((mx / counts, my / counts))
    return FeatureSet(merged, kind, np.full(k, UNCLASSIFIED, np.int32),
                      ring, az, features.timestamp)


def group_surface_points(features: FeatureSet,
                         config: FeatureConfig = FeatureConfig()) -> FeatureSet:
    """Label azimuth runs of surface points between consecutive corners
    with a shared group id when PCA says they are collinear."""
    if len(features) == 0:
        return features
    order = np.argsort(features.azimuth_idx, kind="stable")
    group = features.group.copy()
    # Runs of surface points delimited by corners in azimuth order.
    runs: list[list[int]] = []
    current: list[int] = []
    for pos in order:
        if features.kind[pos] == KIND_CORNER:
            if current:
                runs.append(current)
                current = []
        else:
            current.append(int(pos))
    if current:
        runs.append(current)
    next_group = 0
    for run in runs:
        if len(run) < config.min_group_run:
            continue
        pts = features.xy[run]
        centered = pts - pts.mean(axis=0)
        cov = centered.T @ centered / len(run)
        evals = np.linalg.eigvalsh(cov)
        if evals[1] <= 0.0:
            ratio = 0.0
        else:
            ratio = max(evals[0], 0.0) / evals[1]
        if ratio < config.pca_ratio:
            group[run] = next_group
            next_group += 1
    return FeatureSet(features.xy, features.kind, group, features.ring,
                      features.azimuth_idx, features.timestamp)


def features_to_csv(features: FeatureSet) -> str:
    lines = ["x,y,kind,group,ring"]
    for i in range(len(features)):
        x, y = features.xy[i][:2]
        lines.append(f"{x:.6f},{y:.6f},{int(features.kind[i])},"
                     f"{int(features.group[i])},{int(features.ring[i])}")
    return "\n".join(lines) + "\n"
