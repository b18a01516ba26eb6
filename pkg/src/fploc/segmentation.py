"""Robust ceiling and ground plane estimation from a ring-structured scan.

The ceiling fit yields gravity direction, roll/pitch, and sensor height;
the ground fit only helps separate wall points and never feeds back into
the vertical state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .simulate import LidarScan
from .transforms import rot_x, rot_y


class DegenerateFitError(RuntimeError):
    """Too few / collinear points for a plane fit."""


@dataclass(frozen=True)
class SegmentationConfig:
    top_rings: int = 4              # K_r: rings used for the initial guess
    top_range_fraction: float = 0.25
    huber_delta_m: float = 0.05
    init_gate_m: float = 0.3        # IRLS only sees points this close to the init plane
    tau_plane_m: float = 0.08       # plane membership threshold
    max_iterations: int = 20
    param_tol: float = 1e-6
    ceiling_z_m: float | None = None


@dataclass(frozen=True)
class PlaneFit:
    """Plane n . p = offset with |n| = 1, n_z > 0."""
    normal: np.ndarray
    offset: float
    inlier_count: int
    rms_residual: float

    @classmethod
    def from_regression(cls, a: float, b: float, c: float,
                        inliers: int = 0, rms: float = 0.0) -> "PlaneFit":
        # z = a x + b y + c  ->  (-a, -b, 1) . p = c, then normalize.
        n = np.array([-a, -b, 1.0])
        s = float(np.linalg.norm(n))
        return cls(n / s, c / s, inliers, rms)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return points @ self.normal - self.offset


@dataclass(frozen=True)
class VerticalState:
    t_z: float
    roll: float
    pitch: float
    gravity: np.ndarray  # unit, sensor frame, pointing down
    absolute: bool = True  # False when ceiling_z was unknown


@dataclass
class SegmentedScan:
    ceiling_points: np.ndarray
    ground_points: np.ndarray
    wall_points: np.ndarray
    wall_rings: np.ndarray          # ring index per wall point
    wall_azimuth_idx: np.ndarray    # azimuth column per wall point
    wall_ranges: np.ndarray
    vertical_state: VerticalState
    usable: bool = True


def _scan_points(scan: LidarScan):
    """Flattened hit points with their ring / azimuth indices."""
    hits = np.isfinite(scan.ranges)
    ring_idx, az_idx = np.nonzero(hits)
    pts = scan.points[ring_idx, az_idx]
    return pts, ring_idx, az_idx, scan.ranges[ring_idx, az_idx]


def _regress_plane(points: np.ndarray, weights: np.ndarray | None = None):
    """Weighted least-squares of z on (x, y); returns (a, b, c)."""
    if points.shape[0] < 3:
        raise DegenerateFitError("need >= 3 points for a plane")
    A = np.column_stack((points[:, 0], points[:, 1], np.ones(points.shape[0])))
    if weights is not None:
        A = A * weights[:, None]
        z = points[:, 2] * weights
    else:
        z = points[:, 2]
    AtA = A.T @ A
    if np.linalg.cond(AtA) > 1e12:
        raise DegenerateFitError("rank-deficient plane regression")
    return tuple(np.linalg.solve(AtA, A.T @ z))


def horizontal_surface_mask(scan: LidarScan, flip: bool = False,
                            radius_step_m: float = 0.06) -> np.ndarray:
    """Boolean (n_rings, n_az) mask of returns compatible with a
    near-horizontal surface above (ceiling) or below (ground, flip=True).

    On a vertical wall the horizontal radius of same-azimuth returns stays
    constant from ring to ring; on a horizontal plane it shrinks fast as
    the elevation steepens. A per-point radius-step test therefore
    separates the two regardless of sensor tilt.
    """
    rho = np.hypot(scan.points[:, :, 0], scan.points[:, :, 1])
    mask = np.zeros(rho.shape, dtype=bool)
    n_rings = rho.shape[0]
    if flip:
        lower = scan.elevations < 0.0
        for r in range(n_rings - 1):
            if not lower[r]:
                continue
            ok = np.isfinite(rho[r]) & np.isfinite(rho[r + 1])
            mask[r] = ok & (rho[r + 1] - rho[r] > radius_step_m)
    else:
        upper = scan.elevations > 0.0
        for r in range(1, n_rings):
            if not upper[r]:
                continue
            ok = np.isfinite(rho[r]) & np.isfinite(rho[r - 1])
            mask[r] = ok & (rho[r - 1] - rho[r] > radius_step_m)
    return mask


def ceiling_init(scan: LidarScan, k_rings: int = 4,
                 top_fraction: float = 0.25, flip: bool = False):
    """Initial plane (a, b, c) for z = a x + b y + c from the top (or,
    flipped, bottom) k_rings rings.

    Per ring, candidates are the returns compatible with a horizontal
    surface; among them the longest ranges (most likely unobstructed
    hits) are kept and regressed. Falls back to plain longest-range
    selection on rings where the compatibility test starves.
    """
    if k_rings < 2:
        raise ValueError("k_rings must be >= 2")
    order = np.argsort(scan.elevations)
    rings = order[:k_rings] if flip else order[-k_rings:]
    compat = horizontal_surface_mask(scan, flip=flip)
    chosen = []
    for ring in rings:
        rr = scan.ranges[ring]
        hit = compat[ring]
        if hit.sum() < 8:
            hit = np.isfinite(rr)
        if not hit.any():
            continue
        n_keep = max(1, int(math.ceil(hit.sum() * top_fraction)))
        idx = np.nonzero(hit)[0]
        keep = idx[np.argsort(rr[idx])[-n_keep:]]
        chosen.append(scan.points[ring, keep])
    if not chosen:
        raise DegenerateFitError("no returns on the selected rings")
    pts = np.vstack(chosen)
    if pts.shape[0] < 3:
        raise DegenerateFitError("fewer than 3 points for the initial plane")
    return _regress_plane(pts)


def robust_plane_fit(points: np.ndarray, init_plane,
                     config: SegmentationConfig = SegmentationConfig()) -> PlaneFit:
    """IRLS with Huber weights around the closed-form regression.

    Residual is the vertical offset z - (a x + b y + c); fine for the
    near-horizontal planes this module targets.
    """
    if points.shape[0] < 3:
        raise DegenerateFitError("need >= 3 points")
    a, b, c = init_plane
    # Keep only points near the initial plane: Huber bounds each outlier's
    # influence but cannot reject a structured majority (walls typically
    # outnumber ceiling returns), so a hard gate around the init comes first.
    r0 = points[:, 2] - (a * points[:, 0] + b * points[:, 1] + c)
    gated = points[np.abs(r0) < config.init_gate_m]
    if gated.shape[0] >= 3:
        points = gated
    delta = config.huber_delta_m
    for _ in range(config.max_iterations):
        r = points[:, 2] - (a * points[:, 0] + b * points[:, 1] + c)
        absr = np.abs(r)
        w = np.where(absr <= delta, 1.0, delta / np.maximum(absr, 1e-12))
        na, nb, nc = _regress_plane(points, np.sqrt(w))
        change = max(abs(na - a), abs(nb - b), abs(nc - c))
        a, b, c = na, nb, nc
        if change < config.param_tol:
            break
    r = points[:, 2] - (a * points[:, 0] + b * points[:, 1] + c)
    inlier = np.abs(r) < 3.0 * delta
    rms = float(np.sqrt(np.mean(r[inlier] ** 2))) if inlier.any() else float("inf")
    return PlaneFit.from_regression(a, b, c, int(inlier.sum()), rms)


def _roll_pitch_from_normal(n: np.ndarray) -> tuple[float, float]:
    """(roll, pitch) such that Ry(pitch) Rx(roll) n = +z."""
    roll = math.atan2(n[1], n[2])
    pitch = math.atan2(-n[0], math.hypot(n[1], n[2]))
    return roll, pitch


def segment_scan(scan: LidarScan,
                 config: SegmentationConfig = SegmentationConfig()) -> SegmentedScan:
    """Fit ceiling (upper-half rings) and ground (flipped), derive the
    vertical state from the ceiling only, and split the returns into
    ceiling / ground / wall sets."""
    pts, ring_idx, az_idx, ranges = _scan_points(scan)
    if pts.shape[0] == 0:
        raise DegenerateFitError("empty scan")

    # Candidate sets: horizontal-surface-compatible returns on the upper
    # (ceiling) and lower (ground) half rings; walls never enter the fits.
    ceil_mask = horizontal_surface_mask(scan)
    ground_mask = horizontal_surface_mask(scan, flip=True)
    ceil_cand = ceil_mask[ring_idx, az_idx]
    ground_cand = ground_mask[ring_idx, az_idx]

    ceil_fit = robust_plane_fit(
        pts[ceil_cand],
        ceiling_init(scan, config.top_rings, config.top_range_fraction),
        config)
    roll, pitch = _roll_pitch_from_normal(ceil_fit.normal)
    gravity = -ceil_fit.normal
    if config.ceiling_z_m is not None:
        t_z = config.ceiling_z_m - ceil_fit.offset
        absolute = True
    else:
        t_z = -ceil_fit.offset  # relative: height below the ceiling, negated
        absolute = False
    state = VerticalState(float(t_z), roll, pitch, gravity, absolute)

    ceil_member = np.abs(ceil_fit.signed_distance(pts)) < config.tau_plane_m
    try:
        ground_fit = robust_plane_fit(
            pts[ground_cand],
            ceiling_init(scan, config.top_rings, config.top_range_fraction, flip=True),
            config)
        ground_member = (np.abs(ground_fit.signed_distance(pts)) < config.tau_plane_m) \
            & ~ceil_member
    except DegenerateFitError:
        ground_member = np.zeros(pts.shape[0], dtype=bool)

    wall = ~ceil_member & ~ground_member
    return SegmentedScan(
        ceiling_points=pts[ceil_member],
        ground_points=pts[ground_member],
        wall_points=pts[wall],
        wall_rings=ring_idx[wall],
        wall_azimuth_idx=az_idx[wall],
        wall_ranges=ranges[wall],
        vertical_state=state,
    )


def gravity_align(points: np.ndarray, state: VerticalState) -> np.ndarray:
    """Rotate sensor-frame points so gravity maps to -z (roll/pitch
    compensation)."""
    R = rot_y(state.pitch) @ rot_x(state.roll)
    return points @ R.T
