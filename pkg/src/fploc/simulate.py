"""Synthetic LiDAR scans by analytic ray casting against a floor plan
extruded between ground and ceiling planes, plus optional clutter.
Serves as the ground-truth harness for the localization pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import FloorPlan
from .transforms import rpy_matrix, wrap_angle


@dataclass(frozen=True)
class SensorModel:
    elevation_angles: tuple[float, ...]  # rad, strictly ascending
    azimuth_steps: int = 1024
    max_range: float = 100.0
    range_noise_sigma: float = 0.0
    scan_rate: float = 10.0

    def __post_init__(self):
        elev = tuple(self.elevation_angles)
        if len(elev) < 2 or any(b <= a for a, b in zip(elev, elev[1:])):
            raise ValueError("elevation_angles must be >= 2 strictly ascending values")
        if self.max_range <= 0 or self.range_noise_sigma < 0:
            raise ValueError("bad sensor parameters")
        object.__setattr__(self, "elevation_angles", elev)

    @property
    def n_rings(self) -> int:
        return len(self.elevation_angles)


def spinning_sensor(n_rings: int = 64, elevation_span_deg: float = 16.6,
                    azimuth_steps: int = 1024, max_range: float = 100.0,
                    range_noise_sigma: float = 0.0,
                    scan_rate: float = 10.0) -> SensorModel:
    """64-ring spinning LiDAR profile (~+-16.6 deg elevation, 10 Hz)."""
    span = math.radians(elevation_span_deg)
    elev = tuple(np.linspace(-span, span, n_rings))
    return SensorModel(elev, azimuth_steps, max_range, range_noise_sigma, scan_rate)


_EMPTY_BOXES = np.zeros((0, 6))
_EMPTY_CYLS = np.zeros((0, 5))


@dataclass(frozen=True)
class Scene:
    plan: FloorPlan
    ceiling_z: float = 3.0
    ground_z: float = 0.0
    clutter_boxes: np.ndarray = field(default_factory=lambda: _EMPTY_BOXES)
    clutter_cylinders: np.ndarray = field(default_factory=lambda: _EMPTY_CYLS)

    def __post_init__(self):
        if self.ceiling_z <= self.ground_z:
            raise ValueError("ceiling must be above ground")
        object.__setattr__(self, "clutter_boxes",
                           np.asarray(self.clutter_boxes, dtype=np.float64).reshape(-1, 6))
        object.__setattr__(self, "clutter_cylinders",
                           np.asarray(self.clutter_cylinders, dtype=np.float64).reshape(-1, 5))


@dataclass(frozen=True)
class Pose6:
    t_x: float = 0.0
    t_y: float = 0.0
    t_z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        for name in ("roll", "pitch", "yaw"):
            object.__setattr__(self, name, wrap_angle(getattr(self, name)))

    def rotation(self) -> np.ndarray:
        return rpy_matrix(self.roll, self.pitch, self.yaw)

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.t_x, self.t_y, self.t_z])


@dataclass
class LidarScan:
    """Ring-structured scan in the sensor frame.

    ranges[r, a] is NaN on a miss; points[r, a] is NaN-filled then too.
    """

    timestamp: float
    elevations: np.ndarray        # (n_rings,)
    azimuths: np.ndarray          # (n_az,)
    ranges: np.ndarray            # (n_rings, n_az)
    points: np.ndarray            # (n_rings, n_az, 3), sensor frame

    @property
    def n_rings(self) -> int:
        return self.elevations.shape[0]


def ray_directions(sensor: SensorModel) -> np.ndarray:
    """Unit ray directions in the sensor frame, (n_rings, n_az, 3)."""
    elev = np.asarray(sensor.elevation_angles)
    az = np.arange(sensor.azimuth_steps) * (2.0 * math.pi / sensor.azimuth_steps)
    ce, se = np.cos(elev)[:, None], np.sin(elev)[:, None]
    ca, sa = np.cos(az)[None, :], np.sin(az)[None, :]
    dirs = np.empty((elev.size, az.size, 3))
    dirs[:, :, 0] = ce * ca
    dirs[:, :, 1] = ce * sa
    dirs[:, :, 2] = np.broadcast_to(se, dirs.shape[:2])
    return dirs


def simulate_scan(scene: Scene, pose: Pose6, sensor: SensorModel,
                  seed: int = 0, timestamp: float = 0.0) -> LidarScan:
    if not (scene.ground_z < pose.t_z < scene.ceiling_z):
        raise ValueError("sensor height must lie between ground and ceiling")
    dirs_sensor = ray_directions(sensor)
    shape = dirs_sensor.shape[:2]
    flat = dirs_sensor.reshape(-1, 3)
    dirs_world = np.ascontiguousarray(flat @ pose.rotation().T)
    r = kernels.raycast(pose.t_x, pose.t_y, pose.t_z, dirs_world,
                        scene.plan.kinds, scene.plan.params,
                        scene.ground_z, scene.ceiling_z,
                        scene.clutter_boxes, scene.clutter_cylinders,
                        sensor.max_range)
    hits = np.isfinite(r)
    if sensor.range_noise_sigma > 0.0:
        rng = np.random.default_rng(seed)
        r = r + np.where(hits, rng.normal(0.0, sensor.range_noise_sigma, r.shape), 0.0)
    ranges = np.where(hits, r, np.nan).reshape(shape)
    points = flat.reshape(shape + (3,)) * ranges[:, :, None]
    az = np.arange(sensor.azimuth_steps) * (2.0 * math.pi / sensor.azimuth_steps)
    return LidarScan(timestamp, np.asarray(sensor.elevation_angles), az, ranges, points)


@dataclass(frozen=True)
class MotionPerturbation:
    """Sinusoidal roll/pitch/height wobble layered on a planar path."""
    roll_amp: float = 0.0
    pitch_amp: float = 0.0
    z_amp: float = 0.0
    frequency_hz: float = 0.25


def plan_path(waypoints, speed: float, scan_rate: float,
              base_z: float, perturb: MotionPerturbation | None = None,
              laps: int = 1) -> list[Pose6]:
    """Constant-speed piecewise-linear path through (x, y, yaw) waypoints,
    sampled at scan_rate. Yaw interpolates along the shortest wrap."""
    if speed <= 0.0:
        raise ValueError("speed must be positive")
    wps = list(waypoints) * laps if laps > 1 else list(waypoints)
    xs = np.array([w[0] for w in wps])
    ys = np.array([w[1] for w in wps])
    yaws = np.array([w[2] for w in wps])
    seg_len = np.hypot(np.diff(xs), np.diff(ys))
    cum = np.concatenate(([0.0], np.cumsum(seg_len)))
    total = cum[-1]
    if total == 0.0:
        n = max(2, int(round(scan_rate)))  # static: hold for one second
        times = np.arange(n) / scan_rate
        ss = np.zeros(n)
    else:
        duration = total / speed
        times = np.arange(0.0, duration + 0.5 / scan_rate, 1.0 / scan_rate)
        ss = np.minimum(times * speed, total)
    poses = []
    for t, s in zip(times, ss):
        i = int(np.searchsorted(cum, s, side="right")) - 1
        i = min(i, len(seg_len) - 1) if len(seg_len) else 0
        if len(seg_len) == 0 or seg_len[i] == 0.0:
            x, y, yaw = xs[i], ys[i], yaws[i]
        else:
            f = (s - cum[i]) / seg_len[i]
            x = xs[i] + f * (xs[i + 1] - xs[i])
            y = ys[i] + f * (ys[i + 1] - ys[i])
            dyaw = wrap_angle(yaws[i + 1] - yaws[i])
            yaw = yaws[i] + f * dyaw
        roll = pitch = 0.0
        z = base_z
        if perturb is not None:
            phase = 2.0 * math.pi * perturb.frequency_hz * t
            roll = perturb.roll_amp * math.sin(phase)
            pitch = perturb.pitch_amp * math.sin(phase * 1.3 + 1.0)
            z = base_z + perturb.z_amp * math.sin(phase * 0.7 + 2.0)
        poses.append(Pose6(float(x), float(y), float(z), roll, pitch, float(yaw)))
    return poses


def simulate_trajectory(scene: Scene, waypoints, speed: float,
                        sensor: SensorModel, base_z: float = 1.5,
                        perturb: MotionPerturbation | None = None,
                        seed: int = 0, laps: int = 1):
    """Ground-truth poses and scans along a waypoint path.

    Returns list of (timestamp, Pose6, LidarScan)."""
    poses = plan_path(waypoints, speed, sensor.scan_rate, base_z, perturb, laps)
    out = []
    for i, pose in enumerate(poses):
        t = i / sensor.scan_rate
        out.append((t, pose, simulate_scan(scene, pose, sensor, seed=seed + i,
                                           timestamp=t)))
    return out


def scan_to_csv(scan: LidarScan) -> str:
    """Per-scan CSV: ring,azimuth_rad,range_m,x,y,z (NaN range on miss)."""
    lines = ["ring,azimuth_rad,range_m,x,y,z"]
    for ring in range(scan.n_rings):
        for a, az in enumerate(scan.azimuths):
            rr = scan.ranges[ring, a]
            if np.isnan(rr):
                lines.append(f"{ring},{az:.9f},NaN,NaN,NaN,NaN")
            else:
                x, y, z = scan.points[ring, a]
                lines.append(f"{ring},{az:.9f},{rr:.9f},{x:.9f},{y:.9f},{z:.9f}")
    return "\n".join(lines) + "\n"


def scan_from_csv(text: str, elevations=None, timestamp: float = 0.0) -> LidarScan:
    rows = [ln.split(",") for ln in text.strip().splitlines()[1:]]
    rings = np.array([int(r[0]) for r in rows])
    az = np.array([float(r[1]) for r in rows])
    rr = np.array([float(r[2]) for r in rows])
    xyz = np.array([[float(v) for v in r[3:6]] for r in rows])
    n_rings = rings.max() + 1
    n_az = int((rings == 0).sum())
    azimuths = az[:n_az]
    ranges = rr.reshape(n_rings, n_az)
    points = xyz.reshape(n_rings, n_az, 3)
    if elevations is None:
        # Recover ring elevations from any hit on each ring.
        elevations = np.empty(n_rings)
        for ring in range(n_rings):
            hit = np.isfinite(ranges[ring])
            if hit.any():
                k = int(np.argmax(hit))
                elevations[ring] = math.asin(points[ring, k, 2] / ranges[ring, k])
            else:
                elevations[ring] = np.nan
    return LidarScan(timestamp, np.asarray(elevations), azimuths, ranges, points)
