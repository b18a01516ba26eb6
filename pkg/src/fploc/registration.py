"""Two-stage scan-to-plan registration.

Stage one aligns a single frame's 2D features to the floor plan with a
damped Gauss-Newton solver over (t_x, t_y, yaw), using the nearest-field
index for correspondences. Stage two jointly refines a sliding window of
keyframes with velocity-smoothness regularizers. The tracking loop wires
both stages together with segmentation and feature extraction.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kernels
from .annf import Annf
from .features import (FeatureConfig, FeatureSet, UNCLASSIFIED,
                       extract_features, group_surface_points,
                       project_features)
from .geometry import FloorPlan
from .segmentation import (DegenerateFitError, SegmentationConfig,
                           VerticalState, segment_scan)
from .simulate import LidarScan, Pose6
from .transforms import wrap_angle


@dataclass(frozen=True)
class PlanarPose:
    x: float
    y: float
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def transform(self, points: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        out = np.empty_like(points)
        out[:, 0] = c * points[:, 0] - s * points[:, 1] + self.x
        out[:, 1] = s * points[:, 0] + c * points[:, 1] + self.y
        return out


@dataclass(frozen=True)
class Velocity:
    v_x: float
    v_y: float
    omega: float


@dataclass(frozen=True)
class RegistrationConfig:
    tau_key_m: float = 0.1
    alpha: float = 1.1
    beta: float = 0.9
    window_w: int = 10
    huber_reg_m: float = 0.15
    min_features: int = 30
    max_iterations: int = 30
    convergence_tol: float = 1e-6
    window_iterations: int = 10
    max_consecutive_failures: int = 5
    min_group_votes: int = 3


@dataclass
class Keyframe:
    timestamp: float
    features: FeatureSet
    pose: PlanarPose
    vertical_state: VerticalState
    objective_value: float = 0.0
    frame_index: int = -1


@dataclass
class RegistrationResult:
    pose: PlanarPose
    objective: float
    iterations: int
    n_points: int
    n_skipped: int
    converged: bool


class TrackingLostError(RuntimeError):
    def __init__(self, message: str, last_pose, trajectory):
        super().__init__(message)
        self.last_pose = last_pose
        self.trajectory = trajectory


def _majority_vote(ids: np.ndarray, valid: np.ndarray, groups: np.ndarray,
                   min_votes: int) -> np.ndarray:
    """Force every member of a surface group onto the group's most common
    element (ties to the smaller element id); small groups stay individual."""
    out = ids.copy()
    for g in np.unique(groups):
        if g == UNCLASSIFIED:
            continue
        sel = (groups == g) & valid
        if int(sel.sum()) < min_votes:
            continue
        votes, counts = np.unique(ids[sel], return_counts=True)
        out[sel] = votes[np.argmax(counts)]  # np.unique sorts: ties → smaller id
    return out


def _correspondences(px: np.ndarray, py: np.ndarray, features: FeatureSet,
                     annf: Annf, plan: FloorPlan, min_votes: int):
    """Element id per transformed point: nearer of the field's two stored
    candidates under exact geometry, then group-consistent by majority."""
    i0, i1, ok = annf.lookup_batch(px, py)
    valid = ok == 1
    ids = np.full(px.shape[0], -1, np.int32)
    if valid.any():
        vx, vy = px[valid], py[valid]
        d0, _, _ = kernels.point_residuals(vx, vy, i0[valid], plan.kinds,
                                           plan.params)
        d1, _, _ = kernels.point_residuals(vx, vy, i1[valid], plan.kinds,
                                           plan.params)
        ids[valid] = np.where(d1 < d0, i1[valid], i0[valid])
    ids = _majority_vote(ids, valid, features.group, min_votes)
    return ids, valid


def residual(point: np.ndarray, pose: PlanarPose, annf: Annf,
             plan: FloorPlan) -> tuple[float, np.ndarray]:
    """Distance from one transformed feature point to its matched plan
    element, with the analytic derivative w.r.t. (t_x, t_y, yaw)."""
    pts = np.asarray(point, dtype=np.float64).reshape(1, 2)
    r, J, _, skipped = _residual_block(pose, pts, np.array([UNCLASSIFIED]),
                                       annf, plan, min_votes=3)
    if skipped:
        raise ValueError("point outside the field grid")
    return float(r[0]), J[0]


def _residual_block(pose: PlanarPose, xy: np.ndarray, groups: np.ndarray,
                    annf: Annf, plan: FloorPlan, min_votes: int):
    """Residuals and 3-column jacobian for one frame's feature set.

    Returns (r, J, valid_mask, n_skipped); rows exist only for in-grid
    points. Jacobian columns follow (t_x, t_y, yaw).
    """
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    x, y = xy[:, 0], xy[:, 1]
    px = c * x - s * y + pose.x
    py = s * x + c * y + pose.y
    fset = FeatureSet(xy, np.zeros(len(xy), np.uint8), groups,
                      np.zeros(len(xy), np.int32), np.zeros(len(xy), np.int32))
    ids, valid = _correspondences(px, py, fset, annf, plan, min_votes)
    n_skipped = int((~valid).sum())
    if not valid.any():
        return np.empty(0), np.empty((0, 3)), valid, n_skipped
    d, ux, uy = kernels.point_residuals(px[valid], py[valid], ids[valid],
                                        plan.kinds, plan.params)
    # dp'/dyaw = (-s*x - c*y, c*x - s*y)
    dthx = -s * x[valid] - c * y[valid]
    dthy = c * x[valid] - s * y[valid]
    J = np.column_stack((ux, uy, ux * dthx + uy * dthy))
    return d, J, valid, n_skipped


def _huber_weights(r: np.ndarray, delta: float) -> np.ndarray:
    w = np.ones_like(r)
    big = np.abs(r) > delta
    w[big] = delta / np.abs(r[big])
    return w


def _huber_objective(r: np.ndarray, delta: float) -> float:
    a = np.abs(r)
    quad = a <= delta
    return float(np.sum(0.5 * r[quad] ** 2)
                 + np.sum(delta * (a[~quad] - 0.5 * delta)))


def single_frame_register(features: FeatureSet, annf: Annf, plan: FloorPlan,
                          init: PlanarPose,
                          config: RegistrationConfig = RegistrationConfig()
                          ) -> RegistrationResult:
    """Damped Gauss-Newton alignment of one frame to the plan."""
    n = len(features)
    if n < config.min_features:
        return RegistrationResult(init, math.inf, 0, n, 0, False)
    pose = init
    delta = config.huber_reg_m
    lam = 1e-6
    objective = math.inf
    n_skipped = 0
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        r, J, valid, n_skipped = _residual_block(
            pose, features.xy, features.group, annf, plan,
            config.min_group_votes)
        if r.shape[0] < config.min_features:
            return RegistrationResult(init, math.inf, iterations, n,
                                      n_skipped, False)
        w = _huber_weights(r, delta)
        objective = _huber_objective(r, delta)
        H = (J * w[:, None]).T @ J
        g = (J * w[:, None]).T @ r
        step = None
        for _ in range(8):  # Levenberg damping: retry until objective drops
            try:
                cand = np.linalg.solve(H + lam * np.eye(3), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = PlanarPose(pose.x + cand[0], pose.y + cand[1],
                               pose.yaw + cand[2])
            rt, _, _, _ = _residual_block(trial, features.xy, features.group,
                                          annf, plan, config.min_group_votes)
            if rt.shape[0] and _huber_objective(rt, delta) <= objective:
                step = cand
                pose = trial
                lam = max(lam * 0.3, 1e-9)
                break
            lam *= 10.0
        if step is None:
            break
        if float(np.linalg.norm(step)) < config.convergence_tol:
            return RegistrationResult(pose, objective, iterations, n,
                                      n_skipped, True)
    return RegistrationResult(pose, objective, iterations, n, n_skipped,
                              objective < math.inf)


def is_keyframe(current_xyz: tuple[float, float, float],
                last_key_xyz: tuple[float, float, float],
                tau_key_m: float = 0.1) -> bool:
    dx = current_xyz[0] - last_key_xyz[0]
    dy = current_xyz[1] - last_key_xyz[1]
    dz = current_xyz[2] - last_key_xyz[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz) >= tau_key_m


def velocity(earlier: Keyframe, later: Keyframe) -> Velocity:
    dt = later.timestamp - earlier.timestamp
    if dt <= 0.0:
        raise ValueError("keyframe timestamps must be strictly increasing")
    return Velocity(
        (later.pose.x - earlier.pose.x) / dt,
        (later.pose.y - earlier.pose.y) / dt,
        wrap_angle(later.pose.yaw - earlier.pose.yaw) / dt)


def windowed_optimize(keyframes: list[Keyframe], annf: Annf, plan: FloorPlan,
                      config: RegistrationConfig = RegistrationConfig()
                      ) -> list[PlanarPose]:
    """Joint refinement of all window poses: per-frame plan residuals plus
    velocity-difference smoothness rows weighted sqrt(alpha)/sqrt(beta)."""
    n = len(keyframes)
    if n < 2:
        raise ValueError("window needs at least two keyframes")
    params = np.array([[k.pose.x, k.pose.y, k.pose.yaw] for k in keyframes])
    times = np.array([k.timestamp for k in keyframes])
    delta = config.huber_reg_m
    sa, sb = math.sqrt(config.alpha), math.sqrt(config.beta)
    lam = 1e-6

    def frame_terms(p, corrs):
        """Per-frame point residuals/derivatives under fixed matches."""
        out = []
        for i, kf in enumerate(keyframes):
            ids, valid = corrs[i]
            if not valid.any():
                out.append(None)
                continue
            tx, ty, yaw = p[i]
            c, s = math.cos(yaw), math.sin(yaw)
            x = kf.features.xy[valid, 0]
            y = kf.features.xy[valid, 1]
            px = c * x - s * y + tx
            py = s * x + c * y + ty
            d, ux, uy = kernels.point_residuals(px, py, ids[valid],
                                                plan.kinds, plan.params)
            Jb = np.column_stack((ux, uy,
                                  ux * (-s * x - c * y) + uy * (c * x - s * y)))
            out.append((d, Jb))
        return out

    def reg_terms(p):
        """(residual, (index, coeff) triple) per velocity-difference row."""
        rows = []
        for m in range(n - 2):
            dt0 = times[m + 1] - times[m]
            dt1 = times[m + 2] - times[m + 1]
            for axis, scale in ((0, sa), (1, sa), (2, sb)):
                if axis == 2:
                    d0 = wrap_angle(p[m + 1, 2] - p[m, 2]) / dt0
                    d1 = wrap_angle(p[m + 2, 2] - p[m + 1, 2]) / dt1
                else:
                    d0 = (p[m + 1, axis] - p[m, axis]) / dt0
                    d1 = (p[m + 2, axis] - p[m + 1, axis]) / dt1
                rows.append((scale * (d1 - d0),
                             (3 * m + axis, scale / dt0),
                             (3 * (m + 1) + axis, -scale * (1 / dt0 + 1 / dt1)),
                             (3 * (m + 2) + axis, scale / dt1)))
        return rows

    def objective_of(p, corrs):
        obj = 0.0
        for term in frame_terms(p, corrs):
            if term is not None:
                obj += _huber_objective(term[0], delta)
        for row in reg_terms(p):
            obj += 0.5 * row[0] ** 2
        return obj

    step = np.zeros(3 * n)
    for _ in range(config.window_iterations):
        corrs = []
        for i, kf in enumerate(keyframes):
            pose = PlanarPose(*params[i])
            xy_t = pose.transform(kf.features.xy)
            corrs.append(_correspondences(xy_t[:, 0], xy_t[:, 1], kf.features,
                                          annf, plan, config.min_group_votes))
        H = np.zeros((3 * n, 3 * n))
        g = np.zeros(3 * n)
        obj = 0.0
        for i, term in enumerate(frame_terms(params, corrs)):
            if term is None:
                continue
            r, Jb = term
            w = _huber_weights(r, delta)
            obj += _huber_objective(r, delta)
            sl = slice(3 * i, 3 * i + 3)
            H[sl, sl] += (Jb * w[:, None]).T @ Jb
            g[sl] += (Jb * w[:, None]).T @ r
        for row in reg_terms(params):
            rv = row[0]
            obj += 0.5 * rv * rv
            for idx_a, ca in row[1:]:
                g[idx_a] += ca * rv
                for idx_b, cb in row[1:]:
                    H[idx_a, idx_b] += ca * cb
        accepted = False
        for _ in range(8):
            try:
                step = np.linalg.solve(H + lam * np.eye(3 * n), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = params + step.reshape(n, 3)
            trial[:, 2] = (trial[:, 2] + math.pi) % (2 * math.pi) - math.pi
            if objective_of(trial, corrs) <= obj:
                params = trial
                lam = max(lam * 0.3, 1e-9)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        if float(np.linalg.norm(step)) < config.convergence_tol:
            break
    return [PlanarPose(*row) for row in params]


@dataclass
class TrackResult:
    trajectory: list[tuple[float, Pose6]]
    keyframe_indices: list[int]
    timings_ms: np.ndarray          # (n_frames, 4): seg, features, register, window
    failures: int


def track(scans: list[LidarScan], annf: Annf, plan: FloorPlan,
          init_pose: Pose6,
          config: RegistrationConfig = RegistrationConfig(),
          seg_config: SegmentationConfig = SegmentationConfig(),
          feat_config: FeatureConfig = FeatureConfig()) -> TrackResult:
    """Full tracking loop. Non-keyframes emit their single-frame pose;
    a keyframe's pose is committed when it leaves the refinement window."""
    trajectory: list[tuple[float, Pose6]] = []
    timings = np.zeros((len(scans), 4))
    window: deque[Keyframe] = deque()
    keyframe_indices: list[int] = []
    planar = PlanarPose(init_pose.t_x, init_pose.t_y, init_pose.yaw)
    vertical = VerticalState(init_pose.t_z, init_pose.roll, init_pose.pitch,
                             np.zeros(3), absolute=True)
    failures = 0
    total_failures = 0

    def finalize(kf: Keyframe) -> None:
        t, p6 = trajectory[kf.frame_index]
        trajectory[kf.frame_index] = (t, Pose6(
            kf.pose.x, kf.pose.y, p6.t_z, p6.roll, p6.pitch, kf.pose.yaw))

    for idx, scan in enumerate(scans):
        t0 = time.perf_counter()
        try:
            seg = segment_scan(scan, seg_config)
            vertical = seg.vertical_state
        except DegenerateFitError:
            seg = None  # stale vertical state carries over
        t1 = time.perf_counter()
        if seg is not None:
            feats3 = extract_features(seg, scan.azimuths.shape[0], feat_config,
                                      timestamp=scan.timestamp)
            feats = group_surface_points(
                project_features(feats3, vertical, feat_config), feat_config)
        else:
            feats = FeatureSet(np.empty((0, 2)), np.empty(0, np.uint8),
                               np.empty(0, np.int32), np.empty(0, np.int32),
                               np.empty(0, np.int32), scan.timestamp)
        t2 = time.perf_counter()
        result = single_frame_register(feats, annf, plan, planar, config)
        t3 = time.perf_counter()
        if result.converged:
            planar = result.pose
            failures = 0
        else:
            failures += 1
            total_failures += 1
            if failures > config.max_consecutive_failures:
                raise TrackingLostError(
                    f"lost tracking at frame {idx}", planar, trajectory)
        pose6 = Pose6(planar.x, planar.y, vertical.t_z,
                      vertical.roll, vertical.pitch, planar.yaw)
        trajectory.append((scan.timestamp, pose6))
        key = result.converged and (
            not window or is_keyframe(
                (planar.x, planar.y, vertical.t_z),
                (window[-1].pose.x, window[-1].pose.y,
                 window[-1].vertical_state.t_z),
                config.tau_key_m))
        if key:
            window.append(Keyframe(scan.timestamp, feats, planar, vertical,
                                   result.objective, idx))
            keyframe_indices.append(idx)
            if len(window) > config.window_w:
                finalize(window.popleft())
            if len(window) >= 2:
                refined = windowed_optimize(list(window), annf, plan, config)
                for kf, p in zip(window, refined):
                    kf.pose = p
                planar = window[-1].pose
                t, p6 = trajectory[idx]
                trajectory[idx] = (t, Pose6(planar.x, planar.y, p6.t_z,
                                            p6.roll, p6.pitch, planar.yaw))
        t4 = time.perf_counter()
        timings[idx] = ((t1 - t0) * 1e3, (t2 - t1) * 1e3,
                        (t3 - t2) * 1e3, (t4 - t3) * 1e3)
    for kf in window:
        finalize(kf)
    return TrackResult(trajectory, keyframe_indices, timings, total_failures)
