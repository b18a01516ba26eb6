"""Trajectory error metrics (absolute and relative) and trajectory I/O.

Trajectories are text files, one sample per line:
``timestamp tx ty tz qx qy qz qw`` with the quaternion built from
roll/pitch/yaw in the z-y-x (yaw over pitch over roll) convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .simulate import Pose6
from .transforms import quat_to_matrix, rpy_to_quat


@dataclass
class Trajectory:
    timestamps: np.ndarray      # (n,)
    positions: np.ndarray       # (n, 3)
    quaternions: np.ndarray     # (n, 4) as (qx, qy, qz, qw)

    def __post_init__(self):
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    @classmethod
    def from_poses(cls, samples: list[tuple[float, Pose6]]) -> "Trajectory":
        ts = np.array([t for t, _ in samples])
        pos = np.array([[p.t_x, p.t_y, p.t_z] for _, p in samples])
        quat = np.array([rpy_to_quat(p.roll, p.pitch, p.yaw)
                         for _, p in samples])
        return cls(ts, pos, quat)

    def matrix(self, i: int) -> np.ndarray:
        """Homogeneous 4x4 pose of sample i."""
        T = np.eye(4)
        T[:3, :3] = quat_to_matrix(*self.quaternions[i])
        T[:3, 3] = self.positions[i]
        return T


def save_trajectory(path: str, trajectory: Trajectory) -> None:
    with open(path, "w") as fh:
        for i in range(len(trajectory)):
            vals = [trajectory.timestamps[i], *trajectory.positions[i],
                    *trajectory.quaternions[i]]
            fh.write(" ".join(repr(float(v)) for v in vals) + "\n")


def load_trajectory(path: str) -> Trajectory:
    ts, pos, quat = [], [], []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise ValueError(f"{path}:{line_no}: expected 8 fields, "
                                 f"got {len(parts)}")
            vals = [float(p) for p in parts]
            ts.append(vals[0])
            pos.append(vals[1:4])
            quat.append(vals[4:8])
    if not ts:
        raise ValueError(f"{path}: empty trajectory")
    return Trajectory(np.array(ts), np.array(pos), np.array(quat))


def associate(reference: Trajectory, estimate: Trajectory,
              max_dt: float = 0.02) -> list[tuple[int, int]]:
    """Greedy nearest-timestamp pairing; each index used at most once."""
    pairs = []
    used = set()
    for i, t in enumerate(reference.timestamps):
        j = int(np.searchsorted(estimate.timestamps, t))
        best, best_dt = -1, max_dt
        for cand in (j - 1, j):
            if 0 <= cand < len(estimate) and cand not in used:
                dt = abs(float(estimate.timestamps[cand]) - float(t))
                if dt <= best_dt:
                    best, best_dt = cand, dt
        if best >= 0:
            pairs.append((i, best))
            used.add(best)
    return pairs


def ate(reference: Trajectory, estimate: Trajectory,
        max_dt: float = 0.02) -> tuple[float, int]:
    """Mean absolute trajectory error in cm over associated samples.

    No alignment step: both trajectories already live in the map frame.
    """
    pairs = associate(reference, estimate, max_dt)
    if not pairs:
        raise ValueError("no timestamp associations between trajectories")
    ri = np.array([p[0] for p in pairs])
    ei = np.array([p[1] for p in pairs])
    d = reference.positions[ri] - estimate.positions[ei]
    mean_m = float(np.mean(np.linalg.norm(d, axis=1)))
    return 100.0 * mean_m, len(pairs)


def rpe(reference: Trajectory, estimate: Trajectory, delta: int = 1,
        max_dt: float = 0.02, rotational: bool = False) -> tuple[float, int]:
    """Mean relative pose error over pairs (i, i + delta).

    Translational error in cm by default; with ``rotational`` the result is
    the mean rotation angle in degrees.
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    pairs = associate(reference, estimate, max_dt)
    errs = []
    for k in range(len(pairs) - delta):
        i0, j0 = pairs[k]
        i1, j1 = pairs[k + delta]
        Eref = np.linalg.inv(reference.matrix(i0)) @ reference.matrix(i1)
        Eest = np.linalg.inv(estimate.matrix(j0)) @ estimate.matrix(j1)
        E = np.linalg.inv(Eref) @ Eest
        if rotational:
            tr = np.clip((np.trace(E[:3, :3]) - 1.0) / 2.0, -1.0, 1.0)
            errs.append(math.degrees(math.acos(tr)))
        else:
            errs.append(float(np.linalg.norm(E[:3, 3])))
    if not errs:
        raise ValueError("not enough associated samples for the given delta")
    mean = float(np.mean(errs))
    return (mean if rotational else 100.0 * mean), len(errs)


def metrics_report(reference: Trajectory, estimate: Trajectory,
                   max_dt: float = 0.02) -> str:
    """CSV summary: metric,value_cm,pairs."""
    lines = ["metric,value_cm,pairs"]
    a, n = ate(reference, estimate, max_dt)
    lines.append(f"ate,{a:.4f},{n}")
    r, n = rpe(reference, estimate, 1, max_dt)
    lines.append(f"rpe,{r:.4f},{n}")
    return "\n".join(lines) + "\n"
