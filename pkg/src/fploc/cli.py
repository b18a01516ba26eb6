"""Command-line front end: build/validate the nearest-field index, generate
simulations, run localization, evaluate trajectories, and plot results.

Exit codes: 0 success, 1 domain failure (tracking lost, degenerate fit),
2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np
import yaml

from .annf import (DEFAULT_MAX_DEPTH, DEFAULT_ROOT_LENGTH, AnnfError,
                   ValidationReport, build_annf, load_annf, save_annf,
                   validate_annf)
from .features import FeatureConfig
from .geometry import FloorPlanError, parse_floor_plan
from .metrics import (Trajectory, load_trajectory, metrics_report,
                      save_trajectory)
from .registration import (RegistrationConfig, TrackingLostError, track)
from .segmentation import DegenerateFitError, SegmentationConfig
from .simulate import (MotionPerturbation, Pose6, Scene, SensorModel,
                       scan_from_csv, scan_to_csv, simulate_trajectory)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return int(os.environ.get("FPLOC_SEED", "0"))


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc


def _load_plan(path: str):
    try:
        return parse_floor_plan(_read(path))
    except FloorPlanError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _load_yaml(path: str, allowed: set[str]) -> dict:
    try:
        data = yaml.safe_load(_read(path))
    except yaml.YAMLError as exc:
        raise CliError(f"{path}: invalid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise CliError(f"{path}: top-level mapping expected")
    unknown = set(data) - allowed
    if unknown:
        raise CliError(f"{path}: unknown config keys: {sorted(unknown)}")
    return data


def cmd_build_annf(args) -> int:
    plan = _load_plan(args.plan)
    t0 = time.perf_counter()
    annf = build_annf(plan, args.root_length, args.max_depth)
    dt = time.perf_counter() - t0
    data = save_annf(annf)
    try:
        with open(args.out, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}") from exc
    n_nodes = annf.cx.shape[0]
    n_leaves = int((annf.first_child < 0).sum())
    print(f"nodes={n_nodes} leaves={n_leaves} bytes={len(data)} "
          f"build_s={dt:.3f}")
    return EXIT_OK


def cmd_validate_annf(args) -> int:
    if args.samples < 1:
        raise CliError("--samples must be >= 1")
    plan = _load_plan(args.plan)
    seed = _seed(args)
    lines = [ValidationReport.CSV_HEADER]
    if args.sweep:
        for depth in range(3, 9):
            annf = build_annf(plan, args.root_length, depth)
            rep = validate_annf(annf, plan, args.samples, seed)
            lines.append(rep.csv_row())
    else:
        if args.annf:
            annf = load_annf(_read_bytes(args.annf))
        else:
            annf = build_annf(plan, args.root_length, args.max_depth)
        rep = validate_annf(annf, plan, args.samples, seed)
        lines.append(rep.csv_row())
    text = "\n".join(lines) + "\n"
    _write_text(args.out, text)
    return EXIT_OK


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from exc


_SCENE_KEYS = {"plan", "ceiling_z", "ground_z", "waypoints", "speed",
               "laps", "base_z", "n_rings", "elevation_span_deg",
               "azimuth_steps", "max_range", "range_noise_sigma",
               "scan_rate", "roll_amp_deg", "pitch_amp_deg", "z_amp",
               "seed"}


def cmd_simulate(args) -> int:
    cfg = _load_yaml(args.config, _SCENE_KEYS)
    for key in ("plan", "waypoints", "speed"):
        if key not in cfg:
            raise CliError(f"{args.config}: missing required key '{key}'")
    plan_path = os.path.join(os.path.dirname(args.config), cfg["plan"]) \
        if not os.path.isabs(cfg["plan"]) else cfg["plan"]
    plan = _load_plan(plan_path)
    scene = Scene(plan, ceiling_z=cfg.get("ceiling_z", 3.0),
                  ground_z=cfg.get("ground_z", 0.0))
    span = cfg.get("elevation_span_deg", 16.6)
    n_rings = cfg.get("n_rings", 64)
    elev = tuple(np.linspace(-math.radians(span), math.radians(span), n_rings))
    sensor = SensorModel(elev, cfg.get("azimuth_steps", 1024),
                         cfg.get("max_range", 100.0),
                         cfg.get("range_noise_sigma", 0.0),
                         cfg.get("scan_rate", 10.0))
    perturb = None
    if any(k in cfg for k in ("roll_amp_deg", "pitch_amp_deg", "z_amp")):
        perturb = MotionPerturbation(
            roll_amp=math.radians(cfg.get("roll_amp_deg", 0.0)),
            pitch_amp=math.radians(cfg.get("pitch_amp_deg", 0.0)),
            z_amp=cfg.get("z_amp", 0.0))
    seed = cfg.get("seed", _seed(args))
    waypoints = [tuple(w) for w in cfg["waypoints"]]
    frames = simulate_trajectory(scene, waypoints, cfg["speed"], sensor,
                                 base_z=cfg.get("base_z", 1.5),
                                 perturb=perturb, seed=seed,
                                 laps=cfg.get("laps", 1))
    os.makedirs(args.out, exist_ok=True)
    samples = []
    for i, (t, pose, scan) in enumerate(frames):
        _write_text(os.path.join(args.out, f"scan_{i:06d}.csv"),
                    scan_to_csv(scan))
        samples.append((t, pose))
    save_trajectory(os.path.join(args.out, "ground_truth.txt"),
                    Trajectory.from_poses(samples))
    manifest = {
        "n_scans": len(frames),
        "scan_rate": float(sensor.scan_rate),
        "elevation_angles": [float(e) for e in sensor.elevation_angles],
        "ceiling_z": float(scene.ceiling_z),
        "ground_z": float(scene.ground_z),
        "plan": os.path.abspath(plan_path),
        "seed": int(seed),
    }
    with open(os.path.join(args.out, "manifest.yaml"), "w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=True)
    print(f"wrote {len(frames)} scans to {args.out}")
    return EXIT_OK


_RUN_KEYS = {"tau_key_m", "alpha", "beta", "window_W", "huber_reg_m",
             "min_features", "tau_plane_m", "huber_delta_m", "top_rings",
             "top_range_fraction", "corner_threshold", "surface_threshold",
             "window", "n_sectors", "seed"}


def _run_configs(path: str | None):
    cfg = _load_yaml(path, _RUN_KEYS) if path else {}
    reg = RegistrationConfig(
        tau_key_m=cfg.get("tau_key_m", 0.1),
        alpha=cfg.get("alpha", 1.1),
        beta=cfg.get("beta", 0.9),
        window_w=cfg.get("window_W", 10),
        huber_reg_m=cfg.get("huber_reg_m", 0.15),
        min_features=cfg.get("min_features", 30))
    seg_kwargs = {k: cfg[k] for k in ("tau_plane_m", "huber_delta_m",
                                      "top_rings", "top_range_fraction")
                  if k in cfg}
    feat_kwargs = {k: cfg[k] for k in ("corner_threshold",
                                       "surface_threshold", "window",
                                       "n_sectors") if k in cfg}
    return reg, seg_kwargs, feat_kwargs


def cmd_localize(args) -> int:
    manifest_path = os.path.join(args.scans, "manifest.yaml")
    manifest = _load_yaml(manifest_path,
                          {"n_scans", "scan_rate", "elevation_angles",
                           "ceiling_z", "ground_z", "plan", "seed"})
    n = int(manifest["n_scans"])
    if n == 0:
        raise CliError(f"{args.scans}: no scans")
    elev = np.array(manifest["elevation_angles"])
    scans = []
    for i in range(n):
        path = os.path.join(args.scans, f"scan_{i:06d}.csv")
        scans.append(scan_from_csv(_read(path), elevations=elev,
                                   timestamp=i / manifest["scan_rate"]))
    plan = _load_plan(args.plan)
    annf = load_annf(_read_bytes(args.annf))
    reg, seg_kwargs, feat_kwargs = _run_configs(args.config)
    seg_config = SegmentationConfig(ceiling_z_m=manifest["ceiling_z"],
                                    **seg_kwargs)
    feat_config = FeatureConfig(**feat_kwargs)
    gt = load_trajectory(os.path.join(args.scans, "ground_truth.txt"))
    q = gt.quaternions[0]
    yaw0 = math.atan2(2 * (q[3] * q[2] + q[0] * q[1]),
                      1 - 2 * (q[1] * q[1] + q[2] * q[2]))
    init = Pose6(gt.positions[0][0], gt.positions[0][1], gt.positions[0][2],
                 0.0, 0.0, yaw0)
    try:
        result = track(scans, annf, plan, init, reg, seg_config, feat_config)
    except (TrackingLostError, DegenerateFitError) as exc:
        print(f"localization failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    save_trajectory(args.out, Trajectory.from_poses(result.trajectory))
    if args.timing:
        lines = ["frame,ms_segmentation,ms_features,ms_register,ms_window"]
        for i, row in enumerate(result.timings_ms):
            lines.append(f"{i}," + ",".join(f"{v:.3f}" for v in row))
        _write_text(args.timing, "\n".join(lines) + "\n")
    total_s = result.timings_ms.sum() / 1e3
    print(f"frames={n} keyframes={len(result.keyframe_indices)} "
          f"failures={result.failures} avg_hz={n / max(total_s, 1e-9):.1f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ref = load_trajectory(args.reference)
    est = load_trajectory(args.estimate)
    try:
        report = metrics_report(ref, est, args.max_dt)
    except ValueError as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    _write_text(args.out, report)
    return EXIT_OK


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b"]


def _svg_path_of_element(e, scale, ox, oy) -> str:
    from .geometry import Circle, sample_points
    pts = sample_points(e, 0.05)
    if isinstance(e, Circle):
        pts = np.vstack((pts, pts[:1]))
    coords = [(ox + scale * p[0], oy - scale * p[1]) for p in pts]
    d = "M " + " L ".join(f"{x:.1f} {y:.1f}" for x, y in coords)
    return f'<path d="{d}" fill="none" stroke="#444" stroke-width="1"/>'


def cmd_plot(args) -> int:
    plan = _load_plan(args.plan)
    trajs = [(os.path.basename(p), load_trajectory(p))
             for p in args.trajectories]
    minx, miny, maxx, maxy = plan.bounds
    lo = np.array([minx, miny])
    hi = np.array([maxx, maxy])
    for _, tr in trajs:
        lo = np.minimum(lo, tr.positions[:, :2].min(axis=0))
        hi = np.maximum(hi, tr.positions[:, :2].max(axis=0))
    margin = 0.5
    lo = lo - margin
    hi = hi + margin
    width = 800.0
    scale = width / max(hi[0] - lo[0], 1e-9)
    height = scale * (hi[1] - lo[1])
    ox, oy = -lo[0] * scale, hi[1] * scale
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
             f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
             f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>']
    for e in plan.elements:
        parts.append(_svg_path_of_element(e, scale, ox, oy))
    for k, (name, tr) in enumerate(trajs):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{ox + scale * x:.1f},{oy - scale * y:.1f}"
                       for x, y in tr.positions[:, :2])
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="10" y="{20 * (k + 1)}" fill="{color}" '
                     f'font-size="14">{name}</text>')
    parts.append("</svg>")
    _write_text(args.out, "\n".join(parts) + "\n")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fploc",
                                description="Floor-plan LiDAR localization")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-annf", help="build and serialize the field")
    b.add_argument("plan")
    b.add_argument("out")
    b.add_argument("--root-length", type=float, default=DEFAULT_ROOT_LENGTH)
    b.add_argument("--max-depth", type=int, default=DEFAULT_MAX_DEPTH)
    b.set_defaults(func=cmd_build_annf)

    v = sub.add_parser("validate-annf", help="hit-rate/latency validation")
    v.add_argument("plan")
    v.add_argument("--annf", help="prebuilt field file (default: build)")
    v.add_argument("--samples", type=int, default=100000)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--sweep", action="store_true",
                   help="one CSV row per depth 3..8")
    v.add_argument("--root-length", type=float, default=DEFAULT_ROOT_LENGTH)
    v.add_argument("--max-depth", type=int, default=DEFAULT_MAX_DEPTH)
    v.add_argument("--out", default="-")
    v.set_defaults(func=cmd_validate_annf)

    s = sub.add_parser("simulate", help="generate scans along a path")
    s.add_argument("config", help="scene YAML")
    s.add_argument("out", help="output directory")
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_simulate)

    l = sub.add_parser("localize", help="track a simulated sequence")
    l.add_argument("scans", help="directory from the simulate command")
    l.add_argument("--plan", required=True)
    l.add_argument("--annf", required=True)
    l.add_argument("--config", default=None, help="run config YAML")
    l.add_argument("--out", required=True, help="trajectory output")
    l.add_argument("--timing", default=None, help="per-frame timing CSV")
    l.set_defaults(func=cmd_localize)

    e = sub.add_parser("evaluate", help="trajectory metrics report")
    e.add_argument("estimate")
    e.add_argument("reference")
    e.add_argument("--max-dt", type=float, default=0.02)
    e.add_argument("--out", default="-")
    e.set_defaults(func=cmd_evaluate)

    pl = sub.add_parser("plot", help="bird's-eye SVG of plan + trajectories")
    pl.add_argument("trajectories", nargs="+")
    pl.add_argument("--plan", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except AnnfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateFitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
