"""End-to-end tests for the command line interface."""
import os

import numpy as np
import pytest

from fploc.cli import main
from fploc.geometry import dump_floor_plan
from fploc.metrics import load_trajectory
from fploc.plans import square_room


@pytest.fixture(scope="module")
def plan_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("plan") / "room.txt"
    path.write_text(dump_floor_plan(square_room(8.0)))
    return str(path)


@pytest.fixture(scope="module")
def annf_file(plan_file, tmp_path_factory):
    path = str(tmp_path_factory.mktemp("annf") / "room.annf")
    assert main(["build-annf", plan_file, path]) == 0
    return path


@pytest.fixture(scope="module")
def sim_dir(plan_file, tmp_path_factory):
    scene_dir = tmp_path_factory.mktemp("sim")
    scene = scene_dir / "scene.yaml"
    scene.write_text(
        f"plan: {plan_file}\n"
        "waypoints: [[-1.0, 0.0], [1.0, 0.0]]\n"
        "speed: 0.5\n"
        "base_z: 2.2\n"
        "n_rings: 32\n"
        "azimuth_steps: 512\n"
        "range_noise_sigma: 0.02\n"
        "seed: 3\n")
    out = str(scene_dir / "frames")
    assert main(["simulate", str(scene), out]) == 0
    return out


class TestBuildValidate:
    def test_build_writes_loadable_field(self, annf_file):
        assert os.path.getsize(annf_file) > 1000

    def test_validate_single_row(self, plan_file, annf_file, tmp_path,
                                 capsys):
        out = str(tmp_path / "report.csv")
        code = main(["validate-annf", plan_file, "--annf", annf_file,
                     "--samples", "5000", "--seed", "1", "--out", out])
        assert code == 0
        lines = open(out).read().strip().splitlines()
        assert lines[0] == "depth,leaf_cm,hit1,hit12,ns_per_lookup,samples"
        assert len(lines) == 2
        hit1 = float(lines[1].split(",")[2])
        assert hit1 >= 0.90

    def test_sweep_rows_and_monotone_hit_rate(self, plan_file, tmp_path):
        out = str(tmp_path / "sweep.csv")
        code = main(["validate-annf", plan_file, "--sweep",
                     "--samples", "4000", "--seed", "1", "--out", out])
        assert code == 0
        rows = [line.split(",") for line in
                open(out).read().strip().splitlines()[1:]]
        assert [int(r[0]) for r in rows] == list(range(3, 9))
        hit1 = [float(r[2]) for r in rows]
        assert all(b >= a - 0.02 for a, b in zip(hit1, hit1[1:]))

    def test_zero_samples_is_usage_error(self, plan_file, capsys):
        assert main(["validate-annf", plan_file, "--samples", "0"]) == 2

    def test_missing_plan_is_usage_error(self, capsys):
        assert main(["build-annf", "/nonexistent/plan.txt", "/tmp/x"]) == 2


class TestSimulate:
    def test_outputs_scans_truth_and_manifest(self, sim_dir):
        names = sorted(os.listdir(sim_dir))
        scans = [n for n in names if n.startswith("scan_")]
        assert len(scans) > 10
        assert "ground_truth.txt" in names
        assert "manifest.yaml" in names
        truth = load_trajectory(os.path.join(sim_dir, "ground_truth.txt"))
        assert len(truth) == len(scans)

    def test_seed_env_fallback_is_deterministic(self, plan_file, tmp_path,
                                                monkeypatch):
        scene = tmp_path / "scene.yaml"
        scene.write_text(
            f"plan: {plan_file}\n"
            "waypoints: [[0.0, 0.0], [0.5, 0.0]]\n"
            "speed: 0.5\nbase_z: 2.2\nn_rings: 8\nazimuth_steps: 128\n"
            "range_noise_sigma: 0.02\n")
        monkeypatch.setenv("FPLOC_SEED", "11")
        outs = []
        for name in ("a", "b"):
            out = str(tmp_path / name)
            assert main(["simulate", str(scene), out]) == 0
            outs.append(open(os.path.join(out, "scan_000000.csv")).read())
        assert outs[0] == outs[1]

    def test_unknown_yaml_key_rejected(self, plan_file, tmp_path):
        scene = tmp_path / "scene.yaml"
        scene.write_text(f"plan: {plan_file}\nwaypoints: [[0,0],[1,0]]\n"
                         "speed: 0.5\nbogus_key: 1\n")
        assert main(["simulate", str(scene), str(tmp_path / "out")]) == 2


class TestLocalizeEvaluate:
    def test_localize_and_evaluate(self, sim_dir, plan_file, annf_file,
                                   tmp_path, capsys):
        est = str(tmp_path / "estimate.txt")
        timing = str(tmp_path / "timing.csv")
        code = main(["localize", sim_dir, "--plan", plan_file,
                     "--annf", annf_file, "--out", est, "--timing", timing])
        assert code == 0
        truth_path = os.path.join(sim_dir, "ground_truth.txt")
        estimate = load_trajectory(est)
        truth = load_trajectory(truth_path)
        assert len(estimate) == len(truth)
        err = np.linalg.norm(estimate.positions - truth.positions, axis=1)
        assert np.mean(err) < 0.05

        header = open(timing).readline().strip()
        assert header == ("frame,ms_segmentation,ms_features,"
                          "ms_register,ms_window")

        report = str(tmp_path / "report.csv")
        assert main(["evaluate", est, truth_path, "--out", report]) == 0
        lines = open(report).read().strip().splitlines()
        assert lines[0] == "metric,value_cm,pairs"
        ate_cm = float(lines[1].split(",")[1])
        assert ate_cm < 5.0

    def test_evaluate_identical_is_zero(self, sim_dir, tmp_path):
        truth = os.path.join(sim_dir, "ground_truth.txt")
        out = str(tmp_path / "self.csv")
        assert main(["evaluate", truth, truth, "--out", out]) == 0
        lines = open(out).read().strip().splitlines()
        assert lines[1].split(",")[1] == "0.0000"

    def test_evaluate_disjoint_times_is_domain_error(self, tmp_path, capsys):
        a = tmp_path / "a.txt"
        b = tmp_path / "b.txt"
        a.write_text("0.0 0 0 0 0 0 0 1\n")
        b.write_text("99.0 0 0 0 0 0 0 1\n")
        assert main(["evaluate", str(a), str(b)]) == 1


class TestPlot:
    def test_svg_has_plan_and_one_polyline_per_trajectory(self, sim_dir,
                                                          plan_file,
                                                          tmp_path):
        truth = os.path.join(sim_dir, "ground_truth.txt")
        out = str(tmp_path / "plot.svg")
        assert main(["plot", truth, truth, "--plan", plan_file,
                     "--out", out]) == 0
        svg = open(out).read()
        assert svg.startswith("<?xml") or svg.lstrip().startswith("<svg")
        assert svg.count("<polyline") >= 2 + 4  # 2 trajectories + 4 walls


def test_no_command_is_usage_error(capsys):
    with pytest.raises(SystemExit):
        main([])
