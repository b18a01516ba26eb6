import math
import zlib

import numpy as np
import pytest

from fploc.annf import (AnnfError, OutOfGridError, build_annf, load_annf,
                        save_annf, validate_annf)
from fploc.geometry import FloorPlan, Segment, brute_force_nearest
from fploc.plans import corridor_maze, room_with_pillars, square_room


@pytest.fixture(scope="module")
def pillar_plan():
    return room_with_pillars(size=20.0, grid=4)


@pytest.fixture(scope="module")
def pillar_annf(pillar_plan):
    return build_annf(pillar_plan, max_depth=7)


class TestStructure:
    def test_leaf_lengths_halve_per_depth(self, pillar_annf):
        # root cells are 6 m; depth d leaves are 6 / 2^(d-1) m
        for depth, cm in [(3, 150.0), (4, 75.0), (5, 37.5), (6, 18.75),
                          (7, 9.375)]:
            assert pillar_annf.leaf_length(depth) * 100 == pytest.approx(cm)

    def test_depth_one_is_roots_only(self, pillar_plan):
        annf = build_annf(pillar_plan, max_depth=1)
        assert np.all(annf.first_child < 0)

    def test_two_parallel_walls_subdivide_toward_bisector(self):
        # Fields straddling the midline between two walls must split until
        # both stored candidates agree with the exact nearest pair.
        plan = FloorPlan([Segment(-5, 2, 5, 2), Segment(-5, -2, 5, -2)])
        annf = build_annf(plan, root_length=6.0, max_depth=7)
        assert annf.node_count > annf.grid_dims[0] * annf.grid_dims[1]
        rng = np.random.default_rng(0)
        qx = rng.uniform(-4.5, 4.5, 5000)
        qy = rng.uniform(-4.5, 4.5, 5000)
        i0, _, ok = annf.lookup_batch(qx, qy)
        assert np.all(ok == 1)
        expect = (qy > 0).astype(np.int32) ^ 1  # wall 0 is the upper one
        wrong = i0 != expect
        # mistakes only possible in a thin band around the bisector
        assert np.all(np.abs(qy[wrong]) < annf.leaf_length(7))

    def test_build_deterministic(self, pillar_plan, pillar_annf):
        again = build_annf(pillar_plan, max_depth=7)
        assert save_annf(again) == save_annf(pillar_annf)


class TestLookup:
    def test_hit_rates_on_uniform_samples(self, pillar_plan, pillar_annf):
        rep = validate_annf(pillar_annf, pillar_plan, 50_000, seed=2)
        assert rep.hit_first >= 0.90
        assert rep.hit_first_or_second >= 0.95

    def test_second_candidate_covers_first_misses(self, pillar_plan,
                                                  pillar_annf):
        rng = np.random.default_rng(5)
        qx = rng.uniform(-9, 9, 20_000)
        qy = rng.uniform(-9, 9, 20_000)
        i0, i1, ok = pillar_annf.lookup_batch(qx, qy)
        miss_both = 0
        for j in np.nonzero(ok == 1)[0][:2000]:
            true_id = brute_force_nearest((qx[j], qy[j]), pillar_plan)[0].element_id
            if true_id not in (i0[j], i1[j]):
                miss_both += 1
        assert miss_both / 2000 <= 0.05

    def test_scalar_lookup_out_of_grid_raises(self, pillar_annf):
        with pytest.raises(OutOfGridError):
            pillar_annf.lookup((1e6, 1e6))

    def test_margin_covers_just_outside_walls(self, pillar_annf):
        i0, i1, ok = pillar_annf.lookup_batch(np.array([10.5]), np.array([0.0]))
        assert ok[0] == 1 and i0[0] >= 0


class TestSerialization:
    def test_round_trip_identical_lookups(self, pillar_plan, pillar_annf):
        blob = save_annf(pillar_annf)
        back = load_annf(blob)
        rng = np.random.default_rng(9)
        qx = rng.uniform(-10, 10, 10_000)
        qy = rng.uniform(-10, 10, 10_000)
        a = pillar_annf.lookup_batch(qx, qy)
        b = back.lookup_batch(qx, qy)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_round_trip_bytes_stable(self, pillar_annf):
        blob = save_annf(pillar_annf)
        assert save_annf(load_annf(blob)) == blob

    def test_magic_and_version_checked(self):
        with pytest.raises(AnnfError):
            load_annf(b"NOPE" + b"\x00" * 64)

    def test_crc_corruption_detected(self, pillar_annf):
        blob = bytearray(save_annf(pillar_annf))
        blob[len(blob) // 2] ^= 0xFF
        with pytest.raises(AnnfError):
            load_annf(bytes(blob))

    def test_truncation_detected(self, pillar_annf):
        blob = save_annf(pillar_annf)
        with pytest.raises(AnnfError):
            load_annf(blob[:-8])


class TestValidation:
    def test_report_csv_shape(self, pillar_plan, pillar_annf):
        rep = validate_annf(pillar_annf, pillar_plan, 1000, seed=0)
        row = rep.csv_row().split(",")
        assert len(row) == 6
        assert int(row[0]) == 7
        assert float(row[1]) == pytest.approx(9.375)
        assert int(row[5]) == 1000

    def test_seeded_determinism(self, pillar_plan, pillar_annf):
        a = validate_annf(pillar_annf, pillar_plan, 5000, seed=3)
        b = validate_annf(pillar_annf, pillar_plan, 5000, seed=3)
        assert (a.hit_first, a.hit_first_or_second) == (b.hit_first, b.hit_first_or_second)

    def test_invalid_sample_count(self, pillar_plan, pillar_annf):
        with pytest.raises(ValueError):
            validate_annf(pillar_annf, pillar_plan, 0)

    def test_depth_sweep_monotone_small(self):
        plan = corridor_maze()
        rates = []
        for depth in (3, 5, 7):
            annf = build_annf(plan, max_depth=depth)
            rates.append(validate_annf(annf, plan, 20_000, seed=1).hit_first)
        assert rates == sorted(rates)
