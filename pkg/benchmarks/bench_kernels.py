"""Compare the compiled kernels against the pure-numpy fallback.

Run twice, once per backend:

    python3 benchmarks/bench_kernels.py
    FPLOC_PURE_NUMPY=1 python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from fploc import kernels
from fploc.annf import build_annf
from fploc.plans import room_with_pillars
from fploc.simulate import Scene, Pose6, spinning_sensor, simulate_scan


def timeit(fn, repeats=5):
    fn()  # warm-up (JIT compile on the compiled backend)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    plan = room_with_pillars(size=20.0, grid=6)
    rng = np.random.default_rng(0)
    n = 200_000
    qx = rng.uniform(-10, 10, n)
    qy = rng.uniform(-10, 10, n)
    print(f"backend: {kernels.BACKEND}")
    print(f"plan elements: {plan.kinds.shape[0]}, queries: {n}")

    t = timeit(lambda: kernels.nearest_two(qx, qy, plan.kinds, plan.params))
    print(f"nearest_two        {t * 1e3:9.1f} ms   ({t / n * 1e9:8.1f} ns/query)")

    annf = build_annf(plan, max_depth=7)
    t = timeit(lambda: annf.lookup_batch(qx, qy))
    print(f"annf_lookup        {t * 1e3:9.1f} ms   ({t / n * 1e9:8.1f} ns/query)")

    ids = np.minimum((rng.integers(0, plan.kinds.shape[0], n)).astype(np.int32),
                     plan.kinds.shape[0] - 1)
    t = timeit(lambda: kernels.point_residuals(qx, qy, ids, plan.kinds,
                                               plan.params))
    print(f"point_residuals    {t * 1e3:9.1f} ms   ({t / n * 1e9:8.1f} ns/point)")

    scene = Scene(plan, ceiling_z=3.0, ground_z=0.0)
    sensor = spinning_sensor(range_noise_sigma=0.02)
    pose = Pose6(0.0, 0.0, 2.2, 0.02, -0.03, 0.4)
    n_rays = len(sensor.elevation_angles) * sensor.azimuth_steps
    t = timeit(lambda: simulate_scan(scene, pose, sensor, seed=1))
    print(f"raycast (64x1024)  {t * 1e3:9.1f} ms   ({t / n_rays * 1e9:8.1f} ns/ray)")


if __name__ == "__main__":
    main()
