"""Hot numeric kernels with two interchangeable backends.

The numba backend (default) JIT-compiles the inner loops; setting the
environment variable ``FPLOC_PURE_NUMPY=1`` before import selects the
vectorized pure-numpy fallback instead. Both expose the same functions:

    nearest_two(qx, qy, kinds, params)      -> (i0, i1, d0, d1)
    point_residuals(px, py, ids, kinds, params) -> (dist, ux, uy)
    annf_lookup(qx, qy, grid..., nodes...)  -> (i0, i1, ok)
    raycast(origin, dirs, kinds, params, ...) -> ranges

See benchmarks/bench_kernels.py for a speed comparison of the two paths.
"""

import os

PURE_NUMPY = os.environ.get("FPLOC_PURE_NUMPY", "0") == "1"

if not PURE_NUMPY:
    try:
        from .numba_impl import annf_lookup, nearest_two, point_residuals, raycast
        BACKEND = "numba"
    except ImportError:
        PURE_NUMPY = True

if PURE_NUMPY:
    from .numpy_impl import annf_lookup, nearest_two, point_residuals, raycast
    BACKEND = "numpy"

__all__ = ["nearest_two", "point_residuals", "annf_lookup", "raycast",
           "BACKEND", "PURE_NUMPY"]
