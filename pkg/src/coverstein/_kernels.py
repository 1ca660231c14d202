"""Optional numba kernels for the hot coverage queries.

Pure-numpy fallbacks live in :mod:`coverstein.geometry`; everything here is a
bit-exact reimplementation (no fastmath), only faster. Import failures are
swallowed so the package works without numba.
"""

from __future__ import annotations

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


@njit(cache=True)
def coverage_kernel(
    points, queries, starts, order, offsets, cells_per_axis, cell_edge, side, r2, out
):
    m, d = queries.shape
    num_off = offsets.shape[0]
    for q in range(m):
        covered = False
        for o in range(num_off):
            if covered:
                break
            flat = 0
            for axis in range(d):
                c = int(queries[q, axis] / cell_edge)
                if c >= cells_per_axis:
                    c = cells_per_axis - 1
                c = (c + offsets[o, axis]) % cells_per_axis
                flat = flat * cells_per_axis + c
            lo = starts[flat]
            hi = starts[flat + 1]
            for t in range(lo, hi):
                p = order[t]
                dist2 = 0.0
                for axis in range(d):
                    delta = abs(points[p, axis] - queries[q, axis])
                    if delta > side - delta:
                        delta = side - delta
                    dist2 += delta * delta
                if dist2 <= r2:
                    covered = True
                    break
        out[q] = covered
