"""Torus geometry: model parameters, point sampling, and a grid spatial index.

The model lives on the torus [0, n^(1/d))^d. Points are plain float64 arrays
(shape ``(d,)`` for a single point, ``(n, d)`` for a configuration); the grid
index is a CSR-style bucket table over cubical cells of edge >= rho, sized so
a radius-rho query touches the 3^d surrounding cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, rng
from .analytic import unit_ball_volume
from .errors import ValidityError

__all__ = [
    "ModelParams",
    "GridIndex",
    "PointConfiguration",
    "toroidal_distance",
    "sample_configuration",
    "configuration_from_points",
    "neighbors_within",
    "pairs_within",
    "covered_mask",
    "save_points",
    "load_points",
]


@dataclass(frozen=True)
class ModelParams:
    """The model triple (d, n, rho) plus derived constants and validity tiers.

    ``side`` is the torus edge n^(1/d) and ``phi`` the grain volume
    pi_d * rho^d. The validity flags record which closed-form regimes the
    parameters fall into; formula entry points enforce them as hard
    preconditions.
    """

    d: int
    n: int
    rho: float
    allow_high_dim: bool = False

    def __post_init__(self):
        if not isinstance(self.d, int) or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d!r}")
        if self.d > 5 and not self.allow_high_dim:
            raise ValueError(
                f"d={self.d} exceeds the supported default of 5; "
                "pass allow_high_dim=True to proceed anyway"
            )
        if not isinstance(self.n, int) or self.n < 4:
            raise ValueError(f"point count must be an integer >= 4, got {self.n!r}")
        if not self.rho > 0:
            raise ValueError(f"radius must be positive, got {self.rho!r}")

    @property
    def side(self) -> float:
        return self.n ** (1.0 / self.d)

    @property
    def phi(self) -> float:
        return unit_ball_volume(self.d, self.allow_high_dim) * self.rho**self.d

    @property
    def mean_formulas_valid(self) -> bool:
        return 2.0 * self.rho < self.side

    @property
    def variance_formulas_valid(self) -> bool:
        return 4.0 * self.rho < self.side

    @property
    def theorem_V_valid(self) -> bool:
        return self.n > 6**self.d * self.phi

    @property
    def theorem_S_valid(self) -> bool:
        return self.n > max(3**self.d, 2 ** (self.d + 1) + 1) * self.phi

    def require(self, flag: str) -> None:
        """Raise :class:`ValidityError` naming the violated inequality."""
        if getattr(self, flag):
            return
        inequalities = {
            "mean_formulas_valid": f"2*rho < n^(1/d)  (2*{self.rho} >= {self.side:.6g})",
            "variance_formulas_valid": f"4*rho < n^(1/d)  (4*{self.rho} >= {self.side:.6g})",
            "theorem_V_valid": f"n > 6^d*phi  ({self.n} <= {6**self.d * self.phi:.6g})",
            "theorem_S_valid": (
                f"n > max(3^d, 2^(d+1)+1)*phi  "
                f"({self.n} <= {max(3**self.d, 2**(self.d+1)+1) * self.phi:.6g})"
            ),
        }
        raise ValidityError(f"precondition failed: {inequalities[flag]}")

    def validity(self) -> dict[str, bool]:
        return {
            "mean_formulas_valid": self.mean_formulas_valid,
            "variance_formulas_valid": self.variance_formulas_valid,
            "theorem_V_valid": self.theorem_V_valid,
            "theorem_S_valid": self.theorem_S_valid,
        }


def toroidal_distance(x: np.ndarray, y: np.ndarray, side: float) -> float:
    """Euclidean distance on the torus, minimizing over per-coordinate wraps."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    delta = np.abs(x - y)
    delta = np.minimum(delta, side - delta)
    return float(np.sqrt(np.sum(delta * delta)))


def _wrapped_delta(a: np.ndarray, b: np.ndarray, side: float) -> np.ndarray:
    """Minimal-image displacement a - b, component-wise in (-side/2, side/2]."""
    delta = a - b
    delta -= side * np.round(delta / side)
    return delta


class GridIndex:
    """Bucket table over cubical cells; cell edge = side / floor(side/rho) >= rho.

    ``order`` lists point ids sorted by flattened cell id and ``starts`` is the
    CSR offset array, so the members of cell c are
    ``order[starts[c]:starts[c+1]]``.
    """

    def __init__(self, points: np.ndarray, side: float, rho: float):
        n, d = points.shape
        self.side = side
        self.d = d
        self.cells_per_axis = max(1, int(math.floor(side / rho + 1e-12)))
        self.cell_edge = side / self.cells_per_axis
        coords = np.floor(points / self.cell_edge).astype(np.int64)
        np.clip(coords, 0, self.cells_per_axis - 1, out=coords)
        self.cell_coords = coords
        self.flat_cells = self._flatten(coords)
        self.num_cells = self.cells_per_axis**d
        self.order = np.argsort(self.flat_cells, kind="stable")
        counts = np.bincount(self.flat_cells, minlength=self.num_cells)
        self.starts = np.concatenate(([0], np.cumsum(counts)))
        self._table_cache: dict = {}

    def _flatten(self, coords: np.ndarray) -> np.ndarray:
        flat = coords[..., 0].copy()
        for axis in range(1, self.d):
            flat = flat * self.cells_per_axis + coords[..., axis]
        return flat

    def axis_offsets(self, r: float) -> list[np.ndarray]:
        """Per-axis cell offsets reaching distance r, deduplicated mod the grid."""
        reach = int(math.ceil(r / self.cell_edge)) if r > 0 else 0
        per_axis = 2 * reach + 1
        if per_axis >= self.cells_per_axis:
            return [np.arange(self.cells_per_axis)] * self.d
        return [np.arange(-reach, reach + 1)] * self.d

    def offset_vectors(self, r: float) -> np.ndarray:
        grids = np.meshgrid(*self.axis_offsets(r), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def candidate_lists(
        self, query_coords: np.ndarray, offset: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """For each query cell coordinate, the member ids of cell + offset.

        Returns (query_index_repeated, candidate_point_ids) as flat arrays.
        """
        nb = np.mod(query_coords + offset, self.cells_per_axis)
        flat = self._flatten(nb)
        lo = self.starts[flat]
        counts = self.starts[flat + 1] - lo
        total = int(counts.sum())
        if total == 0:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        heads = np.cumsum(counts) - counts
        within = np.arange(total) - np.repeat(heads, counts)
        cand = self.order[np.repeat(lo, counts) + within]
        qidx = np.repeat(np.arange(len(query_coords)), counts)
        return qidx, cand


@dataclass(frozen=True)
class PointConfiguration:
    """n points on the torus plus the grid index for radius queries.

    Treat as immutable after construction: queries are read-only and safe to
    run concurrently.
    """

    params: ModelParams
    points: np.ndarray
    index: GridIndex = field(repr=False)


def sample_configuration(
    params: ModelParams, seed: int, stream_index: int = 0
) -> PointConfiguration:
    """n i.i.d. uniform points on the torus, deterministic in (seed, stream)."""
    gen = rng.stream(seed, rng.DOMAIN_REPLICATE, stream_index)
    points = gen.random((params.n, params.d)) * params.side
    return configuration_from_points(params, points)


def configuration_from_points(
    params: ModelParams, points: np.ndarray
) -> PointConfiguration:
    points = np.ascontiguousarray(points, dtype=float)
    if points.shape != (params.n, params.d):
        raise ValueError(
            f"point array shape {points.shape} does not match (n, d) = "
            f"({params.n}, {params.d})"
        )
    if np.any(points < 0) or np.any(points >= params.side):
        raise ValueError("coordinates must lie in [0, side)")
    index = GridIndex(points, params.side, params.rho)
    return PointConfiguration(params, points, index)


def _max_query_radius(params: ModelParams) -> float:
    return 0.5 * math.sqrt(params.d) * params.side


def neighbors_within(
    config: PointConfiguration, center: np.ndarray, r: float
) -> np.ndarray:
    """Ids of all points with toroidal distance <= r from ``center`` (closed ball)."""
    if r < 0:
        raise ValueError(f"query radius must be nonnegative, got {r}")
    if r > _max_query_radius(config.params):
        raise ValueError(
            f"query radius {r} exceeds the maximum toroidal distance "
            f"{_max_query_radius(config.params):.6g}"
        )
    center = np.asarray(center, dtype=float)
    if center.shape != (config.params.d,):
        raise ValueError(
            f"dimension mismatch: center shape {center.shape}, d={config.params.d}"
        )
    index = config.index
    ccoord = np.floor(center[None, :] / index.cell_edge).astype(np.int64)
    np.clip(ccoord, 0, index.cells_per_axis - 1, out=ccoord)
    side = config.params.side
    found = []
    for offset in index.offset_vectors(r):
        _, cand = index.candidate_lists(ccoord, offset)
        if len(cand) == 0:
            continue
        delta = _wrapped_delta(config.points[cand], center[None, :], side)
        hit = np.einsum("ij,ij->i", delta, delta) <= r * r + 0.0
        found.append(cand[hit])
    if not found:
        return np.empty(0, np.int64)
    return np.unique(np.concatenate(found))


def pairs_within(
    config: PointConfiguration, r: float
) -> tuple[np.ndarray, np.ndarray]:
    """All unordered pairs (i < j) with toroidal distance <= r.

    Enumerates grid-cell offset joins; each ordered pair is produced exactly
    once because the per-axis offsets are deduplicated modulo the grid.
    """
    if r < 0:
        raise ValueError(f"query radius must be nonnegative, got {r}")
    if r > _max_query_radius(config.params):
        raise ValueError(
            f"query radius {r} exceeds the maximum toroidal distance "
            f"{_max_query_radius(config.params):.6g}"
        )
    index = config.index
    side = config.params.side
    points = config.points
    r2 = r * r
    out_i, out_j = [], []
    for offset in index.offset_vectors(r):
        qidx, cand = index.candidate_lists(index.cell_coords, offset)
        if len(cand) == 0:
            continue
        keep = qidx < cand
        qidx, cand = qidx[keep], cand[keep]
        if len(cand) == 0:
            continue
        delta = _wrapped_delta(points[cand], points[qidx], side)
        hit = np.einsum("ij,ij->i", delta, delta) <= r2
        out_i.append(qidx[hit])
        out_j.append(cand[hit])
    if not out_i:
        empty = np.empty(0, np.int64)
        return empty, empty
    return np.concatenate(out_i), np.concatenate(out_j)


def _padded_neighbor_table(index: GridIndex, r: float) -> np.ndarray:
    """Per-cell table of the point ids in the r-neighborhood, -1 padded.

    Cached on the index keyed by the offset reach, so repeated queries at the
    same radius (Monte Carlo chunks, self-checks) build it once.
    """
    offsets = index.offset_vectors(r)
    key = (len(offsets), offsets.min(), offsets.max())
    cached = index._table_cache.get(key)
    if cached is not None:
        return cached
    num_cells = index.num_cells
    all_cells = np.arange(num_cells)
    coords = np.empty((num_cells, index.d), dtype=np.int64)
    rem = all_cells
    for axis in range(index.d - 1, -1, -1):
        coords[:, axis] = rem % index.cells_per_axis
        rem = rem // index.cells_per_axis
    per_offset = []
    for offset in offsets:
        nb = np.mod(coords + offset, index.cells_per_axis)
        flat = index._flatten(nb)
        per_offset.append((index.starts[flat], index.starts[flat + 1]))
    counts = sum(hi - lo for lo, hi in per_offset)
    width = int(counts.max()) if num_cells else 0
    table = np.full((num_cells, max(width, 1)), -1, dtype=np.int64)
    col = np.zeros(num_cells, dtype=np.int64)
    for lo, hi in per_offset:
        cnt = hi - lo
        total = int(cnt.sum())
        if total == 0:
            continue
        heads = np.cumsum(cnt) - cnt
        within = np.arange(total) - np.repeat(heads, cnt)
        rows = np.repeat(all_cells, cnt)
        table[rows, np.repeat(col, cnt) + within] = index.order[
            np.repeat(lo, cnt) + within
        ]
        col += cnt
    index._table_cache[key] = table
    return table


def covered_mask(
    config: PointConfiguration, queries: np.ndarray, r: float
) -> np.ndarray:
    """Boolean mask: query point q has some configuration point within r.

    Dispatches to the numba kernel when available; the numpy fallback below
    is the same computation and doubles as its oracle in tests.
    """
    queries = np.ascontiguousarray(np.atleast_2d(np.asarray(queries, dtype=float)))
    if _kernels.HAVE_NUMBA:
        index = config.index
        out = np.zeros(len(queries), dtype=np.bool_)
        _kernels.coverage_kernel(
            config.points,
            queries,
            index.starts,
            index.order,
            np.ascontiguousarray(index.offset_vectors(r)),
            index.cells_per_axis,
            index.cell_edge,
            config.params.side,
            r * r,
            out,
        )
        return out
    return _covered_mask_numpy(config, queries, r)


def _covered_mask_numpy(
    config: PointConfiguration, queries: np.ndarray, r: float
) -> np.ndarray:
    """Padded-table fallback: one gather plus a vectorized distance pass."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    side = config.params.side
    points = config.points
    index = config.index
    r2 = r * r
    table = _padded_neighbor_table(index, r)
    qcoords = np.floor(queries / index.cell_edge).astype(np.int64)
    np.clip(qcoords, 0, index.cells_per_axis - 1, out=qcoords)
    qcells = index._flatten(qcoords)
    covered = np.zeros(len(queries), dtype=bool)
    # padding slots point at a sentinel row far outside every ball
    width = table.shape[1]
    coords_pad = np.vstack([points, np.full((1, config.params.d), 1e30)])
    chunk = max(1, (1 << 21) // max(width, 1))
    for lo in range(0, len(queries), chunk):
        hi = min(lo + chunk, len(queries))
        cand = table[qcells[lo:hi]]
        dist2 = np.zeros(cand.shape)
        for axis in range(config.params.d):
            delta = coords_pad[cand, axis]
            delta -= queries[lo:hi, axis, None]
            np.abs(delta, out=delta)
            np.minimum(delta, side - delta, out=delta)
            delta *= delta
            dist2 += delta
        covered[lo:hi] = (dist2 <= r2).any(axis=1)
    return covered


def save_points(points: np.ndarray, path: str, fmt: str = "bin") -> None:
    """Dump coordinates for cross-implementation comparison.

    ``bin`` writes row-major little-endian float64; ``csv`` writes decimal
    text with 17 significant digits.
    """
    points = np.asarray(points, dtype=float)
    if fmt == "bin":
        points.astype("<f8").tofile(path)
    elif fmt == "csv":
        np.savetxt(path, points, fmt="%.17g", delimiter=",")
    else:
        raise ValueError(f"unknown format {fmt!r}; expected 'bin' or 'csv'")


def load_points(path: str, d: int, fmt: str = "bin") -> np.ndarray:
    if fmt == "bin":
        flat = np.fromfile(path, dtype="<f8")
        if len(flat) % d:
            raise ValueError(f"file length {len(flat)} not divisible by d={d}")
        return flat.astype(float).reshape(-1, d)
    if fmt == "csv":
        return np.loadtxt(path, delimiter=",", dtype=float, ndmin=2).reshape(-1, d)
    raise ValueError(f"unknown format {fmt!r}; expected 'bin' or 'csv'")
