"""Computing V (covered volume) and S (isolated count) per configuration,
and running replicate batches.

Exact volume modes exist for d = 1 (circular interval merge) and d = 2
(arc decomposition of the union boundary). The d = 2 computation is done in
the plane: every disk whose center lies within rho of the fundamental square
is materialized (periodic images included), exposed boundary arcs are
clipped to the square, and Green's theorem is applied to the closed boundary
of (union intersect square). Clipping sidesteps the winding problem a
torus-global boundary integral would have when the union wraps around.

Higher dimensions use stratified Monte Carlo over the grid cells.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import NumericalError
from .geometry import (
    ModelParams,
    PointConfiguration,
    covered_mask,
    pairs_within,
    sample_configuration,
)

__all__ = [
    "VolumeMethod",
    "ReplicateBatch",
    "covered_volume",
    "covered_volume_mc",
    "isolated_count",
    "run_replicates",
    "batch_to_csv",
    "batch_from_csv",
]

_MODES = ("exact-1d", "exact-2d", "monte-carlo")

# angular slack for tangency handling in the d=2 arc merge
_ARC_TOL = 1e-12

# coarse Monte Carlo cross-check of every exact-2d result (6 sigma gate)
_SELF_CHECK_SAMPLES = 100_000


@dataclass(frozen=True)
class VolumeMethod:
    mode: str
    mc_samples: int = 1_000_000

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown volume mode {self.mode!r}; expected one of {_MODES}")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be a positive integer")

    @classmethod
    def auto(cls, d: int, mc_samples: int = 1_000_000) -> "VolumeMethod":
        if d == 1:
            return cls("exact-1d")
        if d == 2:
            return cls("exact-2d")
        return cls("monte-carlo", mc_samples)

    def check_dimension(self, d: int) -> None:
        if self.mode == "exact-1d" and d != 1:
            raise ValueError(f"exact-1d volume requires d=1, got d={d}")
        if self.mode == "exact-2d" and d != 2:
            raise ValueError(f"exact-2d volume requires d=2, got d={d}")


def _covered_length_1d(xs: np.ndarray, side: float, rho: float) -> float:
    """Union length of arcs [x - rho, x + rho] on a circle of circumference side.

    The complement is the set of inter-point gaps exceeding 2*rho.
    """
    x = np.sort(xs.ravel())
    gaps = np.empty_like(x)
    gaps[:-1] = np.diff(x)
    gaps[-1] = x[0] + side - x[-1]
    vacant = np.maximum(gaps - 2.0 * rho, 0.0).sum()
    return side - float(vacant)


def _materialize_images(
    points: np.ndarray, side: float, rho: float
) -> tuple[np.ndarray, np.ndarray]:
    """Canonical centers plus the periodic images within rho of the square.

    Returns (centers, parent ids) so image circles stay traceable to their
    canonical point.
    """
    out = [points]
    parents = [np.arange(len(points))]
    x, y = points[:, 0], points[:, 1]
    for ox in (-1, 0, 1):
        for oy in (-1, 0, 1):
            if ox == 0 and oy == 0:
                continue
            mask = np.ones(len(points), dtype=bool)
            if ox == 1:
                mask &= x < rho
            elif ox == -1:
                mask &= x > side - rho
            if oy == 1:
                mask &= y < rho
            elif oy == -1:
                mask &= y > side - rho
            if mask.any():
                out.append(points[mask] + np.array([ox * side, oy * side]))
                parents.append(np.flatnonzero(mask))
    return np.concatenate(out, axis=0), np.concatenate(parents)


def _planar_pairs(points: np.ndarray, r: float, lo: float) -> tuple[np.ndarray, np.ndarray]:
    """Unordered pairs (a < b) with planar distance <= r; bucket join, cell edge r."""
    n = len(points)
    coords = np.floor((points - lo) / r).astype(np.int64)
    ncell = int(coords.max()) + 2 if n else 1
    flat = coords[:, 0] * ncell + coords[:, 1]
    order = np.argsort(flat, kind="stable")
    sorted_flat = flat[order]
    r2 = r * r
    out_a, out_b = [], []
    for ox in (-1, 0, 1):
        for oy in (-1, 0, 1):
            nb = flat + ox * ncell + oy
            left = np.searchsorted(sorted_flat, nb, side="left")
            right = np.searchsorted(sorted_flat, nb, side="right")
            counts = right - left
            total = int(counts.sum())
            if total == 0:
                continue
            heads = np.cumsum(counts) - counts
            within = np.arange(total) - np.repeat(heads, counts)
            cand = order[np.repeat(left, counts) + within]
            src = np.repeat(np.arange(n), counts)
            keep = src < cand
            src, cand = src[keep], cand[keep]
            if len(src) == 0:
                continue
            delta = points[cand] - points[src]
            hit = np.einsum("ij,ij->i", delta, delta) <= r2
            out_a.append(src[hit])
            out_b.append(cand[hit])
    if not out_a:
        empty = np.empty(0, np.int64)
        return empty, empty
    return np.concatenate(out_a), np.concatenate(out_b)


def _edge_outside_intervals(
    centers: np.ndarray, side: float, rho: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Angular intervals of each circle lying outside the fundamental square.

    Returns (circle_id, interval_center, half_width) arrays. A circle within
    rho of edge x=0 is outside on an interval centered at angle pi, etc.
    """
    ids, mids, halves = [], [], []
    x, y = centers[:, 0], centers[:, 1]
    specs = [
        (x, 0.0, math.pi),          # x = 0, outward direction -x
        (side - x, 0.0, 0.0),       # x = side, outward direction +x
        (y, 0.0, 1.5 * math.pi),    # y = 0, outward direction -y
        (side - y, 0.0, 0.5 * math.pi),  # y = side, outward direction +y
    ]
    for signed_dist, _, center_angle in specs:
        mask = signed_dist < rho
        if not mask.any():
            continue
        frac = np.clip(signed_dist[mask] / rho, -1.0, 1.0)
        half = np.pi - np.arccos(-frac)
        ids.append(np.flatnonzero(mask))
        mids.append(np.full(mask.sum(), center_angle))
        halves.append(half)
    if not ids:
        empty = np.empty(0)
        return np.empty(0, np.int64), empty, empty
    return np.concatenate(ids), np.concatenate(mids), np.concatenate(halves)


def _exposed_arcs(
    num_circles: int, ids: np.ndarray, mids: np.ndarray, halves: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Complement of the union of angular intervals, per circle.

    Intervals are (mid - half, mid + half), merged with a 1e-12 slack so
    tangencies do not leave sliver arcs. Returns (circle_id, theta1, theta2)
    for every exposed arc; circles with no intervals at all are returned as a
    single full arc.
    """
    two_pi = 2.0 * math.pi
    start = np.mod(mids - halves, two_pi) - _ARC_TOL
    end = start + 2.0 * halves + 2.0 * _ARC_TOL
    # full-cover intervals need no splitting games
    full = end - start >= two_pi
    end = np.minimum(end, start + two_pi)
    # split intervals crossing 2*pi
    wraps = end > two_pi
    add_ids = ids[wraps]
    add_start = np.zeros(wraps.sum())
    add_end = end[wraps] - two_pi
    end = np.where(wraps, two_pi, end)
    start = np.maximum(start, 0.0)
    all_ids = np.concatenate([ids, add_ids])
    all_s = np.concatenate([start, add_start])
    all_e = np.concatenate([end, add_end])

    covered_ids = np.unique(ids[full]) if full.any() else np.empty(0, np.int64)

    if len(all_ids) == 0:
        free = np.arange(num_circles)
        return free, np.zeros(num_circles), np.full(num_circles, two_pi)

    order = np.lexsort((all_s, all_ids))
    gid = all_ids[order]
    s = all_s[order]
    e = all_e[order]
    new_group = np.empty(len(gid), dtype=bool)
    new_group[0] = True
    new_group[1:] = gid[1:] != gid[:-1]
    ordinal = np.cumsum(new_group) - 1
    shifted = e + ordinal * 8.0
    run_max = np.maximum.accumulate(shifted) - ordinal * 8.0

    out_ids, out_t1, out_t2 = [], [], []
    # interior gaps: previous running max < next start, same circle
    interior = ~new_group
    gap = interior & (s > np.concatenate(([0.0], run_max[:-1])))
    if gap.any():
        out_ids.append(gid[gap])
        out_t1.append(np.concatenate(([0.0], run_max[:-1]))[gap])
        out_t2.append(s[gap])
    # head gaps
    head = new_group & (s > 0.0)
    if head.any():
        out_ids.append(gid[head])
        out_t1.append(np.zeros(head.sum()))
        out_t2.append(s[head])
    # tail gaps
    last = np.empty(len(gid), dtype=bool)
    last[:-1] = new_group[1:]
    last[-1] = True
    tail = last & (run_max < two_pi)
    if tail.any():
        out_ids.append(gid[tail])
        out_t1.append(run_max[tail])
        out_t2.append(np.full(tail.sum(), two_pi))
    # circles with no intervals at all are fully exposed
    free = np.setdiff1d(np.arange(num_circles), np.unique(all_ids), assume_unique=False)
    if len(free):
        out_ids.append(free)
        out_t1.append(np.zeros(len(free)))
        out_t2.append(np.full(len(free), two_pi))

    if not out_ids:
        return np.empty(0, np.int64), np.empty(0), np.empty(0)
    arc_ids = np.concatenate(out_ids)
    t1 = np.concatenate(out_t1)
    t2 = np.concatenate(out_t2)
    # drop arcs of fully-covered circles and degenerate slivers
    keep = t2 - t1 > _ARC_TOL
    if len(covered_ids):
        keep &= ~np.isin(arc_ids, covered_ids)
    return arc_ids[keep], t1[keep], t2[keep]


def _merged_length(lo: np.ndarray, hi: np.ndarray) -> float:
    """Total length of the union of 1-d intervals."""
    if len(lo) == 0:
        return 0.0
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    run = np.concatenate(([-np.inf], np.maximum.accumulate(hi)[:-1]))
    return float(np.maximum(hi - np.maximum(lo, run), 0.0).sum())


def _edge_cover_length(centers: np.ndarray, side: float, rho: float, axis: int) -> float:
    """Covered length of the edge {coordinate[axis] = side} within the square."""
    dist = centers[:, axis] - side
    mask = np.abs(dist) < rho
    if not mask.any():
        return 0.0
    w = np.sqrt(np.maximum(rho * rho - dist[mask] ** 2, 0.0))
    other = centers[mask, 1 - axis]
    lo = np.maximum(other - w, 0.0)
    hi = np.minimum(other + w, side)
    keep = hi > lo
    return _merged_length(lo[keep], hi[keep])


def _covered_area_2d(points: np.ndarray, side: float, rho: float) -> float:
    """Exact area of the union of rho-disks on the torus, via planar clipping.

    Near-duplicate centers (toroidal distance <= 1e-12) are collapsed first;
    they show up as planar pairs among the materialized copies.
    """
    centers, parents = _materialize_images(points, side, rho)
    a, b = _planar_pairs(centers, 2.0 * rho, lo=-rho)

    if len(a):
        delta = centers[b] - centers[a]
        u = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        dup = (u <= 1e-12) & (parents[a] != parents[b])
        if dup.any():
            drop = np.unique(np.maximum(parents[a][dup], parents[b][dup]))
            keep = np.ones(len(points), dtype=bool)
            keep[drop] = False
            return _covered_area_2d(points[keep], side, rho)

    ids_list, mids_list, halves_list = [], [], []
    if len(a):
        nontrivial = u > 1e-12  # residual self-image pairs carry no coverage
        a, b, delta, u = a[nontrivial], b[nontrivial], delta[nontrivial], u[nontrivial]
        alpha = np.arctan2(delta[:, 1], delta[:, 0])
        beta = np.arccos(np.clip(u / (2.0 * rho), -1.0, 1.0))
        ids_list += [a, b]
        mids_list += [alpha, alpha + math.pi]
        halves_list += [beta, beta]

    eids, emids, ehalves = _edge_outside_intervals(centers, side, rho)
    if len(eids):
        ids_list.append(eids)
        mids_list.append(emids)
        halves_list.append(ehalves)

    if ids_list:
        ids = np.concatenate(ids_list)
        mids = np.concatenate(mids_list)
        halves = np.concatenate(halves_list)
    else:
        ids = np.empty(0, np.int64)
        mids = halves = np.empty(0)

    arc_ids, t1, t2 = _exposed_arcs(len(centers), ids, mids, halves)
    cx = centers[arc_ids, 0]
    cy = centers[arc_ids, 1]
    arcs = 0.5 * (
        rho * rho * (t2 - t1)
        + rho * cx * (np.sin(t2) - np.sin(t1))
        + rho * cy * (np.cos(t1) - np.cos(t2))
    ).sum()

    edges = 0.5 * side * (
        _edge_cover_length(centers, side, rho, axis=0)
        + _edge_cover_length(centers, side, rho, axis=1)
    )
    return float(arcs + edges)


def _self_check_2d(config: PointConfiguration, rho: float, exact: float) -> None:
    """Coarse Monte Carlo cross-check of the exact d=2 area (6 sigma gate).

    Uses the toroidal grid index, a path fully independent of the planar arc
    decomposition; fixed sample offsets keep the check deterministic.
    """
    gen = rng.stream(0, rng.DOMAIN_SELF_CHECK, 0)
    samples = gen.random((_SELF_CHECK_SAMPLES, config.params.d)) * config.params.side
    hit = covered_mask(config, samples, rho)
    p = hit.mean()
    area = config.params.n
    estimate = area * p
    sigma = area * math.sqrt(max(p * (1.0 - p), 1.0 / _SELF_CHECK_SAMPLES) / _SELF_CHECK_SAMPLES)
    if abs(exact - estimate) > 6.0 * sigma + 1e-9:
        raise NumericalError(
            f"exact-2d area {exact:.6g} disagrees with Monte Carlo "
            f"{estimate:.6g} beyond 6 sigma ({sigma:.3g})",
            achieved_error=abs(exact - estimate),
        )


def covered_volume(
    config: PointConfiguration, rho: float, method: VolumeMethod
) -> float:
    """Volume of the union of rho-balls around the configuration points."""
    params = config.params
    method.check_dimension(params.d)
    if method.mode in ("exact-1d", "exact-2d") and 2.0 * rho >= params.side:
        raise ValueError(
            f"exact volume modes require 2*rho < side (2*{rho} >= {params.side:.6g})"
        )
    if method.mode == "exact-1d":
        return _covered_length_1d(config.points, params.side, rho)
    if method.mode == "exact-2d":
        area = _covered_area_2d(config.points, params.side, rho)
        _self_check_2d(config, rho, area)
        return area
    value, _ = covered_volume_mc(config, rho, method.mc_samples)
    return value


def covered_volume_mc(
    config: PointConfiguration,
    rho: float,
    mc_samples: int,
    seed: int = 0,
    stream_index: int = 0,
) -> tuple[float, float]:
    """Stratified Monte Carlo estimate of the covered volume with its
    standard error. One equal batch of samples per grid cell."""
    if mc_samples < 1:
        raise ValueError("mc_samples must be a positive integer")
    params = config.params
    index = config.index
    cells = index.cells_per_axis
    num_cells = cells**params.d
    per_cell = max(1, math.ceil(mc_samples / num_cells))
    gen = rng.stream(seed, rng.DOMAIN_MC_VOLUME, stream_index)

    grids = np.meshgrid(*[np.arange(cells)] * params.d, indexing="ij")
    origins = np.stack([g.ravel() for g in grids], axis=-1) * index.cell_edge

    hits = np.zeros(num_cells, dtype=np.int64)
    chunk = max(1, (1 << 21) // max(num_cells, 1))
    done = 0
    while done < per_cell:
        take = min(chunk, per_cell - done)
        offsets = gen.random((num_cells, take, params.d)) * index.cell_edge
        pts = (origins[:, None, :] + offsets).reshape(-1, params.d)
        # guard the cell at the far face against side-rounding
        np.clip(pts, 0.0, np.nextafter(params.side, 0.0), out=pts)
        hit = covered_mask(config, pts, rho).reshape(num_cells, take)
        hits += hit.sum(axis=1)
        done += take
    p_cell = hits / per_cell
    total_area = float(params.n)
    estimate = total_area * float(p_cell.mean())
    var_sum = float((p_cell * (1.0 - p_cell)).sum()) / max(per_cell - 1, 1)
    stderr = total_area * math.sqrt(var_sum) / num_cells
    return estimate, stderr


def isolated_count(config: PointConfiguration, rho: float) -> int:
    """Number of points with no other point within closed distance rho."""
    i, j = pairs_within(config, rho)
    if len(i) == 0:
        return config.params.n
    crowded = np.unique(np.concatenate([i, j]))
    return config.params.n - len(crowded)


@dataclass(frozen=True)
class ReplicateBatch:
    params: ModelParams
    seed: int
    count: int
    samples_V: np.ndarray
    samples_S: np.ndarray


def _replicate_block(args) -> tuple[np.ndarray, np.ndarray]:
    params, method, seed, lo, hi = args
    v = np.empty(hi - lo)
    s = np.empty(hi - lo, dtype=np.int64)
    for k, r in enumerate(range(lo, hi)):
        config = sample_configuration(params, seed, stream_index=r)
        if method.mode == "monte-carlo":
            v[k], _ = covered_volume_mc(config, params.rho, method.mc_samples, seed, r)
        else:
            v[k] = covered_volume(config, params.rho, method)
        s[k] = isolated_count(config, params.rho)
    return v, s


def run_replicates(
    params: ModelParams,
    R: int,
    seed: int,
    method: VolumeMethod | None = None,
    parallelism: int = 1,
) -> ReplicateBatch:
    """R independent replicates of (V, S); replicate r draws from the Philox
    stream keyed by (seed, r), so the batch is identical for every
    parallelism level."""
    if R < 1:
        raise ValueError("replicate count must be >= 1")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    method = method or VolumeMethod.auto(params.d)
    method.check_dimension(params.d)

    if parallelism == 1 or R < 4:
        v, s = _replicate_block((params, method, seed, 0, R))
        return ReplicateBatch(params, seed, R, v, s)

    chunk = max(1, math.ceil(R / (parallelism * 4)))
    blocks = [
        (params, method, seed, lo, min(lo + chunk, R)) for lo in range(0, R, chunk)
    ]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        results = list(pool.map(_replicate_block, blocks))
    v = np.concatenate([r[0] for r in results])
    s = np.concatenate([r[1] for r in results])
    return ReplicateBatch(params, seed, R, v, s)


def batch_to_csv(batch: ReplicateBatch) -> str:
    """CSV with header replicate,V,S; floats carry 17 significant digits."""
    buf = io.StringIO()
    buf.write("replicate,V,S\n")
    for r in range(batch.count):
        buf.write(f"{r},{batch.samples_V[r]:.17g},{int(batch.samples_S[r])}\n")
    return buf.getvalue()


def batch_from_csv(text: str, params: ModelParams, seed: int) -> ReplicateBatch:
    rows = text.strip().splitlines()
    if not rows or rows[0] != "replicate,V,S":
        raise ValueError("expected a replicate,V,S header")
    v, s = [], []
    for row in rows[1:]:
        _, vs, ss = row.split(",")
        v.append(float(vs))
        s.append(int(ss))
    return ReplicateBatch(params, seed, len(v), np.array(v), np.array(s, dtype=np.int64))
