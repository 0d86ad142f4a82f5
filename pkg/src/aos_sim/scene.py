"""Ray-queryable forest scene: analytic cylinders and discs in a uniform voxel grid.

Segment queries are any-hit: a segment is occluded when some primitive
intersects its interior, with both end points inset by ``EPS``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .geometry import Rect

EPS = 1e-4
KIND_CYLINDER = 0
KIND_DISC = 1
DEFAULT_VOXEL_M = 0.75


@dataclass(frozen=True)
class Ray:
    origin: tuple
    direction: tuple
    t_max: float

    @classmethod
    def between(cls, a, b):
        a = np.asarray(a, float)
        d = np.asarray(b, float) - a
        n = float(np.linalg.norm(d))
        if n == 0:
            raise ValueError("degenerate segment")
        return cls(tuple(a), tuple(d / n), n)


@dataclass(frozen=True)
class Scene:
    """Flattened primitives plus CSR voxel lists. Treat as immutable."""

    prims: np.ndarray       # (N, 7)
    kinds: np.ndarray       # (N,) int8
    tree_ids: np.ndarray    # (N,) int32, owning tree
    bounds: np.ndarray      # (6,) xmin ymin zmin xmax ymax zmax of the voxel grid
    voxel_m: float
    dims: np.ndarray        # (3,) int64
    cell_start: np.ndarray  # (ncells + 1,) int64
    cell_items: np.ndarray  # int32
    extent: Rect
    top_z: float = 0.0
    ground_z: float = 0.0

    @property
    def primitive_count(self):
        return len(self.prims)

    def occluded(self, a, b) -> bool:
        return occluded(self, a, b)


# --------------------------------------------------------------------------
# bounds and index construction

def _prim_bounds(prims, kinds):
    """Axis-aligned bounds (N, 6) of every primitive."""
    out = np.empty((len(prims), 6))
    cyl = kinds == KIND_CYLINDER
    if cyl.any():
        p0, p1, r = prims[cyl, 0:3], prims[cyl, 3:6], prims[cyl, 6:7]
        axis = p1 - p0
        ln = np.linalg.norm(axis, axis=1, keepdims=True)
        w = np.divide(axis, ln, out=np.zeros_like(axis), where=ln > 0)
        ext = r * np.sqrt(np.clip(1.0 - w * w, 0.0, 1.0))
        # zero-length axis degenerates to a flat disc along z: use full radius
        ext = np.where(ln > 0, ext, r)
        out[cyl, 0:3] = np.minimum(p0, p1) - ext
        out[cyl, 3:6] = np.maximum(p0, p1) + ext
    dsc = ~cyl
    if dsc.any():
        c, n, r = prims[dsc, 0:3], prims[dsc, 3:6], prims[dsc, 6:7]
        ext = r * np.sqrt(np.clip(1.0 - n * n, 0.0, 1.0))
        out[dsc, 0:3] = c - ext
        out[dsc, 3:6] = c + ext
    return out


@nb.njit(cache=True)
def _fill_cells(lo_idx, hi_idx, dims):
    nx, ny, nz = dims[0], dims[1], dims[2]
    ncell = nx * ny * nz
    counts = np.zeros(ncell + 1, np.int64)
    n = lo_idx.shape[0]
    for p in range(n):
        for i in range(lo_idx[p, 0], hi_idx[p, 0] + 1):
            for j in range(lo_idx[p, 1], hi_idx[p, 1] + 1):
                for k in range(lo_idx[p, 2], hi_idx[p, 2] + 1):
                    counts[(i * ny + j) * nz + k + 1] += 1
    for c in range(ncell):
        counts[c + 1] += counts[c]
    items = np.empty(counts[ncell], np.int32)
    cursor = counts[:-1].copy()
    for p in range(n):
        for i in range(lo_idx[p, 0], hi_idx[p, 0] + 1):
            for j in range(lo_idx[p, 1], hi_idx[p, 1] + 1):
                for k in range(lo_idx[p, 2], hi_idx[p, 2] + 1):
                    c = (i * ny + j) * nz + k
                    items[cursor[c]] = p
                    cursor[c] += 1
    return counts, items


def scene_from_primitives(prims, kinds, extent: Rect | None = None, voxel_m=DEFAULT_VOXEL_M,
                          tree_ids=None) -> Scene:
    prims = np.ascontiguousarray(prims, dtype=np.float64).reshape(-1, 7)
    kinds = np.ascontiguousarray(kinds, dtype=np.int8).reshape(-1)
    if tree_ids is None:
        tree_ids = np.zeros(len(prims), np.int32)
    if extent is None:
        extent = Rect(0.0, 0.0, 0.0, 0.0)
    if len(prims) == 0:
        return Scene(prims, kinds, np.asarray(tree_ids, np.int32), np.zeros(6), voxel_m,
                     np.ones(3, np.int64), np.zeros(2, np.int64), np.empty(0, np.int32), extent)
    pb = _prim_bounds(prims, kinds)
    lo = pb[:, :3].min(axis=0) - 1e-6
    hi = pb[:, 3:].max(axis=0) + 1e-6
    dims = np.maximum(np.ceil((hi - lo) / voxel_m).astype(np.int64), 1)
    hi = lo + dims * voxel_m
    lo_idx = np.clip(np.floor((pb[:, :3] - lo) / voxel_m).astype(np.int64), 0, dims - 1)
    hi_idx = np.clip(np.floor((pb[:, 3:] - lo) / voxel_m).astype(np.int64), 0, dims - 1)
    start, items = _fill_cells(lo_idx, hi_idx, dims)
    return Scene(prims, kinds, np.asarray(tree_ids, np.int32), np.concatenate([lo, hi]),
                 float(voxel_m), dims, start, items, extent, float(pb[:, 5].max()))


def build_scene(forest, voxel_m=DEFAULT_VOXEL_M) -> Scene:
    """Flatten a forest's trees into world-space primitives and index them."""
    blocks, kinds, ids = [], [], []
    for tid, t in enumerate(forest.trees):
        g = t.geometry
        cyl = g.cylinders.copy()
        cyl[:, [0, 3]] += t.x
        cyl[:, [1, 4]] += t.y
        leaves = g.leaves.copy()
        leaves[:, 0] += t.x
        leaves[:, 1] += t.y
        blocks += [cyl, leaves]
        kinds += [np.full(len(cyl), KIND_CYLINDER, np.int8), np.full(len(leaves), KIND_DISC, np.int8)]
        ids.append(np.full(len(cyl) + len(leaves), tid, np.int32))
    if blocks:
        prims, kinds_arr, ids_arr = np.vstack(blocks), np.concatenate(kinds), np.concatenate(ids)
    else:
        prims, kinds_arr, ids_arr = np.empty((0, 7)), np.empty(0, np.int8), np.empty(0, np.int32)
    return scene_from_primitives(prims, kinds_arr, forest.extent, voxel_m, ids_arr)


# --------------------------------------------------------------------------
# intersection kernels

@nb.njit(cache=True, nogil=True, inline="always")
def _hit_disc(p, ox, oy, oz, ux, uy, uz, t_lo, t_hi):
    nx, ny, nz = p[3], p[4], p[5]
    den = nx * ux + ny * uy + nz * uz
    if abs(den) < 1e-12:
        return False
    t = (nx * (p[0] - ox) + ny * (p[1] - oy) + nz * (p[2] - oz)) / den
    if t <= t_lo or t >= t_hi:
        return False
    qx = ox + t * ux - p[0]
    qy = oy + t * uy - p[1]
    qz = oz + t * uz - p[2]
    return qx * qx + qy * qy + qz * qz <= p[6] * p[6]


@nb.njit(cache=True, nogil=True, inline="always")
def _hit_cylinder(p, ox, oy, oz, ux, uy, uz, t_lo, t_hi):
    # solid capped cylinder: parameter interval inside the infinite cylinder
    # intersected with the axial slab, then with (t_lo, t_hi)
    ax, ay, az = p[3] - p[0], p[4] - p[1], p[5] - p[2]
    ln = np.sqrt(ax * ax + ay * ay + az * az)
    r = p[6]
    mx, my, mz = ox - p[0], oy - p[1], oz - p[2]
    if ln == 0.0:
        return False
    wx, wy, wz = ax / ln, ay / ln, az / ln
    mw = mx * wx + my * wy + mz * wz
    uw = ux * wx + uy * wy + uz * wz
    # axial slab 0 <= mw + t*uw <= ln
    lo, hi = t_lo, t_hi
    if abs(uw) < 1e-15:
        if mw < 0.0 or mw > ln:
            return False
    else:
        s0 = -mw / uw
        s1 = (ln - mw) / uw
        if s0 > s1:
            s0, s1 = s1, s0
        if s0 > lo:
            lo = s0
        if s1 < hi:
            hi = s1
        if lo >= hi:
            return False
    # radial: |m_perp + t u_perp|^2 <= r^2
    px, py, pz = mx - mw * wx, my - mw * wy, mz - mw * wz
    dx, dy, dz = ux - uw * wx, uy - uw * wy, uz - uw * wz
    a = dx * dx + dy * dy + dz * dz
    b = px * dx + py * dy + pz * dz
    c = px * px + py * py + pz * pz - r * r
    if a < 1e-18:
        return c <= 0.0
    disc = b * b - a * c
    if disc < 0.0:
        return False
    sq = np.sqrt(disc)
    r0 = (-b - sq) / a
    r1 = (-b + sq) / a
    if r0 > lo:
        lo = r0
    if r1 < hi:
        hi = r1
    return lo <= hi


@nb.njit(cache=True, nogil=True, inline="always")
def _hit_prim(prims, kinds, k, ox, oy, oz, ux, uy, uz, t_lo, t_hi):
    if kinds[k] == 0:
        return _hit_cylinder(prims[k], ox, oy, oz, ux, uy, uz, t_lo, t_hi)
    return _hit_disc(prims[k], ox, oy, oz, ux, uy, uz, t_lo, t_hi)


@nb.njit(cache=True, nogil=True)
def _segment_blocked(ax, ay, az, bx, by, bz, prims, kinds, bounds, voxel, dims, start, items):
    dx, dy, dz = bx - ax, by - ay, bz - az
    T = np.sqrt(dx * dx + dy * dy + dz * dz)
    t_lo = EPS
    t_hi = T - EPS
    if t_hi <= t_lo or items.shape[0] == 0:
        return False
    ux, uy, uz = dx / T, dy / T, dz / T
    o = (ax, ay, az)
    u = (ux, uy, uz)
    # clip to the grid box
    t0, t1 = t_lo, t_hi
    for k in range(3):
        if abs(u[k]) < 1e-15:
            if o[k] < bounds[k] or o[k] > bounds[k + 3]:
                return False
        else:
            a = (bounds[k] - o[k]) / u[k]
            b = (bounds[k + 3] - o[k]) / u[k]
            if a > b:
                a, b = b, a
            if a > t0:
                t0 = a
            if b < t1:
                t1 = b
    if t0 > t1:
        return False
    nx, ny, nz = dims[0], dims[1], dims[2]
    tm = t0
    ix = min(max(int(np.floor((ax + tm * ux - bounds[0]) / voxel)), 0), nx - 1)
    iy = min(max(int(np.floor((ay + tm * uy - bounds[1]) / voxel)), 0), ny - 1)
    iz = min(max(int(np.floor((az + tm * uz - bounds[2]) / voxel)), 0), nz - 1)
    # 3D DDA
    inf = 1e300
    if ux > 0:
        sx, tnx, tdx = 1, (bounds[0] + (ix + 1) * voxel - ax) / ux, voxel / ux
    elif ux < 0:
        sx, tnx, tdx = -1, (bounds[0] + ix * voxel - ax) / ux, -voxel / ux
    else:
        sx, tnx, tdx = 0, inf, inf
    if uy > 0:
        sy, tny, tdy = 1, (bounds[1] + (iy + 1) * voxel - ay) / uy, voxel / uy
    elif uy < 0:
        sy, tny, tdy = -1, (bounds[1] + iy * voxel - ay) / uy, -voxel / uy
    else:
        sy, tny, tdy = 0, inf, inf
    if uz > 0:
        sz, tnz, tdz = 1, (bounds[2] + (iz + 1) * voxel - az) / uz, voxel / uz
    elif uz < 0:
        sz, tnz, tdz = -1, (bounds[2] + iz * voxel - az) / uz, -voxel / uz
    else:
        sz, tnz, tdz = 0, inf, inf
    while True:
        c = (ix * ny + iy) * nz + iz
        for q in range(start[c], start[c + 1]):
            if _hit_prim(prims, kinds, items[q], ax, ay, az, ux, uy, uz, t_lo, t_hi):
                return True
        if tnx <= tny and tnx <= tnz:
            if tnx > t1:
                return False
            ix += sx
            tnx += tdx
            if ix < 0 or ix >= nx:
                return False
        elif tny <= tnz:
            if tny > t1:
                return False
            iy += sy
            tny += tdy
            if iy < 0 or iy >= ny:
                return False
        else:
            if tnz > t1:
                return False
            iz += sz
            tnz += tdz
            if iz < 0 or iz >= nz:
                return False


@nb.njit(cache=True, nogil=True)
def _cast_from_point(origin, targets, prims, kinds, bounds, voxel, dims, start, items, out):
    for m in range(targets.shape[0]):
        out[m] = _segment_blocked(origin[0], origin[1], origin[2],
                                  targets[m, 0], targets[m, 1], targets[m, 2],
                                  prims, kinds, bounds, voxel, dims, start, items)


@nb.njit(cache=True, nogil=True)
def _cast_pairs(a, b, prims, kinds, bounds, voxel, dims, start, items, out):
    for m in range(a.shape[0]):
        out[m] = _segment_blocked(a[m, 0], a[m, 1], a[m, 2], b[m, 0], b[m, 1], b[m, 2],
                                  prims, kinds, bounds, voxel, dims, start, items)


@nb.njit(cache=True, nogil=True)
def _cast_pairs_linear(a, b, prims, kinds, out):
    for m in range(a.shape[0]):
        dx, dy, dz = b[m, 0] - a[m, 0], b[m, 1] - a[m, 1], b[m, 2] - a[m, 2]
        T = np.sqrt(dx * dx + dy * dy + dz * dz)
        hit = False
        if T - EPS > EPS:
            ux, uy, uz = dx / T, dy / T, dz / T
            for k in range(prims.shape[0]):
                if _hit_prim(prims, kinds, k, a[m, 0], a[m, 1], a[m, 2], ux, uy, uz, EPS, T - EPS):
                    hit = True
                    break
        out[m] = hit


def _index_args(scene: Scene):
    return (scene.prims, scene.kinds, scene.bounds, scene.voxel_m, scene.dims,
            scene.cell_start, scene.cell_items)


def occluded_many(scene: Scene, a, b) -> np.ndarray:
    """Vectorised :func:`occluded` for paired end points (M, 3)."""
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 3)
    a, b = np.broadcast_arrays(a, b)
    out = np.zeros(len(a), np.bool_)
    if len(scene.prims) and len(a):
        _cast_pairs(np.ascontiguousarray(a), np.ascontiguousarray(b), *_index_args(scene), out)
    return out


def occluded_from(scene: Scene, origin, targets) -> np.ndarray:
    """Occlusion of the segments from one ``origin`` to every row of ``targets``."""
    targets = np.ascontiguousarray(targets, dtype=np.float64).reshape(-1, 3)
    out = np.zeros(len(targets), np.bool_)
    if len(scene.prims) and len(targets):
        _cast_from_point(np.asarray(origin, np.float64), targets, *_index_args(scene), out)
    return out


def occluded_linear(scene: Scene, a, b) -> np.ndarray:
    """Exhaustive scan over all primitives; reference for the voxel index."""
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 3)
    out = np.zeros(len(a), np.bool_)
    if len(scene.prims) and len(a):
        _cast_pairs_linear(a, b, scene.prims, scene.kinds, out)
    return out


def occluded(scene: Scene, a, b) -> bool:
    """True iff some primitive intersects the open segment ``(a, b)``."""
    return bool(occluded_many(scene, [a], [b])[0])
