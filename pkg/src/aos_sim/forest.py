"""Seeded procedural trees and forest patches.

Trees are a simplified ProcTree analog: one trunk cylinder, a few generations
of branch cylinders, and opaque leaf discs on the terminal branches. Geometry
is stored in tree-local coordinates (trunk base at the origin); the forest
keeps one ground position per tree.

Primitive rows are 7 floats:

* cylinder: ``x0 y0 z0 x1 y1 z1 radius`` (axis end points, capped)
* disc:     ``cx cy cz nx ny nz radius`` (unit normal)
"""
from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParameterError, StatsError
from .geometry import Rect
from .sampling import ForestStats

FORMAT_VERSION = 1

DENSITY_CLASSES = {"sparse": 133.0, "medium": 266.0, "dense": 400.0}

CONIFER = "conifer"
BROADLEAF = "broadleaf"


@dataclass(frozen=True)
class TreeParams:
    height_range_m: tuple = (20.0, 25.0)
    trunk_length_range_m: tuple = (4.0, 8.0)
    trunk_radius_range_m: tuple = (0.20, 0.50)
    leaf_size_range_m: tuple = (0.05, 0.20)
    branch_levels: int = 2
    branches_per_level: int = 6
    leaves_per_branch: int = 100
    # broadleaf crown radius / crown height; conifers scale it by conifer_crown_ratio
    crown_radius_fraction: float = 0.3
    conifer_crown_ratio: float = 0.5
    conifer_probability: float = 0.5
    # radius of the ball around a terminal branch in which its leaves scatter
    leaf_spread_m: float = 0.6

    def __post_init__(self):
        # normalise lists coming from JSON into tuples so params stay hashable
        for name in ("height_range_m", "trunk_length_range_m", "trunk_radius_range_m", "leaf_size_range_m"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    def validate(self):
        for name in ("height_range_m", "trunk_length_range_m", "trunk_radius_range_m", "leaf_size_range_m"):
            rng = getattr(self, name)
            if len(rng) != 2:
                raise ParameterError(f"{name} must be a [min, max] pair")
            lo, hi = rng
            if not (lo > 0 and hi > 0):
                raise ParameterError(f"{name} must be positive, got {rng}")
            if lo > hi:
                raise ParameterError(f"{name} has min > max: {rng}")
        if self.trunk_length_range_m[1] >= self.height_range_m[0]:
            raise ParameterError("trunk_length_range_m max must be below height_range_m min")
        for name in ("branch_levels", "branches_per_level", "leaves_per_branch"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ParameterError(f"{name} must be a non-negative integer, got {v}")
        if self.branches_per_level == 0 and self.branch_levels > 0:
            raise ParameterError("branches_per_level must be > 0 when branch_levels > 0")
        if not self.crown_radius_fraction > 0 or not self.conifer_crown_ratio > 0:
            raise ParameterError("crown fractions must be positive")
        if not 0.0 <= self.conifer_probability <= 1.0:
            raise ParameterError("conifer_probability must be in [0, 1]")
        if self.leaf_spread_m < 0:
            raise ParameterError("leaf_spread_m must be >= 0")
        return self

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TreeGeometry:
    species: str
    height_m: float
    trunk_length_m: float
    trunk_radius_m: float
    leaf_size_m: float
    crown_radius_m: float
    trunk: np.ndarray      # (7,)
    branches: np.ndarray   # (k, 7) cylinders
    leaves: np.ndarray     # (m, 7) discs

    @property
    def cylinders(self):
        return np.vstack([self.trunk[None, :], self.branches])

    @property
    def primitive_count(self):
        return 1 + len(self.branches) + len(self.leaves)


@dataclass
class PlacedTree:
    x: float
    y: float
    seed: int
    geometry: TreeGeometry


@dataclass(frozen=True)
class Density:
    name: str
    trees_per_ha: float

    @classmethod
    def parse(cls, value) -> "Density":
        if isinstance(value, Density):
            return value
        if isinstance(value, str):
            key = value.strip().lower()
            if key in DENSITY_CLASSES:
                return cls(key, DENSITY_CLASSES[key])
            if key.startswith("custom(") and key.endswith(")"):
                value = float(key[7:-1])
            else:
                try:
                    value = float(key)
                except ValueError:
                    raise ParameterError(f"unknown density {value!r}") from None
        tph = float(value)
        if not tph >= 0 or math.isinf(tph):
            raise ParameterError(f"density must be >= 0 trees/ha, got {value}")
        return cls("custom", tph)

    def label(self):
        return self.name if self.name != "custom" else f"custom({self.trees_per_ha:g})"


@dataclass
class Forest:
    extent: Rect
    trees: list
    seed: int
    density: Density
    params: TreeParams = field(default_factory=TreeParams)
    min_spacing_m: float = 2.0

    @property
    def positions(self):
        return np.array([(t.x, t.y) for t in self.trees], dtype=float).reshape(-1, 2)

    @property
    def area_ha(self):
        return self.extent.area / 10_000.0

    def to_dict(self):
        return {
            "format": "aos-forest",
            "version": FORMAT_VERSION,
            "seed": int(self.seed),
            "density": {"name": self.density.name, "trees_per_ha": self.density.trees_per_ha},
            "extent": self.extent.to_list(),
            "min_spacing_m": self.min_spacing_m,
            "params": self.params.to_dict(),
            "primitive_layout": {"cylinder": "x0 y0 z0 x1 y1 z1 radius",
                                 "disc": "cx cy cz nx ny nz radius"},
            "trees": [_tree_to_dict(t) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "aos-forest":
            raise ParameterError("not an aos-forest document")
        dens = d["density"]
        return cls(
            extent=Rect.from_list(d["extent"]),
            trees=[_tree_from_dict(t) for t in d["trees"]],
            seed=int(d["seed"]),
            density=Density(dens["name"], float(dens["trees_per_ha"])),
            params=TreeParams.from_dict(d["params"]),
            min_spacing_m=float(d["min_spacing_m"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Forest":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"dtype": "<f8", "shape": list(a.shape), "base64": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    buf = base64.b64decode(d["base64"])
    return np.frombuffer(buf, dtype=d["dtype"]).reshape(d["shape"]).astype(float)


def _tree_to_dict(t: PlacedTree):
    g = t.geometry
    return {
        "x": t.x, "y": t.y, "seed": int(t.seed),
        "species": g.species, "height_m": g.height_m, "trunk_length_m": g.trunk_length_m,
        "trunk_radius_m": g.trunk_radius_m, "leaf_size_m": g.leaf_size_m,
        "crown_radius_m": g.crown_radius_m,
        "trunk": [float(v) for v in g.trunk],
        "branches": encode_array(g.branches),
        "leaves": encode_array(g.leaves),
    }


def _tree_from_dict(d) -> PlacedTree:
    g = TreeGeometry(
        species=d["species"], height_m=d["height_m"], trunk_length_m=d["trunk_length_m"],
        trunk_radius_m=d["trunk_radius_m"], leaf_size_m=d["leaf_size_m"],
        crown_radius_m=d["crown_radius_m"], trunk=np.array(d["trunk"], dtype=float),
        branches=decode_array(d["branches"]).reshape(-1, 7),
        leaves=decode_array(d["leaves"]).reshape(-1, 7),
    )
    return PlacedTree(float(d["x"]), float(d["y"]), int(d["seed"]), g)


# --------------------------------------------------------------------------
# tree generation

def _crown_envelope(species, z, trunk_len, height, crown_r):
    """Maximal radial distance from the trunk axis at height ``z``."""
    hc = height - trunk_len
    z = np.clip(z, trunk_len, height)
    if species == CONIFER:
        return crown_r * (height - z) / hc
    zc = trunk_len + 0.5 * hc
    q = (z - zc) / (0.5 * hc)
    return crown_r * np.sqrt(np.maximum(0.0, 1.0 - q * q))


def _clamp_into_crown(pts, margin, species, trunk_len, height, crown_r):
    """Pull points into the crown envelope, keeping ``margin`` clearance."""
    pts = pts.copy()
    pts[:, 2] = np.clip(pts[:, 2], trunk_len + margin, height)
    rmax = np.maximum(_crown_envelope(species, pts[:, 2], trunk_len, height, crown_r) - margin, 0.0)
    rad = np.hypot(pts[:, 0], pts[:, 1])
    over = rad > rmax
    scale = np.where(over, rmax / np.where(rad > 0, rad, 1.0), 1.0)
    pts[:, 0] *= scale
    pts[:, 1] *= scale
    return pts


def _unit_vectors(rng, n):
    v = rng.normal(size=(n, 3))
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    v = v / norm
    # exact zero vectors are astronomically unlikely; fall back to +z
    v[np.all(v == 0, axis=1)] = (0.0, 0.0, 1.0)
    return v


def _directions(azimuth, elevation):
    ce = np.cos(elevation)
    return np.stack([ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)], axis=1)


def generate_tree(seed: int, params: TreeParams = TreeParams()) -> TreeGeometry:
    """Deterministically grow one tree from ``seed``."""
    params.validate()
    rng = np.random.default_rng(seed)
    species = CONIFER if rng.random() < params.conifer_probability else BROADLEAF
    height = float(rng.uniform(*params.height_range_m))
    trunk_len = float(rng.uniform(*params.trunk_length_range_m))
    trunk_r = float(rng.uniform(*params.trunk_radius_range_m))
    leaf_size = float(rng.uniform(*params.leaf_size_range_m))
    crown_h = height - trunk_len
    crown_r = params.crown_radius_fraction * crown_h
    if species == CONIFER:
        crown_r *= params.conifer_crown_ratio
    crown_r = max(crown_r, 2.0 * trunk_r, leaf_size)

    trunk = np.array([0.0, 0.0, 0.0, 0.0, 0.0, trunk_len, trunk_r])
    branches = []
    terminal = np.empty((0, 7))

    if params.branch_levels > 0:
        leader_r = 0.5 * trunk_r
        branches.append(np.array([[0.0, 0.0, trunk_len, 0.0, 0.0, height, leader_r]]))

        k = params.branches_per_level
        # level 1: scaffold branches off the leader
        if species == CONIFER:
            z_a = trunk_len + crown_h * rng.uniform(0.0, 0.85, k)
            elev = np.radians(rng.uniform(-20.0, 10.0, k))
        else:
            z_a = trunk_len + crown_h * rng.uniform(0.1, 0.8, k)
            elev = np.radians(rng.uniform(20.0, 60.0, k))
        azim = rng.uniform(0.0, 2 * np.pi, k)
        reach = _crown_envelope(species, z_a, trunk_len, height, crown_r) * rng.uniform(0.6, 1.0, k)
        length = np.maximum(reach, 0.3) / np.cos(elev)
        radius = np.full(k, 0.3 * trunk_r)
        start = np.stack([np.zeros(k), np.zeros(k), z_a], axis=1)
        end = start + _directions(azim, elev) * length[:, None]
        end = _clamp_into_crown(end, radius, species, trunk_len, height, crown_r)
        level = np.hstack([start, end, radius[:, None]])
        branches.append(level)
        parent_az, parent_len = azim, length

        for _ in range(1, params.branch_levels):
            m = len(level) * k
            par = np.repeat(np.arange(len(level)), k)
            t = rng.uniform(0.3, 1.0, m)
            start = level[par, :3] + t[:, None] * (level[par, 3:6] - level[par, :3])
            azim = parent_az[par] + np.radians(rng.uniform(-70.0, 70.0, m))
            if species == CONIFER:
                elev = np.radians(rng.uniform(-30.0, 20.0, m))
            else:
                elev = np.radians(rng.uniform(-10.0, 50.0, m))
            length = parent_len[par] * rng.uniform(0.3, 0.6, m)
            radius = 0.5 * level[par, 6]
            end = start + _directions(azim, elev) * length[:, None]
            end = _clamp_into_crown(end, radius, species, trunk_len, height, crown_r)
            start = _clamp_into_crown(start, radius, species, trunk_len, height, crown_r)
            level = np.hstack([start, end, radius[:, None]])
            branches.append(level)
            parent_az, parent_len = azim, length
        terminal = level

    leaves = np.empty((0, 7))
    if len(terminal) and params.leaves_per_branch > 0:
        m = len(terminal) * params.leaves_per_branch
        par = np.repeat(np.arange(len(terminal)), params.leaves_per_branch)
        t = rng.uniform(0.0, 1.0, m)
        centers = terminal[par, :3] + t[:, None] * (terminal[par, 3:6] - terminal[par, :3])
        offset = _unit_vectors(rng, m) * (params.leaf_spread_m * np.cbrt(rng.uniform(0.0, 1.0, m)))[:, None]
        centers = centers + offset
        leaf_r = 0.5 * leaf_size
        centers = _clamp_into_crown(centers, np.full(m, leaf_r), species, trunk_len, height, crown_r)
        normals = _unit_vectors(rng, m)
        leaves = np.hstack([centers, normals, np.full((m, 1), leaf_r)])

    branch_arr = np.vstack(branches) if branches else np.empty((0, 7))
    return TreeGeometry(species, height, trunk_len, trunk_r, leaf_size, crown_r,
                        trunk, branch_arr, leaves)


# --------------------------------------------------------------------------
# forest generation

def tree_count(trees_per_ha: float, extent: Rect) -> int:
    """Round-half-up of the expected number of trees."""
    return int(math.floor(trees_per_ha * extent.area / 10_000.0 + 0.5))


def place_trees(rng, count, extent: Rect, min_spacing_m=2.0, max_attempts=10_000):
    """Dart throwing: uniform candidates, rejected when closer than ``min_spacing_m``."""
    pts = []
    if count == 0:
        return np.empty((0, 2))
    cell = min_spacing_m / math.sqrt(2.0) if min_spacing_m > 0 else max(extent.width, extent.height)
    buckets = {}
    r2 = min_spacing_m * min_spacing_m
    reach = 2
    while len(pts) < count:
        for _ in range(max_attempts):
            x = float(rng.uniform(extent.x0, extent.x1))
            y = float(rng.uniform(extent.y0, extent.y1))
            ci, cj = int(math.floor((x - extent.x0) / cell)), int(math.floor((y - extent.y0) / cell))
            ok = True
            for di in range(-reach, reach + 1):
                for dj in range(-reach, reach + 1):
                    for k in buckets.get((ci + di, cj + dj), ()):
                        px, py = pts[k]
                        if (px - x) ** 2 + (py - y) ** 2 < r2:
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    break
            if ok:
                buckets.setdefault((ci, cj), []).append(len(pts))
                pts.append((x, y))
                break
        else:
            raise ParameterError(
                f"could not place tree {len(pts) + 1}/{count} with spacing {min_spacing_m} m "
                f"after {max_attempts} attempts")
    return np.array(pts)


def generate_forest(seed: int, density="sparse", extent: Rect = Rect.from_size(150.0),
                    params: TreeParams = TreeParams(), min_spacing_m: float = 2.0) -> Forest:
    density = Density.parse(density)
    if extent.is_empty:
        raise ParameterError("forest extent must have positive area")
    params.validate()
    rng = np.random.default_rng(seed)
    n = tree_count(density.trees_per_ha, extent)
    xy = place_trees(rng, n, extent, min_spacing_m)
    seeds = rng.integers(0, 2 ** 63 - 1, size=n, dtype=np.int64) if n else []
    trees = [PlacedTree(float(x), float(y), int(s), generate_tree(int(s), params))
             for (x, y), s in zip(xy, seeds)]
    return Forest(extent, trees, int(seed), density, params, float(min_spacing_m))


def forest_stats(forest: Forest) -> ForestStats:
    """Mean trunk length and mean nearest-neighbour trunk distance."""
    n = len(forest.trees)
    if n < 2:
        raise StatsError(f"forest_stats needs at least 2 trees, got {n}")
    xy = forest.positions
    _, idx = cKDTree(xy).query(xy, k=2)
    nn = idx[:, 1]
    dx = xy[nn, 0] - xy[:, 0]
    dy = xy[nn, 1] - xy[:, 1]
    dist = np.sqrt(dx * dx + dy * dy)
    total = 0.0
    for v in dist.tolist():
        total += v
    d_t = total / n
    h_sum = 0.0
    for t in forest.trees:
        h_sum += t.geometry.trunk_length_m
    return ForestStats(h_t_m=h_sum / n, d_t_m=d_t, trees_per_ha=n / forest.area_ha)
