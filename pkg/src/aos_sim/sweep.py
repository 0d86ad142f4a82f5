"""Factorial visibility sweeps over FOV, altitude, sampling distance and density."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .errors import AOSError, CoverageError, QueryError
from .forest import Density, TreeParams, forest_stats, generate_forest
from .geometry import Rect
from .imaging import ground_sample_distance
from .integration import GroundGrid, aperture_for_roi, integrate, plan_flight, roi_for_plan, visibility
from .sampling import SensorConfig, ground_coverage, samples_per_point
from .scene import build_scene

log = logging.getLogger(__name__)

FOOTPRINT_EXCEEDS_EXTENT = "footprint_exceeds_extent"


@dataclass(frozen=True)
class SweepConfig:
    fovs_deg: tuple = (20, 30, 40, 50, 60, 70, 80, 90)
    altitudes_m: tuple = (30, 40, 50)
    sample_dists_m: tuple = (0.5, 1.0, 1.5, 2.0)
    densities: tuple = ("sparse", "medium", "dense")
    seeds: tuple = (0, 1, 2, 3, 4)
    resolution_px: int = 512
    extent_m: float = 150.0
    mode: str = "grid"
    # upper bound; each record uses min(cell_m, finest image GSD)
    cell_m: float = 0.25
    # side of the square region of interest at the patch center
    roi_m: float = 10.0
    voxel_m: float = 0.5
    min_spacing_m: float = 2.0
    params: TreeParams = field(default_factory=TreeParams)
    workers: int = 1

    def __post_init__(self):
        for name in ("fovs_deg", "altitudes_m", "sample_dists_m", "densities", "seeds"):
            v = getattr(self, name)
            object.__setattr__(self, name, tuple(v) if not isinstance(v, (str, int, float)) else (v,))

    def validate(self):
        for name in ("fovs_deg", "altitudes_m", "sample_dists_m", "densities", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        for f in self.fovs_deg:
            SensorConfig(float(f), self.resolution_px)
        if any(not h > 0 for h in self.altitudes_m):
            raise ValueError("altitudes must be > 0")
        if any(not d > 0 for d in self.sample_dists_m):
            raise ValueError("sampling distances must be > 0")
        for d in self.densities:
            Density.parse(d)
        if self.mode not in ("line", "grid"):
            raise ValueError("mode must be line or grid")
        if not (self.extent_m > 0 and self.cell_m > 0 and self.roi_m > 0 and self.voxel_m > 0):
            raise ValueError("extent_m, cell_m, roi_m, voxel_m must be > 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        self.params.validate()
        return self

    def to_dict(self):
        d = asdict(self)
        d["params"] = self.params.to_dict()
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


@dataclass
class SweepRecord:
    density_class: str
    trees_per_ha: float
    seed: int
    fov_deg: float
    altitude_m: float
    sample_dist_m: float
    coverage_m: float
    samples_n: float
    visibility_mean: float
    visibility_std: float
    runtime_s: float
    status: str = "ok"
    reason: str = ""
    mode: str = "grid"
    resolution_px: int = 0
    cell_m: float = 0.0
    pose_count: int = 0
    h_t_m: float = float("nan")
    d_t_m: float = float("nan")

    @property
    def ok(self):
        return self.status == "ok"

    def key(self):
        return (self.trees_per_ha, self.seed, self.fov_deg, self.altitude_m, self.sample_dist_m)


RECORD_FIELDS = [f.name for f in fields(SweepRecord)]
# runtime is nondeterministic; it lives in timings.csv, not in the results table
TABLE_FIELDS = [f for f in RECORD_FIELDS if f != "runtime_s"]


def _forest_for(config: SweepConfig, density, seed):
    extent = Rect.from_size(config.extent_m)
    forest = generate_forest(seed, density, extent, config.params, config.min_spacing_m)
    return forest, build_scene(forest, config.voxel_m)


def _run_cell(config, density: Density, seed, forest, scene, stats, fov, h, d) -> SweepRecord:
    t0 = time.perf_counter()
    c = ground_coverage(h, fov)
    n = samples_per_point(c, d)
    rec = SweepRecord(density.label(), density.trees_per_ha, int(seed), float(fov), float(h), float(d),
                      c, n, float("nan"), float("nan"), 0.0, mode=config.mode,
                      resolution_px=config.resolution_px, h_t_m=stats[0], d_t_m=stats[1])
    try:
        sensor = SensorConfig(float(fov), config.resolution_px)
        extent = forest.extent
        cx, cy = extent.center
        aperture = aperture_for_roi((cx, cy), config.roi_m, c, config.mode)
        if not extent.contains_rect(aperture) or (config.mode == "line" and c > extent.height):
            raise CoverageError(FOOTPRINT_EXCEEDS_EXTENT)
        plan = plan_flight(aperture, d, h, config.mode)
        roi = roi_for_plan(plan, sensor)
        cell = min(config.cell_m, ground_sample_distance(h, sensor))
        grid = GroundGrid.covering(roi, cell)
        integral = integrate(scene, plan, sensor, grid)
        rec.visibility_mean, rec.visibility_std = visibility(integral, roi, return_std=True)
        rec.cell_m = cell
        rec.pose_count = len(plan)
    except AOSError as e:
        rec.status = "failed"
        msg = str(e)
        rec.reason = FOOTPRINT_EXCEEDS_EXTENT if FOOTPRINT_EXCEEDS_EXTENT in msg else msg
    rec.runtime_s = time.perf_counter() - t0
    return rec


def _run_group(config: SweepConfig, density, seed):
    density = Density.parse(density)
    forest, scene = _forest_for(config, density, seed)
    try:
        st = forest_stats(forest)
        stats = (st.h_t_m, st.d_t_m)
    except AOSError:
        stats = (float("nan"), float("nan"))
    out = []
    for fov in config.fovs_deg:
        for h in config.altitudes_m:
            for d in config.sample_dists_m:
                out.append(_run_cell(config, density, seed, forest, scene, stats, fov, h, d))
                log.info("%s seed=%s fov=%s h=%s d=%s -> %.4f (%s)", density.label(), seed, fov, h, d,
                         out[-1].visibility_mean, out[-1].status)
    return out


def run_sweep(config: SweepConfig) -> list:
    """One record per (density, seed, fov, altitude, d), canonically sorted."""
    config.validate()
    groups = [(dens, seed) for dens in config.densities for seed in config.seeds]
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as ex:
            chunks = list(ex.map(lambda g: _run_group(config, *g), groups))
    else:
        chunks = [_run_group(config, *g) for g in groups]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=SweepRecord.key)
    return records


# --------------------------------------------------------------------------
# analysis

def select(records, density=None, altitude_m=None, sample_dist_m=None, fov_deg=None, ok_only=True):
    out = []
    for r in records:
        if ok_only and not r.ok:
            continue
        if density is not None and r.density_class != Density.parse(density).label():
            continue
        if altitude_m is not None and not math.isclose(r.altitude_m, altitude_m):
            continue
        if sample_dist_m is not None and not math.isclose(r.sample_dist_m, sample_dist_m):
            continue
        if fov_deg is not None and not math.isclose(r.fov_deg, fov_deg):
            continue
        out.append(r)
    return out


def seed_mean(records, **filters) -> float:
    """Seed-averaged ``visibility_mean`` of the matching records."""
    sel = sorted(select(records, **filters), key=lambda r: r.seed)
    if not sel:
        raise QueryError(f"no records match {filters}")
    return sum(r.visibility_mean for r in sel) / len(sel)


def visibility_by_fov(records, density, altitude_m, sample_dist_m) -> dict:
    sel = select(records, density=density, altitude_m=altitude_m, sample_dist_m=sample_dist_m)
    fovs = sorted({r.fov_deg for r in sel})
    return {f: seed_mean(sel, fov_deg=f) for f in fovs}


def find_optimal_fov(records, density, altitude_m, sample_dist_m) -> float:
    """FOV with the highest seed-averaged visibility; ties go to the narrower FOV."""
    curve = visibility_by_fov(records, density, altitude_m, sample_dist_m)
    if not curve:
        raise QueryError(f"no records for density={density} h={altitude_m} d={sample_dist_m}")
    if len(curve) < 2:
        raise QueryError("need at least two distinct FOVs to locate an optimum")
    best_fov, best = None, -math.inf
    for f in sorted(curve):
        if curve[f] > best:
            best_fov, best = f, curve[f]
    return best_fov


def mean_forest_stats(records, density):
    sel = {r.seed: r for r in records if r.density_class == Density.parse(density).label()}
    if not sel:
        raise QueryError(f"no records for density={density}")
    rs = [sel[s] for s in sorted(sel)]
    return (sum(r.h_t_m for r in rs) / len(rs), sum(r.d_t_m for r in rs) / len(rs))


# --------------------------------------------------------------------------
# output

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_FIELDS)
    for r in records:
        d = asdict(r)
        w.writerow([_fmt(d[k]) for k in TABLE_FIELDS])
    return buf.getvalue()


def read_records(path) -> list:
    types = {f.name: f.type for f in fields(SweepRecord)}
    conv = {"str": str, "int": int, "float": float}
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            kw = {k: conv[types[k]](v) for k, v in row.items()}
            kw.setdefault("runtime_s", float("nan"))
            out.append(SweepRecord(**kw))
    return out


def write_results(records, outdir, config: SweepConfig | None = None):
    """``results.csv`` (deterministic), ``timings.csv`` and ``manifest.json``."""
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "results.csv"), "w", encoding="utf-8", newline="") as f:
        f.write(records_to_csv(records))
    with open(os.path.join(outdir, "timings.csv"), "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["density_class", "seed", "fov_deg", "altitude_m", "sample_dist_m", "runtime_s"])
        for r in records:
            w.writerow([r.density_class, r.seed, r.fov_deg, r.altitude_m, r.sample_dist_m, f"{r.runtime_s:.3f}"])
    if config is not None:
        write_manifest(os.path.join(outdir, "manifest.json"), {"sweep": config.to_dict()})


def write_manifest(path, payload: dict):
    import numba
    manifest = {
        "tool": "aos_sim", "version": __version__,
        "python": platform.python_version(), "numpy": np.__version__, "numba": numba.__version__,
        "rng": "numpy PCG64 via default_rng(seed)",
        "fov_semantics": "full angle per image axis (square frustum)",
    }
    manifest.update(payload)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)


def plot_results(records, outdir):
    """Visibility vs FOV (one panel per altitude) and visibility vs n."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ok = [r for r in records if r.ok]
    if not ok:
        return []
    densities = sorted({(r.trees_per_ha, r.density_class) for r in ok})
    alts = sorted({r.altitude_m for r in ok})
    dists = sorted({r.sample_dist_m for r in ok})
    paths = []

    fig, axes = plt.subplots(len(densities), len(alts), figsize=(4 * len(alts), 3 * len(densities)),
                             squeeze=False, sharey="row")
    for i, (_, dens) in enumerate(densities):
        for j, h in enumerate(alts):
            ax = axes[i][j]
            for d in dists:
                curve = visibility_by_fov(ok, dens, h, d)
                if not curve:
                    continue
                xs = sorted(curve)
                ax.plot(xs, [curve[x] for x in xs], marker=".", label=f"d={d:g} m")
                if len(xs) >= 2:
                    best = find_optimal_fov(ok, dens, h, d)
                    ax.plot([best], [curve[best]], "k*", ms=9)
            ax.set_title(f"{dens}, h={h:g} m")
            ax.set_xlabel("FOV [deg]")
            ax.set_ylabel("visibility")
            ax.grid(alpha=0.3)
    axes[0][0].legend(fontsize=7)
    fig.tight_layout()
    p = os.path.join(outdir, "visibility_vs_fov.png")
    fig.savefig(p, dpi=110)
    plt.close(fig)
    paths.append(p)

    h0 = alts[0]
    fovs = sorted({r.fov_deg for r in ok})
    fig, axes = plt.subplots(1, len(densities), figsize=(4.5 * len(densities), 3.5), squeeze=False)
    for i, (_, dens) in enumerate(densities):
        ax = axes[0][i]
        for fov in fovs:
            pts = []
            for d in dists:
                sel = select(ok, density=dens, altitude_m=h0, sample_dist_m=d, fov_deg=fov)
                if sel:
                    pts.append((sel[0].samples_n, seed_mean(sel)))
            if pts:
                pts.sort()
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"{fov:g} deg")
        ax.set_xscale("log")
        ax.set_title(f"{dens}, h={h0:g} m")
        ax.set_xlabel("samples per point n = c/d")
        ax.set_ylabel("visibility")
        ax.grid(alpha=0.3)
    axes[0][0].legend(fontsize=7)
    fig.tight_layout()
    p = os.path.join(outdir, "visibility_vs_n.png")
    fig.savefig(p, dpi=110)
    plt.close(fig)
    paths.append(p)
    return paths

