"""Flight planning, ground registration and AOS integral images."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, ParameterError
from .geometry import Rect
from .imaging import (BinaryAerialImage, CameraPose, fraction_to_gray, ground_sample_distance,
                      ground_to_pixel, render_pixels, write_pgm)
from .sampling import SensorConfig, ground_coverage
from .scene import Scene

MODES = ("line", "grid")
DEFAULT_CELL_M = 0.25


@dataclass(frozen=True)
class FlightPlan:
    poses: tuple
    mode: str
    spacing_m: float
    aperture_extent: Rect
    altitude_m: float

    def __len__(self):
        return len(self.poses)

    def pose_span(self) -> Rect:
        xs = [p.x for p in self.poses]
        ys = [p.y for p in self.poses]
        return Rect(min(xs), min(ys), max(xs), max(ys))

    def to_dict(self):
        return {"mode": self.mode, "spacing_m": self.spacing_m, "altitude_m": self.altitude_m,
                "aperture_extent": self.aperture_extent.to_list(), "pose_count": len(self.poses)}


def _lattice(lo, hi, step):
    span = hi - lo
    k = int(math.floor(span / step + 1e-9)) + 1
    start = lo + 0.5 * (span - (k - 1) * step)
    return start + step * np.arange(k)


def plan_flight(aperture_extent: Rect, spacing_m: float, altitude_m: float, mode="grid") -> FlightPlan:
    """Regular nadir poses with step ``spacing_m``, centered in the aperture.

    ``line`` flies along x through the aperture center; ``grid`` covers the
    rectangle row by row (x fastest).
    """
    if not spacing_m > 0:
        raise ParameterError(f"spacing_m must be > 0, got {spacing_m}")
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
    if aperture_extent.width < 0 or aperture_extent.height < 0:
        raise ParameterError("aperture extent must be non-empty")
    xs = _lattice(aperture_extent.x0, aperture_extent.x1, spacing_m)
    if mode == "line":
        cy = aperture_extent.center[1]
        poses = tuple(CameraPose(float(x), cy, float(altitude_m)) for x in xs)
    else:
        ys = _lattice(aperture_extent.y0, aperture_extent.y1, spacing_m)
        poses = tuple(CameraPose(float(x), float(y), float(altitude_m)) for y in ys for x in xs)
    return FlightPlan(poses, mode, float(spacing_m), aperture_extent, float(altitude_m))


@dataclass(frozen=True)
class GroundGrid:
    origin: tuple
    cell_m: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.cell_m > 0 or self.nx < 1 or self.ny < 1:
            raise ParameterError(f"invalid ground grid {self}")

    @classmethod
    def covering(cls, rect: Rect, cell_m: float) -> "GroundGrid":
        """Grid centered on ``rect`` whose cell centers all lie inside it."""
        nx = max(1, int(math.ceil(rect.width / cell_m - 1e-9)))
        ny = max(1, int(math.ceil(rect.height / cell_m - 1e-9)))
        cx, cy = rect.center
        return cls((cx - 0.5 * nx * cell_m, cy - 0.5 * ny * cell_m), float(cell_m), nx, ny)

    @property
    def xs(self):
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.cell_m

    @property
    def ys(self):
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.cell_m

    @property
    def shape(self):
        return (self.ny, self.nx)

    def to_dict(self):
        return {"origin": list(self.origin), "cell_m": self.cell_m, "nx": self.nx, "ny": self.ny}


@dataclass
class IntegralImage:
    grid: GroundGrid
    sum: np.ndarray    # (ny, nx) float64
    count: np.ndarray  # (ny, nx) int64
    metadata: dict = field(default_factory=dict)

    @property
    def value(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.count > 0, self.sum / np.maximum(self.count, 1), np.nan)

    @property
    def covered(self):
        return self.count > 0

    def save(self, prefix):
        """Write ``prefix.pgm`` and ``prefix.json`` (grid, plan, sensor, seed...)."""
        write_pgm(f"{prefix}.pgm", fraction_to_gray(self.value, ~self.covered))
        meta = dict(self.metadata)
        meta["grid"] = self.grid.to_dict()
        meta["pgm_rows"] = "row 0 = smallest y; zero-count cells written as 0"
        with open(f"{prefix}.json", "w", encoding="utf-8") as f:
            json.dump(meta, f, sort_keys=True, indent=1)


def empty_integral(grid: GroundGrid, **metadata) -> IntegralImage:
    return IntegralImage(grid, np.zeros(grid.shape), np.zeros(grid.shape, np.int64), dict(metadata))


def _footprint_index(pose: CameraPose, sensor: SensorConfig, grid: GroundGrid):
    """Pixel columns for grid columns and pixel rows for grid rows (-1 outside)."""
    return ground_to_pixel(pose, sensor, grid.xs, grid.ys)


def register_to_ground(image: BinaryAerialImage, grid: GroundGrid):
    """Per-cell ``(sum, count)`` contribution of one image (nearest-pixel lookup)."""
    cols, rows = _footprint_index(image.pose, image.sensor, grid)
    s = np.zeros(grid.shape)
    c = np.zeros(grid.shape, np.int64)
    kx = np.flatnonzero(cols >= 0)
    ky = np.flatnonzero(rows >= 0)
    if len(kx) and len(ky):
        block = np.ix_(ky, kx)
        s[block] = image.pixels[np.ix_(rows[ky], cols[kx])]
        c[block] = 1
    return s, c


def check_cell_size(grid: GroundGrid, altitude: float, sensor: SensorConfig):
    gsd = ground_sample_distance(altitude, sensor)
    if grid.cell_m > gsd * (1 + 1e-9):
        raise ParameterError(
            f"ground cell {grid.cell_m:.4g} m exceeds the image ground sample distance {gsd:.4g} m")
    return gsd


def integrate(scene: Scene, plan: FlightPlan, sensor: SensorConfig, grid: GroundGrid,
              metadata=None) -> IntegralImage:
    """Render every pose, register it onto ``grid`` and accumulate in plan order.

    Only pixels whose nearest-cell lookup is used by some grid cell are ray
    cast; the result equals rendering full images and calling
    :func:`register_to_ground` on each.
    """
    if not len(plan):
        raise ParameterError("flight plan has no poses")
    gsd = check_cell_size(grid, plan.altitude_m, sensor)
    out = empty_integral(grid)
    xs, ys = grid.xs, grid.ys
    for pose in plan.poses:
        cols, rows = ground_to_pixel(pose, sensor, xs, ys)
        kx = np.flatnonzero(cols >= 0)
        ky = np.flatnonzero(rows >= 0)
        if not len(kx) or not len(ky):
            continue
        # footprints are rectangles: covered grid columns/rows are contiguous
        sx = slice(kx[0], kx[-1] + 1)
        sy = slice(ky[0], ky[-1] + 1)
        ucol, inv_c = np.unique(cols[sx], return_inverse=True)
        urow, inv_r = np.unique(rows[sy], return_inverse=True)
        sub = render_pixels(scene, pose, sensor, ucol, urow)
        out.sum[sy, sx] += sub[np.ix_(inv_r, inv_c)]
        out.count[sy, sx] += 1
    out.metadata.update({
        "source": "integrate",
        "plan": plan.to_dict(),
        "sensor": {"fov_deg": sensor.fov_deg, "resolution_px": sensor.resolution_px,
                   "fov_semantics": "full angle per image axis (square frustum)"},
        "finest_gsd_m": gsd,
    })
    if metadata:
        out.metadata.update(metadata)
    return out


def aperture_for_roi(center, roi_m: float, coverage_m: float, mode="grid") -> Rect:
    """Pose aperture whose ROI (aperture shrunk by half a footprint) is ``roi_m`` wide."""
    cx, cy = center
    side = roi_m + coverage_m
    if mode == "line":
        return Rect(cx - 0.5 * side, cy, cx + 0.5 * side, cy)
    return Rect.centered(cx, cy, side)


def roi_for_plan(plan: FlightPlan, sensor: SensorConfig) -> Rect:
    """Cells whose every potential viewer is in the plan.

    Grid plans shrink the pose span by half a footprint on each side. A line
    plan has no cross-track extent, so its ROI spans one footprint across the
    line.
    """
    half = 0.5 * ground_coverage(plan.altitude_m, sensor.fov_deg)
    span = plan.pose_span()
    x0, x1 = span.x0 + half, span.x1 - half
    if plan.mode == "line":
        cy = plan.poses[0].y
        y0, y1 = cy - half, cy + half
    else:
        y0, y1 = span.y0 + half, span.y1 - half
    if x1 < x0 or y1 < y0:
        raise CoverageError("footprint_exceeds_extent: aperture narrower than one footprint")
    return Rect(x0, y0, x1, y1)


def roi_mask(grid: GroundGrid, roi: Rect, tol=1e-9):
    mx = (grid.xs >= roi.x0 - tol) & (grid.xs <= roi.x1 + tol)
    my = (grid.ys >= roi.y0 - tol) & (grid.ys <= roi.y1 + tol)
    return np.outer(my, mx)


def visibility(integral: IntegralImage, roi: Rect, return_std=False):
    """Mean integral value over the ROI cells (cell centers inside ``roi``)."""
    mask = roi_mask(integral.grid, roi)
    if not mask.any():
        raise CoverageError("ROI contains no grid cells")
    if (integral.count[mask] == 0).any():
        raise CoverageError("ROI contains cells with zero samples")
    vals = integral.sum[mask] / integral.count[mask]
    mean = float(vals.mean())
    return (mean, float(vals.std())) if return_std else mean
