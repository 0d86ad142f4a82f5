"""Brute-force ground truth: per-point sight-line fractions, no images involved.

Only the segment occlusion query is shared with the imaging pipeline; the
footprint test and accumulation are written out independently here.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import CoverageError, ParameterError
from .integration import FlightPlan, GroundGrid, IntegralImage
from .sampling import SensorConfig
from .scene import Scene, occluded_from


def _half_tan(sensor: SensorConfig):
    return math.tan(math.radians(sensor.fov_deg / 2.0))


def _sees(pose, half_tan, x, y):
    reach = pose.h * half_tan
    return (np.abs(np.asarray(x) - pose.x) <= reach) & (np.abs(np.asarray(y) - pose.y) <= reach)


def point_visibility(scene: Scene, ground_point, poses, sensor: SensorConfig) -> float:
    """Fraction of covering poses with a clear sight line to ``ground_point``."""
    if not len(poses):
        raise ParameterError("no poses")
    x, y = ground_point
    t = _half_tan(sensor)
    seen = clear = 0
    target = np.array([[x, y, scene.ground_z]])
    for p in poses:
        if not _sees(p, t, x, y):
            continue
        seen += 1
        if not occluded_from(scene, p.position, target)[0]:
            clear += 1
    if seen == 0:
        raise CoverageError(f"ground point {ground_point} lies outside every footprint")
    return clear / seen


def oracle_integral(scene: Scene, plan: FlightPlan, sensor: SensorConfig, grid: GroundGrid,
                    metadata=None) -> IntegralImage:
    """Cast one sight line per (pose, covered cell center); never rasterizes."""
    t = _half_tan(sensor)
    xs, ys = grid.xs, grid.ys
    s = np.zeros(grid.shape)
    c = np.zeros(grid.shape, np.int64)
    for p in plan.poses:
        kx = np.flatnonzero(_sees(p, t, xs, p.y))
        ky = np.flatnonzero(_sees(p, t, p.x, ys))
        if not len(kx) or not len(ky):
            continue
        X, Y = np.meshgrid(xs[kx], ys[ky])
        targets = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, scene.ground_z)])
        clear = ~occluded_from(scene, p.position, targets)
        block = np.ix_(ky, kx)
        s[block] += clear.reshape(len(ky), len(kx))
        c[block] += 1
    meta = {"source": "oracle", "plan": plan.to_dict(),
            "sensor": {"fov_deg": sensor.fov_deg, "resolution_px": sensor.resolution_px}}
    meta.update(metadata or {})
    return IntegralImage(grid, s, c, meta)


def mean_abs_difference(a: IntegralImage, b: IntegralImage) -> float:
    """Mean |a - b| over cells covered in both integrals."""
    both = a.covered & b.covered
    if not both.any():
        raise CoverageError("integrals share no covered cells")
    return float(np.abs(a.value[both] - b.value[both]).mean())
