"""Closed-form sampling geometry of a nadir camera flying over flat ground.

Angles are exchanged in degrees; trigonometry happens in radians internally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

DEFAULT_RESOLUTION = 512


@dataclass(frozen=True)
class SensorConfig:
    """Square-frustum pinhole sensor. ``fov_deg`` is the full angle per image axis."""

    fov_deg: float
    resolution_px: int = DEFAULT_RESOLUTION

    def __post_init__(self):
        if not 0.0 < self.fov_deg < 180.0:
            raise DomainError(f"fov_deg must be in (0, 180), got {self.fov_deg}")
        if int(self.resolution_px) != self.resolution_px or self.resolution_px < 2:
            raise DomainError(f"resolution_px must be an integer >= 2, got {self.resolution_px}")

    @property
    def alpha_max_deg(self) -> float:
        return alpha_max(self.fov_deg)

    @property
    def half_tan(self) -> float:
        """tan of the maximal off-nadir angle."""
        return math.tan(math.radians(self.alpha_max_deg))


@dataclass(frozen=True)
class SamplingGeometry:
    altitude_m: float
    sample_dist_m: float
    coverage_m: float
    samples_n: float

    @classmethod
    def from_flight(cls, altitude_m: float, fov_deg: float, sample_dist_m: float) -> "SamplingGeometry":
        if altitude_m <= 0:
            raise DomainError(f"altitude_m must be > 0, got {altitude_m}")
        c = ground_coverage(altitude_m, fov_deg)
        return cls(altitude_m, sample_dist_m, c, samples_per_point(c, sample_dist_m))


@dataclass(frozen=True)
class ForestStats:
    h_t_m: float
    d_t_m: float
    trees_per_ha: float

    def __post_init__(self):
        if self.h_t_m <= 0 or self.d_t_m <= 0 or self.trees_per_ha < 0:
            raise DomainError(f"invalid forest stats {self}")

    @property
    def optimal_fov_deg(self) -> float:
        return optimal_fov(self.d_t_m, self.h_t_m)


def alpha_max(fov_deg: float) -> float:
    """Maximal off-nadir viewing angle (degrees) for a full field of view."""
    if not 0.0 < fov_deg < 180.0:
        raise DomainError(f"fov_deg must be in (0, 180), got {fov_deg}")
    return fov_deg / 2.0


def ground_coverage(altitude_m: float, fov_deg: float) -> float:
    """Ground footprint width ``2 h tan(fov/2)`` in meters."""
    a = alpha_max(fov_deg)
    if altitude_m < 0:
        raise DomainError(f"altitude_m must be >= 0, got {altitude_m}")
    return 2.0 * altitude_m * math.tan(math.radians(a))


def samples_per_point(coverage_m: float, sample_dist_m: float) -> float:
    """How many poses see one ground point; fractional, never truncated."""
    if sample_dist_m <= 0:
        raise DomainError(f"sample_dist_m must be > 0, got {sample_dist_m}")
    if coverage_m < 0:
        raise DomainError(f"coverage_m must be >= 0, got {coverage_m}")
    return coverage_m / sample_dist_m


def optimal_fov(d_t_m: float, h_t_m: float) -> float:
    """FOV (degrees) whose edge ray spans one tree distance over the trunk height."""
    if d_t_m <= 0 or h_t_m <= 0:
        raise DomainError(f"d_t_m and h_t_m must be > 0, got {d_t_m}, {h_t_m}")
    return 2.0 * math.degrees(math.atan(d_t_m / h_t_m))
