"""Nadir pinhole camera, binarized aerial rendering and top-down occupancy maps.

Pixel ``(i, j)``: ``i`` indexes image columns along world x, ``j`` indexes rows
along world y (row 0 at the smallest y). Pixel arrays are stored ``[j, i]``.
Pixel centers are uniform on the image plane (tangent-uniform), not in angle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, PoseError
from .geometry import Rect
from .sampling import SensorConfig, ground_coverage
from .scene import Scene, occluded_from, occluded_many


@dataclass(frozen=True)
class CameraPose:
    x: float
    y: float
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise PoseError(f"camera altitude must be > 0, got {self.h}")

    @property
    def position(self):
        return (self.x, self.y, self.h)


@dataclass
class BinaryAerialImage:
    pixels: np.ndarray  # (res, res) uint8 in {0, 1}, indexed [j, i]
    pose: CameraPose
    sensor: SensorConfig


def pixel_offsets(sensor: SensorConfig, altitude: float) -> np.ndarray:
    """Ground offsets (meters) of every pixel-center ray along one image axis."""
    res = sensor.resolution_px
    u = (np.arange(res) + 0.5) / res
    return altitude * (2.0 * u - 1.0) * sensor.half_tan


def continuous_to_ground(pose: CameraPose, sensor: SensorConfig, u: float, v: float):
    """Ground point of continuous image coordinates ``u, v`` in [0, 1]."""
    t = sensor.half_tan
    return (pose.x + pose.h * (2.0 * u - 1.0) * t, pose.y + pose.h * (2.0 * v - 1.0) * t)


def pixel_to_ground(pose: CameraPose, sensor: SensorConfig, pixel):
    i, j = pixel
    res = sensor.resolution_px
    if not (0 <= i < res and 0 <= j < res) or int(i) != i or int(j) != j:
        raise ParameterError(f"pixel {pixel} outside a {res}x{res} image")
    return continuous_to_ground(pose, sensor, (i + 0.5) / res, (j + 0.5) / res)


def ground_to_pixel(pose: CameraPose, sensor: SensorConfig, x, y):
    """Nearest pixel indices for ground points; -1 where outside the footprint.

    Pixel centers are uniform in tangent space, so the nearest center on the
    image plane is also the nearest center ground point.
    """
    res = sensor.resolution_px
    t = sensor.half_tan
    u = (np.asarray(x, float) - pose.x) / (pose.h * t) * 0.5 + 0.5
    v = (np.asarray(y, float) - pose.y) / (pose.h * t) * 0.5 + 0.5
    i = np.minimum(np.floor(u * res), res - 1).astype(np.int64)
    j = np.minimum(np.floor(v * res), res - 1).astype(np.int64)
    inside_u = (u >= 0.0) & (u <= 1.0)
    inside_v = (v >= 0.0) & (v <= 1.0)
    return np.where(inside_u, i, -1), np.where(inside_v, j, -1)


def footprint(pose: CameraPose, sensor: SensorConfig) -> Rect:
    half = 0.5 * ground_coverage(pose.h, sensor.fov_deg)
    return Rect(pose.x - half, pose.y - half, pose.x + half, pose.y + half)


def ground_sample_distance(altitude: float, sensor: SensorConfig) -> float:
    return ground_coverage(altitude, sensor.fov_deg) / sensor.resolution_px


def check_pose(scene: Scene, pose: CameraPose):
    if scene.primitive_count and pose.h <= scene.top_z:
        raise PoseError(f"camera at h={pose.h} m is not above the scene top ({scene.top_z:.3f} m)")


def render_pixels(scene: Scene, pose: CameraPose, sensor: SensorConfig, cols, rows) -> np.ndarray:
    """Binary values for the sub-image ``rows x cols`` (arrays of pixel indices)."""
    check_pose(scene, pose)
    off = pixel_offsets(sensor, pose.h)
    gx = pose.x + off[np.asarray(cols, np.int64)]
    gy = pose.y + off[np.asarray(rows, np.int64)]
    if not scene.primitive_count:
        return np.ones((len(gy), len(gx)), np.uint8)
    X, Y = np.meshgrid(gx, gy)
    targets = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, scene.ground_z)])
    blocked = occluded_from(scene, pose.position, targets)
    return (~blocked).astype(np.uint8).reshape(len(gy), len(gx))


def render_aerial(scene: Scene, pose: CameraPose, sensor: SensorConfig) -> BinaryAerialImage:
    """Ray-cast one nadir image: 1 where the pixel ray reaches the ground."""
    idx = np.arange(sensor.resolution_px)
    return BinaryAerialImage(render_pixels(scene, pose, sensor, idx, idx), pose, sensor)


def ortho_occupancy(scene: Scene, extent: Rect, res) -> np.ndarray:
    """Top-down orthographic map: 1 where a vertical ray reaches the ground."""
    if isinstance(res, (int, np.integer)):
        nx = ny = int(res)
    else:
        nx, ny = (int(v) for v in res)
    if nx < 2 or ny < 2:
        raise ParameterError(f"ortho resolution must be >= 2, got {res}")
    xs = extent.x0 + (np.arange(nx) + 0.5) * extent.width / nx
    ys = extent.y0 + (np.arange(ny) + 0.5) * extent.height / ny
    X, Y = np.meshgrid(xs, ys)
    top = scene.top_z + 1.0
    a = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, top)])
    b = a.copy()
    b[:, 2] = scene.ground_z
    return (~occluded_many(scene, a, b)).astype(np.uint8).reshape(ny, nx)


def white_ratio(bitmap) -> float:
    return float(np.asarray(bitmap, float).mean())


# --------------------------------------------------------------------------
# PGM (P5) I/O

def write_pgm(path, gray: np.ndarray):
    """Binary 8-bit PGM, maxval 255; row 0 of ``gray`` is written first."""
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    if gray.ndim != 2:
        raise ParameterError("PGM needs a 2D array")
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(gray.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii"))
        pos = end
    if tokens[0] != "P5":
        raise ParameterError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ParameterError("16-bit PGM not supported")
    pos += 1
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w).copy()


def binary_to_gray(bitmap) -> np.ndarray:
    return (np.asarray(bitmap, np.uint8) * 255).astype(np.uint8)


def fraction_to_gray(values, undefined=None) -> np.ndarray:
    """Quantise values in [0, 1] to 0..255 by ``round(v * 255)``; undefined cells -> 0."""
    v = np.asarray(values, float)
    g = np.rint(np.clip(np.nan_to_num(v, nan=0.0), 0.0, 1.0) * 255.0).astype(np.uint8)
    if undefined is not None:
        g[undefined] = 0
    return g

