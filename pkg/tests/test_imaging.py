import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aos_sim.errors import ParameterError, PoseError
from aos_sim.fixtures import horizontal_disc_scene, single_trunk_scene, slab_scene
from aos_sim.forest import generate_forest
from aos_sim.geometry import Rect
from aos_sim.imaging import (CameraPose, binary_to_gray, continuous_to_ground, footprint, fraction_to_gray,
                             ground_sample_distance, ground_to_pixel, ortho_occupancy, pixel_to_ground,
                             read_pgm, render_aerial, white_ratio, write_pgm)
from aos_sim.sampling import SensorConfig, ground_coverage
from aos_sim.scene import KIND_CYLINDER, KIND_DISC, scene_from_primitives

EMPTY = scene_from_primitives(np.empty((0, 7)), [])


def test_pose_must_be_above_ground():
    with pytest.raises(PoseError):
        CameraPose(0, 0, 0)
    with pytest.raises(PoseError):
        render_aerial(single_trunk_scene(length=6), CameraPose(0, 0, 5), SensorConfig(50, 16))


def test_center_pixel_of_odd_image_is_nadir():
    pose = CameraPose(3.25, -7.5, 30)
    assert pixel_to_ground(pose, SensorConfig(50, 511), (255, 255)) == (3.25, -7.5)


def test_edge_and_quarter_offsets():
    pose = CameraPose(0, 0, 30)
    s = SensorConfig(90, 512)
    x, _ = continuous_to_ground(pose, s, 1.0, 0.5)
    assert x == pytest.approx(30.0, rel=1e-12)
    x, _ = continuous_to_ground(pose, s, 0.75, 0.5)
    assert x == pytest.approx(15.0, rel=1e-12)


def test_pixel_to_ground_rejects_out_of_range():
    with pytest.raises(ParameterError):
        pixel_to_ground(CameraPose(0, 0, 30), SensorConfig(50, 8), (8, 0))


@given(st.floats(1, 200), st.floats(1, 170), st.floats(-100, 100), st.floats(-100, 100))
def test_footprint_matches_coverage(h, fov, x, y):
    pose, s = CameraPose(x, y, h), SensorConfig(fov, 64)
    x0, _ = continuous_to_ground(pose, s, 0.0, 0.5)
    x1, _ = continuous_to_ground(pose, s, 1.0, 0.5)
    c = ground_coverage(h, fov)
    assert math.isclose(x1 - x0, c, rel_tol=1e-9)
    assert math.isclose(footprint(pose, s).width, c, rel_tol=1e-9)


@given(st.integers(2, 600), st.floats(10, 120), st.floats(5, 100))
def test_ground_to_pixel_inverts_pixel_centers(res, fov, h):
    pose, s = CameraPose(1.0, 2.0, h), SensorConfig(fov, res)
    idx = np.array(sorted({0, res // 3, res // 2, res - 1}))
    gx = np.array([pixel_to_ground(pose, s, (int(i), 0))[0] for i in idx])
    gy = np.array([pixel_to_ground(pose, s, (0, int(j)))[1] for j in idx])
    cols, rows = ground_to_pixel(pose, s, gx, gy)
    assert np.array_equal(cols, idx) and np.array_equal(rows, idx)
    far = ground_to_pixel(pose, s, [1.0 + h * 10], [2.0])[0]
    assert far[0] == -1


def test_empty_scene_renders_white():
    img = render_aerial(EMPTY, CameraPose(0, 0, 30), SensorConfig(50, 32))
    assert img.pixels.shape == (32, 32) and img.pixels.all()


def test_trunk_under_camera_blocks_center():
    img = render_aerial(single_trunk_scene(radius=0.3), CameraPose(0, 0, 30), SensorConfig(50, 512))
    assert img.pixels[256, 256] == 0 and img.pixels[255, 255] == 0
    assert img.pixels[0, 0] == 1


def test_pixel_axes_orientation():
    # an occluder at +x, -y shows up at high column index, low row index
    s = scene_from_primitives([[8.0, -8.0, 5.0, 0, 0, 1, 1.0]], [KIND_DISC])
    img = render_aerial(s, CameraPose(0, 0, 30), SensorConfig(90, 64))
    rows, cols = np.nonzero(img.pixels == 0)
    assert cols.mean() > 32 and rows.mean() < 32


def _supersampled_disc_area(res, sub, fov, h, R, z):
    t = math.tan(math.radians(fov / 2))
    k = np.arange(res * sub)
    u = (k + 0.5) / (res * sub)
    off = (2 * u - 1) * t * (h - z)  # ray offset at the disc plane
    X, Y = np.meshgrid(off, off)
    return float((X * X + Y * Y <= R * R).sum()) / (sub * sub)


def test_disc_projection_area():
    s = horizontal_disc_scene(radius=2.0, z=10.0)
    img = render_aerial(s, CameraPose(0, 0, 30), SensorConfig(90, 512))
    zeros = int((img.pixels == 0).sum())
    assert zeros == pytest.approx(math.pi * 25.6 ** 2, rel=0.02)
    ref = _supersampled_disc_area(512, 16, 90, 30, 2.0, 10.0)
    assert zeros == pytest.approx(ref, rel=0.02)


def test_render_is_deterministic():
    f = generate_forest(2, "custom(300)", Rect.from_size(20))
    from aos_sim.scene import build_scene
    s = build_scene(f, 0.5)
    pose, sensor = CameraPose(10, 10, 30), SensorConfig(50, 64)
    assert np.array_equal(render_aerial(s, pose, sensor).pixels, render_aerial(s, pose, sensor).pixels)


@given(st.integers(0, 2**32 - 1))
def test_adding_occluders_only_darkens(seed):
    rng = np.random.default_rng(seed)
    prims = np.column_stack([rng.uniform(-8, 8, (6, 2)), rng.uniform(1, 20, 6), np.zeros((6, 2)),
                             np.ones(6), rng.uniform(0.3, 3, 6)])
    few = scene_from_primitives(prims[:3], np.full(3, KIND_DISC))
    many = scene_from_primitives(prims, np.full(6, KIND_DISC))
    pose, sensor = CameraPose(0, 0, 30), SensorConfig(60, 48)
    a, b = render_aerial(few, pose, sensor).pixels, render_aerial(many, pose, sensor).pixels
    assert not np.any((a == 0) & (b == 1))


def test_ortho_extremes():
    ext = Rect.from_size(20)
    assert white_ratio(ortho_occupancy(EMPTY, ext, 32)) == 1.0
    assert white_ratio(ortho_occupancy(slab_scene(ext), ext, 32)) == 0.0


def test_ortho_ratio_decreases_with_density():
    from aos_sim.scene import build_scene
    ext = Rect.from_size(40)
    ratios = [white_ratio(ortho_occupancy(build_scene(generate_forest(0, d, ext), 0.5), ext, 128))
              for d in ("sparse", "medium", "dense")]
    assert ratios[0] > ratios[1] > ratios[2]


def test_ortho_sees_trunk_footprint():
    s = scene_from_primitives([[5, 5, 0, 5, 5, 6, 2.0]], [KIND_CYLINDER])
    occ = ortho_occupancy(s, Rect.from_size(10), 100)
    # disc of radius 2 m over a 10 x 10 m map
    assert 1 - white_ratio(occ) == pytest.approx(math.pi * 4 / 100, rel=0.03)


def test_gsd():
    assert ground_sample_distance(30, SensorConfig(90, 512)) == pytest.approx(60 / 512)


def test_pgm_round_trip(tmp_path):
    g = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    p = tmp_path / "x.pgm"
    write_pgm(p, g)
    assert p.read_bytes().startswith(b"P5\n4 3\n255\n")
    assert np.array_equal(read_pgm(p), g)
    assert binary_to_gray(np.array([[0, 1]])).tolist() == [[0, 255]]
    v = np.array([[0.0, 0.5, 1.0, np.nan]])
    assert fraction_to_gray(v, np.isnan(v)).tolist() == [[0, 128, 255, 0]]
