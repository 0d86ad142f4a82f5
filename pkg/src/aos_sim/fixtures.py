"""Small hand-built scenes used by tests and the ``oracle`` subcommand."""
import numpy as np

from .geometry import Rect
from .scene import KIND_CYLINDER, KIND_DISC, scene_from_primitives


def single_trunk_scene(radius=0.3, length=6.0, voxel_m=0.5):
    """One vertical trunk cylinder standing at the origin."""
    return scene_from_primitives([[0.0, 0.0, 0.0, 0.0, 0.0, length, radius]], [KIND_CYLINDER],
                                 Rect(-50.0, -50.0, 50.0, 50.0), voxel_m)


def horizontal_disc_scene(radius=2.0, z=10.0, center=(0.0, 0.0), voxel_m=0.5):
    return scene_from_primitives([[center[0], center[1], z, 0.0, 0.0, 1.0, radius]], [KIND_DISC],
                                 Rect(-50.0, -50.0, 50.0, 50.0), voxel_m)


def slab_scene(extent: Rect, z=10.0, voxel_m=2.0):
    """An opaque horizontal disc large enough to cover ``extent`` entirely."""
    cx, cy = extent.center
    r = 0.5 * float(np.hypot(extent.width, extent.height)) + 1.0
    return scene_from_primitives([[cx, cy, z, 0.0, 0.0, 1.0, r]], [KIND_DISC], extent, voxel_m)


def trunk_line_plan(altitude_m=30.0, poses=11, half_span_m=5.0):
    """``poses`` nadir poses on y = 0 between x = -half_span and +half_span."""
    from .imaging import CameraPose
    from .integration import FlightPlan

    xs = np.linspace(-half_span_m, half_span_m, poses)
    step = float(xs[1] - xs[0]) if poses > 1 else 0.0
    return FlightPlan(tuple(CameraPose(float(x), 0.0, altitude_m) for x in xs), "line", step,
                      Rect(-half_span_m, 0.0, half_span_m, 0.0), altitude_m)
