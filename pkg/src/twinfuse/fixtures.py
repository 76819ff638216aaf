"""Desk-scale room fixture used by evaluation and integration tests.

The measured dimensions (room width 9.140 m, shelf 0.690 x 2.130 m, door
opening 0.950 m) are the ground-truth values the error tables compare
against; the remaining dimensions (room 6 x 3 m interior, 0.2 m walls)
are fixed fixture choices recorded here and in the shipped JSON files.

Waypoint grid discipline: all waypoint coordinates are multiples of
10 mm and the flight is sampled at 5 frames per segment-second, so every
interpolated camera position lands on the integer-millimeter grid. With
axis-aligned viewing directions the rendered depth of a parallel surface
is then an exact integer millimeter count, which is what lets the
noiseless measurement rows come out exact despite u16 quantization.
"""

from __future__ import annotations

import numpy as np

from .geometry import Pose
from .scene import Box, DefectMark, Landmark, SceneSpec
from .simulate import MotionNoise, TrajectorySpec

ROOM_WIDTH = 9.140
ROOM_LENGTH = 6.0
ROOM_HEIGHT = 3.0
WALL = 0.2
SHELF_WIDTH = 0.690
SHELF_HEIGHT = 2.130
SHELF_DEPTH = 0.30
SHELF_X0 = 2.0
DOOR_HEIGHT = 0.950
DOOR_X0, DOOR_X1 = 4.10, 5.00

_SURFACE_OFFSET = 0.002  # landmarks float just off their surface
_LANDMARK_SEED = 20240917


def look_rotation(forward, up=(0.0, 0.0, 1.0)):
    """Camera-to-world rotation with +Z along ``forward`` and +Y downish."""
    f = np.asarray(forward, dtype=float)
    f = f / np.linalg.norm(f)
    up = np.asarray(up, dtype=float)
    right = np.cross(f, up)
    n = np.linalg.norm(right)
    if n < 1e-9:
        right = np.cross(f, (0.0, 1.0, 0.0))
        n = np.linalg.norm(right)
    right = right / n
    down = np.cross(f, right)
    return np.stack([right, down, f], axis=1)


LOOK_XN = look_rotation((-1, 0, 0))
LOOK_XP = look_rotation((1, 0, 0))
LOOK_YP = look_rotation((0, 1, 0))
LOOK_YN = look_rotation((0, -1, 0))
LOOK_DOWN = look_rotation((0, 0, -1), up=(0, 1, 0))


def paper_room_boxes():
    w, l, h = ROOM_WIDTH, ROOM_LENGTH, ROOM_HEIGHT
    t = WALL
    sx0, sx1 = SHELF_X0, SHELF_X0 + SHELF_WIDTH
    boxes = [
        Box((-t, -t, 0.0), (0.0, l + t, h), "wall_x_neg"),
        Box((w, -t, 0.0), (w + t, l + t, h), "wall_x_pos"),
        Box((-t, l, 0.0), (w + t, l + t, h), "wall_y_pos"),
        Box((-t, -t, 0.0), (DOOR_X0, 0.0, h), "wall_y_neg_left"),
        Box((DOOR_X1, -t, 0.0), (w + t, 0.0, h), "wall_y_neg_right"),
        Box((DOOR_X0, -t, DOOR_HEIGHT), (DOOR_X1, 0.0, h), "door_lintel"),
        Box((-t, -t, -t), (w + t, l + t, 0.0), "floor"),
        Box((-t, -t, h), (w + t, l + t, h + t), "ceiling"),
        Box((sx0, l - SHELF_DEPTH, 0.0), (sx1, l, SHELF_HEIGHT), "shelf"),
    ]
    return boxes


def paper_room_defects():
    """Ground-truth surface marks plus the raised patches that render them."""
    marks = [
        DefectMark(0, "crack", (0.0, 2.50, 1.20)),
        DefectMark(1, "crack", (SHELF_X0 + 0.35, ROOM_LENGTH - SHELF_DEPTH, 0.95)),
        DefectMark(2, "crack", (ROOM_WIDTH, 4.00, 1.50)),
    ]
    # 25 mm relief: deep enough that a window-level variance test can
    # separate a defect window from flat wall, small enough that the
    # median depth under a detection box stays on the base surface.
    front = ROOM_LENGTH - SHELF_DEPTH
    ridge_boxes = [
        Box((0.0, 2.45, 1.15), (0.025, 2.55, 1.25), "defect_patch_0"),
        Box((SHELF_X0 + 0.30, front - 0.025, 0.90),
            (SHELF_X0 + 0.40, front, 1.00), "defect_patch_1"),
        Box((ROOM_WIDTH - 0.025, 3.95, 1.45),
            (ROOM_WIDTH, 4.05, 1.55), "defect_patch_2"),
    ]
    return marks, ridge_boxes


def _surface_landmarks(rng, next_id, axis, level, lo0, hi0, lo1, hi1, count,
                       skip=None):
    """Jittered grid of landmarks on one axis-aligned plane."""
    out = []
    n_side = int(np.ceil(np.sqrt(count)))
    g0 = np.linspace(lo0, hi0, n_side)
    g1 = np.linspace(lo1, hi1, n_side)
    span0 = (hi0 - lo0) / max(n_side - 1, 1)
    span1 = (hi1 - lo1) / max(n_side - 1, 1)
    for a in g0:
        for b in g1:
            if len(out) >= count:
                break
            p0 = a + rng.uniform(-0.3, 0.3) * span0
            p1 = b + rng.uniform(-0.3, 0.3) * span1
            p = [0.0, 0.0, 0.0]
            p[axis] = level
            others = [i for i in range(3) if i != axis]
            p[others[0]] = p0
            p[others[1]] = p1
            if skip is not None and skip(p):
                continue
            out.append(
                Landmark(next_id + len(out), tuple(round(v, 3) for v in p))
            )
    return out


def paper_room_landmarks():
    rng = np.random.default_rng(_LANDMARK_SEED)
    w, l, h = ROOM_WIDTH, ROOM_LENGTH, ROOM_HEIGHT
    eps = _SURFACE_OFFSET
    sx0, sx1 = SHELF_X0, SHELF_X0 + SHELF_WIDTH
    front = l - SHELF_DEPTH
    lms = []

    def in_doorway(p):
        return DOOR_X0 - 0.1 < p[0] < DOOR_X1 + 0.1 and p[2] < DOOR_HEIGHT + 0.1

    def behind_shelf(p):
        return sx0 - 0.1 < p[0] < sx1 + 0.1 and p[2] < SHELF_HEIGHT + 0.1

    def under_shelf(p):
        return (sx0 - 0.1 < p[0] < sx1 + 0.1) and (p[1] > front - 0.1)

    # Densities are sized for the closest approach of the survey flight:
    # every frame pair must share enough sightings for robust registration
    # even when the camera turns half a meter from a surface.
    lms += _surface_landmarks(rng, 0, 0, eps, 0.15, l - 0.15, 0.15, h - 0.15, 110)
    lms += _surface_landmarks(rng, 1000, 0, w - eps, 0.15, l - 0.15, 0.15,
                              h - 0.15, 110)
    lms += _surface_landmarks(rng, 2000, 1, eps, 0.15, w - 0.15, 0.15, h - 0.15,
                              90, skip=in_doorway)
    lms += _surface_landmarks(rng, 3000, 1, l - eps, 0.15, w - 0.15, 0.15,
                              h - 0.15, 240, skip=behind_shelf)
    lms += _surface_landmarks(rng, 4000, 2, eps, 0.15, w - 0.15, 0.15, l - 0.15,
                              170, skip=under_shelf)
    lms += _surface_landmarks(rng, 5000, 2, h - eps, 0.15, w - 0.15, 0.15,
                              l - 0.15, 120)
    # Shelf faces: front, both sides, top.
    lms += _surface_landmarks(rng, 6000, 1, front - eps, sx0 + 0.05, sx1 - 0.05,
                              0.10, SHELF_HEIGHT - 0.05, 30)
    lms += _surface_landmarks(rng, 6200, 0, sx0 - eps, front + 0.02, l - 0.02,
                              0.10, SHELF_HEIGHT - 0.05, 16)
    lms += _surface_landmarks(rng, 6400, 0, sx1 + eps, front + 0.02, l - 0.02,
                              0.10, SHELF_HEIGHT - 0.05, 16)
    lms += _surface_landmarks(rng, 6600, 2, SHELF_HEIGHT + eps, sx0 + 0.05,
                              sx1 - 0.05, front + 0.02, l - 0.02, 12)
    return lms


def paper_room(with_defect_patches: bool = True) -> SceneSpec:
    boxes = paper_room_boxes()
    marks, ridges = paper_room_defects()
    if with_defect_patches:
        boxes = boxes + ridges
    return SceneSpec(boxes, paper_room_landmarks(), marks)


def _wp(x, y, z, rot):
    return Pose(rot, np.array([x, y, z]))


def measurement_trajectory(rot_sigma=0.0, trans_sigma=0.0) -> TrajectorySpec:
    """Survey flight covering every measured surface with head-on legs.

    Legs keep a fixed axis-aligned orientation (exact-depth viewing);
    transit segments rotate by 90 degrees at a time so the rotation
    geodesic is unambiguous. The path ends next to its start so the
    simulator can declare a loop closure.
    """
    waypoints = [
        _wp(1.80, 2.00, 1.50, LOOK_XN),
        _wp(1.80, 4.00, 1.50, LOOK_XN),     # room-width leg (x- wall)
        _wp(3.00, 4.60, 1.50, LOOK_YP),     # transit
        _wp(7.34, 4.00, 1.50, LOOK_XP),     # transit
        _wp(7.34, 2.00, 1.50, LOOK_XP),     # room-width leg (x+ wall)
        _wp(4.60, 3.00, 1.20, LOOK_YP),     # transit
        _wp(1.20, 5.60, 1.10, LOOK_XP),     # transit
        _wp(1.20, 5.92, 1.10, LOOK_XP),     # shelf left-face leg
        _wp(2.40, 4.60, 1.10, LOOK_YP),     # transit, backed off the wall
        _wp(3.50, 5.00, 1.10, LOOK_XN),     # transit
        _wp(3.50, 5.92, 1.10, LOOK_XN),     # shelf right-face leg
        _wp(3.20, 4.00, 2.60, LOOK_DOWN),   # transit: climb away from wall
        _wp(2.35, 5.86, 2.60, LOOK_DOWN),   # overhead approach
        _wp(2.35, 4.60, 2.60, LOOK_DOWN),   # shelf-top / floor leg
        _wp(1.80, 2.10, 1.50, LOOK_XN),     # return for loop closure
    ]
    return TrajectorySpec(
        waypoints, frame_rate=5.0,
        motion_noise=MotionNoise(rot_sigma, trans_sigma),
    )


def defect_trajectory(rot_sigma=0.0, trans_sigma=0.0) -> TrajectorySpec:
    """Five hover viewpoints that together see all three defect marks.

    At one frame per segment-second the rendered frames sit exactly on the
    waypoints: a discrete inspection pass, not a continuous survey.
    """
    waypoints = [
        _wp(1.50, 2.50, 1.20, LOOK_XN),     # mark 0 head-on
        _wp(1.50, 3.00, 1.20, LOOK_XN),     # mark 0, second view
        _wp(7.64, 4.00, 1.50, LOOK_XP),     # mark 2 head-on
        _wp(2.35, 4.20, 0.95, LOOK_YP),     # mark 1 head-on
        _wp(2.35, 3.80, 0.95, LOOK_YP),     # mark 1, second view
    ]
    return TrajectorySpec(
        waypoints, frame_rate=1.0,
        motion_noise=MotionNoise(rot_sigma, trans_sigma),
    )


def lidar_scan_poses():
    """Hover positions for the planar-scanner evaluation."""
    return [
        _wp(4.57, 3.00, 1.20, LOOK_XP),
        _wp(1.00, 4.80, 1.20, LOOK_XP),
        _wp(4.00, 5.20, 1.20, LOOK_XN),
    ]


def stereo_measurement_specs():
    """ROI definitions for the depth-camera error table (meters)."""
    return [
        {"name": "Room Width", "axis": "x", "truth": ROOM_WIDTH,
         "roi": [[-0.05, 2.00, 1.00], [ROOM_WIDTH + 0.05, 4.00, 2.00]]},
        {"name": "Shelf Width", "axis": "x", "truth": SHELF_WIDTH,
         "roi": [[1.60, 5.74, 0.30], [3.10, 5.96, 1.90]]},
        {"name": "Shelf Height", "axis": "z", "truth": SHELF_HEIGHT,
         "roi": [[2.00, 4.60, -0.05], [2.69, 5.96, 2.20]]},
    ]


def lidar_measurement_specs():
    """ROI definitions for the planar-scanner error table.

    The door-height row of the reference table is not measurable from a
    horizontal scan plane and is intentionally absent.
    """
    return [
        {"name": "Room Width", "axis": "x", "truth": ROOM_WIDTH,
         "roi": [[-0.10, 2.00, 0.50], [ROOM_WIDTH + 0.10, 4.00, 1.90]]},
        {"name": "Shelf Width", "axis": "x", "truth": SHELF_WIDTH,
         "roi": [[1.70, 5.72, 0.50], [3.00, 5.98, 1.90]]},
    ]
