"""Synthetic drone scanner over box scenes.

Rendering is deterministic: every operation draws from a fresh generator
seeded from (seed, frame_id, stream-tag), so frames can be rendered in any
order or in parallel and still produce bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import se3
from .geometry import CameraIntrinsics, DepthFrame, PointCloud, Pose
from .scene import SceneSpec

# Stream tags keep the per-frame RNG streams of different sensors disjoint.
_STREAM_DEPTH = 1
_STREAM_LANDMARK = 2
_STREAM_SCAN_2D = 3
_STREAM_MOTION = 4

# Hits closer than this are treated as "at the surface" by the landmark
# occlusion test (spatial tolerance, meters).
OCCLUSION_TOL = 1e-3

MAX_DEPTH_MM = 65535


class SimulationError(Exception):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    """Sensor corruption model.

    depth_rel_sigma is the std-dev of multiplicative range noise (so the
    absolute error grows with distance, like triangulated stereo depth);
    outlier_fraction replaces that share of landmark observations with
    uniform in-frustum garbage.
    """

    depth_rel_sigma: float = 0.0
    outlier_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.depth_rel_sigma < 0:
            raise SimulationError("depth_rel_sigma must be >= 0")
        if not (0 <= self.outlier_fraction < 1):
            raise SimulationError("outlier_fraction must be in [0, 1)")


@dataclass(frozen=True)
class MotionNoise:
    rot_sigma: float = 0.0
    trans_sigma: float = 0.0


@dataclass
class TrajectorySpec:
    """Scripted flight: waypoints visited at one segment per second.

    Frames are sampled at ``frame_rate`` Hz along the path; translation is
    linear within a segment and rotation follows the quaternion geodesic.
    """

    waypoints: list
    frame_rate: float
    motion_noise: MotionNoise = field(default_factory=MotionNoise)

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise SimulationError("trajectory needs at least 2 waypoints")
        if self.frame_rate <= 0:
            raise SimulationError("frame_rate must be positive")


@dataclass(frozen=True)
class LandmarkObservation:
    landmark_id: int
    camera_point: tuple
    is_outlier: bool = False


def _rng(seed, frame_id, tag):
    return np.random.default_rng(
        np.random.SeedSequence(entropy=(int(seed), int(frame_id), tag))
    )


def raycast_boxes(origin, dirs, box_min, box_max):
    """Slab-test rays from one origin against a stack of boxes.

    dirs: (N, 3), box_min/box_max: (B, 3). Returns (N,) hit parameter t
    (point = origin + t * dir) with +inf where nothing is hit. Iterates
    box-by-box with a running minimum so the temporaries stay (N,)-sized.
    """
    n = dirs.shape[0]
    best = np.full(n, np.inf)
    if box_min.shape[0] == 0:
        return best
    o = np.asarray(origin, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs  # +-inf on zero components
    # Zero direction components: ray parallel to the slab. Inside the slab
    # that axis never constrains t; outside it the box can never be hit.
    par = ~np.isfinite(inv)
    any_par = bool(par.any())
    eps = 1e-12
    for b in range(box_min.shape[0]):
        with np.errstate(invalid="ignore"):
            t0 = (box_min[b] - o) * inv
            t1 = (box_max[b] - o) * inv
        lo = np.minimum(t0, t1)
        hi = np.maximum(t0, t1)
        if any_par:
            # Applied after the min/max sort: an outside parallel slab must
            # block the box (lo=+inf, hi=-inf), not widen to (-inf, +inf).
            inside = (o >= box_min[b]) & (o <= box_max[b])
            lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
            hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
        t_near = lo.max(axis=1)
        t_far = hi.min(axis=1)
        hit = (t_near <= t_far) & (t_far > eps)
        t_hit = np.where(t_near > eps, t_near, t_far)
        np.minimum(best, np.where(hit, t_hit, np.inf), out=best)
    return best


def _pixel_dirs(intr: CameraIntrinsics):
    vs, us = np.mgrid[0:intr.height, 0:intr.width]
    d = np.empty((intr.height * intr.width, 3))
    d[:, 0] = (us.ravel() - intr.cx) / intr.fx
    d[:, 1] = (vs.ravel() - intr.cy) / intr.fy
    d[:, 2] = 1.0
    return d


_DIR_CACHE: dict = {}


def _cached_pixel_dirs(intr: CameraIntrinsics):
    key = (intr.fx, intr.fy, intr.cx, intr.cy, intr.width, intr.height)
    if key not in _DIR_CACHE:
        _DIR_CACHE[key] = _pixel_dirs(intr)
    return _DIR_CACHE[key]


def render_depth_frame(scene: SceneSpec, pose: Pose, intr: CameraIntrinsics,
                       noise: NoiseSpec, frame_id: int = 0,
                       timestamp: float = 0.0,
                       intrinsics_id: str = "default") -> DepthFrame:
    """Cast one pinhole ray per pixel and record the camera-Z depth.

    Because ray directions are built with unit camera-Z component, the hit
    parameter *is* the camera-frame Z coordinate, which is exactly the
    depth convention the rest of the package uses.
    """
    box_min, box_max = scene.box_arrays()
    dirs_world = _cached_pixel_dirs(intr) @ pose.rotation.T
    t = raycast_boxes(pose.translation, dirs_world, box_min, box_max)
    depth_m = np.where(np.isfinite(t), t, 0.0)
    if noise.depth_rel_sigma > 0:
        rng = _rng(noise.seed, frame_id, _STREAM_DEPTH)
        factor = rng.normal(1.0, noise.depth_rel_sigma, size=depth_m.shape)
        depth_m = depth_m * factor
    mm = np.rint(depth_m * 1000.0)
    mm[(mm < 0) | (mm > MAX_DEPTH_MM)] = 0
    depths = mm.astype(np.uint16).reshape(intr.height, intr.width)
    return DepthFrame(frame_id, timestamp, intrinsics_id, depths)


def interpolate_pose(a: Pose, b: Pose, alpha: float) -> Pose:
    if alpha == 0.0:
        return a
    if alpha == 1.0:
        return b
    t = (1.0 - alpha) * a.translation + alpha * b.translation
    return Pose(se3.slerp(a.rotation, b.rotation, alpha), t)


def trajectory_frame_times(traj: TrajectorySpec):
    """Sample times (s): one waypoint segment per second at frame_rate Hz."""
    duration = len(traj.waypoints) - 1
    n = int(round(duration * traj.frame_rate))
    return np.arange(n + 1) / traj.frame_rate


def pose_at_time(traj: TrajectorySpec, t: float) -> Pose:
    duration = len(traj.waypoints) - 1
    t = min(max(t, 0.0), duration)
    seg = min(int(t), duration - 1)
    return interpolate_pose(
        traj.waypoints[seg], traj.waypoints[seg + 1], t - seg
    )


def segment_index(traj: TrajectorySpec, t: float) -> int:
    duration = len(traj.waypoints) - 1
    return min(int(min(max(t, 0.0), duration)), duration - 1)


def simulate_trajectory(traj: TrajectorySpec, seed: int):
    """Sample (true_pose, odom_pose) pairs along the script.

    True poses interpolate the waypoints exactly. Odometry accumulates a
    per-step perturbation of the true relative motion, modeling a drifting
    onboard estimate; with zero motion noise it equals the truth verbatim.
    """
    times = trajectory_frame_times(traj)
    true_poses = [pose_at_time(traj, t) for t in times]
    noise = traj.motion_noise
    if noise.rot_sigma == 0.0 and noise.trans_sigma == 0.0:
        return list(zip(true_poses, true_poses))
    rng = _rng(seed, 0, _STREAM_MOTION)
    odom = [true_poses[0]]
    from .geometry import compose, relative

    for k in range(1, len(true_poses)):
        rel = relative(true_poses[k - 1], true_poses[k])
        rotvec = rng.normal(0.0, noise.rot_sigma, size=3)
        dt = rng.normal(0.0, noise.trans_sigma, size=3)
        wobble = Pose(se3.so3_exp(rotvec), dt)
        odom.append(compose(odom[-1], compose(rel, wobble)))
    return list(zip(true_poses, odom))


def observe_landmarks(scene: SceneSpec, pose: Pose, intr: CameraIntrinsics,
                      noise: NoiseSpec, frame_id: int = 0):
    """Camera-frame observations of every visible landmark.

    A landmark is visible iff it projects inside the image with positive
    depth and the ray to it is not blocked by a box strictly before the
    landmark. Inliers get isotropic Gaussian noise with sigma proportional
    to range; an outlier_fraction share is replaced by uniform random
    in-frustum points and flagged.
    """
    ids, positions = scene.landmark_arrays()
    if len(ids) == 0:
        return []
    inv = pose.inverse()
    cam = positions @ inv.rotation.T + inv.translation
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * cam[:, 0] / z + intr.cx
        v = intr.fy * cam[:, 1] / z + intr.cy
    in_frustum = (
        (z > 1e-6)
        & (u >= 0) & (u < intr.width)
        & (v >= 0) & (v < intr.height)
    )
    if not in_frustum.any():
        return []
    box_min, box_max = scene.box_arrays()
    sel = np.flatnonzero(in_frustum)
    rays = positions[sel] - pose.translation
    ranges = np.linalg.norm(rays, axis=1)
    t_hit = raycast_boxes(pose.translation, rays, box_min, box_max)
    visible = t_hit >= 1.0 - OCCLUSION_TOL / np.maximum(ranges, 1e-9)
    sel = sel[visible]
    if len(sel) == 0:
        return []
    rng = _rng(noise.seed, frame_id, _STREAM_LANDMARK)
    out = []
    for i in sel:
        rng_range = np.linalg.norm(cam[i])
        point = cam[i]
        if noise.depth_rel_sigma > 0:
            point = point + rng.normal(
                0.0, noise.depth_rel_sigma * rng_range, size=3
            )
        is_outlier = rng.uniform() < noise.outlier_fraction
        if is_outlier:
            zo = rng.uniform(0.3, 10.0)
            uo = rng.uniform(0.0, intr.width)
            vo = rng.uniform(0.0, intr.height)
            point = np.array(
                [(uo - intr.cx) * zo / intr.fx, (vo - intr.cy) * zo / intr.fy, zo]
            )
        elif point[2] <= 1e-6:
            continue  # noise pushed the point behind the camera: unusable
        up = intr.fx * point[0] / point[2] + intr.cx
        vp = intr.fy * point[1] / point[2] + intr.cy
        if not (0 <= up < intr.width and 0 <= vp < intr.height):
            continue  # a feature must still land inside the image
        out.append(
            LandmarkObservation(int(ids[i]), tuple(point), bool(is_outlier))
        )
    return out


def render_2d_scan(scene: SceneSpec, pose: Pose, angular_res: float,
                   max_range: float, noise: NoiseSpec,
                   scan_id: int = 0) -> PointCloud:
    """Planar range scan in the horizontal plane at the sensor height.

    Bearings sweep [0, 2pi) from world +X; the unit models a gimbal-leveled
    spinning scanner, so only the sensor position matters. Ranges get the
    same multiplicative noise + millimeter quantization as depth frames.
    """
    if angular_res <= 0:
        raise SimulationError("angular_res must be positive")
    n = int(np.ceil(2.0 * np.pi / angular_res))
    bearings = np.arange(n) * angular_res
    dirs = np.stack(
        [np.cos(bearings), np.sin(bearings), np.zeros(n)], axis=1
    )
    box_min, box_max = scene.box_arrays()
    t = raycast_boxes(pose.translation, dirs, box_min, box_max)
    if noise.depth_rel_sigma > 0:
        rng = _rng(noise.seed, scan_id, _STREAM_SCAN_2D)
        t = t * rng.normal(1.0, noise.depth_rel_sigma, size=t.shape)
    t = np.rint(t * 1000.0) / 1000.0
    ok = np.isfinite(t) & (t > 0) & (t <= max_range)
    pts = pose.translation + t[ok, None] * dirs[ok]
    return PointCloud(pts)
