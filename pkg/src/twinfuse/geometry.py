"""Camera and rigid-body geometry.

Conventions used across the whole package:

* Camera frame is right-handed: +Z forward along the optical axis,
  +X right, +Y down. A depth value is the camera-frame Z coordinate of
  the surface point (not the ray length), stored as u16 millimeters with
  0 meaning "no return".
* World frame is right-handed with +Z up.
* A ``Pose`` maps camera coordinates into world coordinates:
  ``x_world = R @ x_cam + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import se3

ORTHONORMAL_TOL = 1e-9


class GeometryError(Exception):
    pass


class NonPositiveDepth(GeometryError):
    pass


class OutOfBounds(GeometryError):
    pass


class BehindCamera(GeometryError):
    pass


class ZeroDisparity(GeometryError):
    pass


class ResolutionMismatch(GeometryError):
    pass


def _frozen_array(a, shape, dtype=float):
    arr = np.array(a, dtype=dtype)
    if arr.shape != shape:
        raise GeometryError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Pose:
    """Rigid SE(3) transform: orthonormal rotation plus translation (m)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "rotation", _frozen_array(self.rotation, (3, 3))
        )
        object.__setattr__(
            self, "translation", _frozen_array(self.translation, (3,))
        )
        r = self.rotation
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(self.translation)):
            raise GeometryError("pose contains non-finite values")
        drift = np.abs(r @ r.T - np.eye(3)).max()
        if drift > ORTHONORMAL_TOL or abs(np.linalg.det(r) - 1.0) > ORTHONORMAL_TOL:
            raise GeometryError(
                f"rotation not orthonormal within {ORTHONORMAL_TOL} (drift {drift:.3e})"
            )

    @staticmethod
    def identity():
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m):
        m = np.asarray(m, dtype=float)
        return Pose(m[:3, :3], m[:3, 3])

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self):
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)


def compose(a: Pose, b: Pose) -> Pose:
    """a after b: apply ``b`` first, then ``a``."""
    r = a.rotation @ b.rotation
    drift = np.abs(r @ r.T - np.eye(3)).max()
    if drift > ORTHONORMAL_TOL:
        r = se3.nearest_rotation(r)
    return Pose(r, a.rotation @ b.translation + a.translation)


def apply(p: Pose, x):
    """Transform one point or an (N, 3) stack of points."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return p.rotation @ x + p.translation
    return x @ p.rotation.T + p.translation


def relative(a: Pose, b: Pose) -> Pose:
    """Pose of ``b`` expressed in ``a``'s frame: a^-1 . b."""
    return compose(a.inverse(), b)


def pose_log(p: Pose):
    return se3.se3_log(p.rotation, p.translation)


def pose_exp(xi) -> Pose:
    r, t = se3.se3_exp(xi)
    return Pose(se3.nearest_rotation(r), t)


def rotation_angle_deg(r):
    """Angle of a rotation matrix, degrees."""
    return math.degrees(np.linalg.norm(se3.so3_log(np.asarray(r, dtype=float))))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point outside image")

    @staticmethod
    def from_fov(width, height, hfov_deg, vfov_deg):
        """Derive focals from full horizontal/vertical fields of view."""
        fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        fy = (height / 2.0) / math.tan(math.radians(vfov_deg) / 2.0)
        return CameraIntrinsics(fx, fy, width / 2.0, height / 2.0, width, height)


# RealSense-like wide-angle RGB-D unit: 87 x 58 degree FOV at VGA.
DEFAULT_HFOV_DEG = 87.0
DEFAULT_VFOV_DEG = 58.0


def default_intrinsics(width=640, height=480):
    return CameraIntrinsics.from_fov(width, height, DEFAULT_HFOV_DEG, DEFAULT_VFOV_DEG)


@dataclass(frozen=True)
class StereoRig:
    """Rectified stereo pair: baseline (m) and shared focal length (px)."""

    baseline: float
    focal: float

    def __post_init__(self):
        if self.baseline <= 0 or self.focal <= 0:
            raise GeometryError("baseline and focal must be positive")


@dataclass
class DepthFrame:
    """One depth image: u16 millimeters, 0 = invalid, shape (height, width)."""

    frame_id: int
    timestamp: float
    intrinsics_id: str
    depths: np.ndarray
    pose_hint: Pose | None = None

    def __post_init__(self):
        self.depths = np.asarray(self.depths, dtype=np.uint16)
        if self.depths.ndim != 2:
            raise GeometryError("depths must be a 2-D array")

    @property
    def height(self):
        return self.depths.shape[0]

    @property
    def width(self):
        return self.depths.shape[1]


@dataclass
class PointCloud:
    """World-frame points (N, 3) in meters with optional (N, 3) u8 colors."""

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise GeometryError("point cloud contains non-finite coordinates")
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if len(self.colors) != len(self.points):
                raise GeometryError("colors must match point count")

    def __len__(self):
        return len(self.points)

    @staticmethod
    def empty():
        return PointCloud(np.zeros((0, 3)))


def concat_clouds(clouds):
    pts = [c.points for c in clouds]
    if not pts:
        return PointCloud.empty()
    return PointCloud(np.concatenate(pts, axis=0))


def project(intr: CameraIntrinsics, x):
    """Camera-frame point -> pixel (u, v). No bounds clamp."""
    x = np.asarray(x, dtype=float)
    z = x[..., 2]
    if np.any(z <= 0):
        raise BehindCamera("point has non-positive camera-frame z")
    u = intr.fx * x[..., 0] / z + intr.cx
    v = intr.fy * x[..., 1] / z + intr.cy
    return u, v


def backproject(intr: CameraIntrinsics, u, v, z):
    """Pixel plus depth (m) -> camera-frame point."""
    if z <= 0:
        raise NonPositiveDepth(f"depth {z} must be positive")
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        raise OutOfBounds(f"pixel ({u}, {v}) outside {intr.width}x{intr.height}")
    return np.array(
        [(u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z]
    )


def disparity_to_depth(rig: StereoRig, d):
    """Rectified-stereo triangulation: Z = f * B / d."""
    if d <= 0:
        raise ZeroDisparity(f"disparity {d} must be positive")
    return rig.focal * rig.baseline / d


def depth_to_disparity(rig: StereoRig, z):
    if z <= 0:
        raise NonPositiveDepth(f"depth {z} must be positive")
    return rig.focal * rig.baseline / z


def depth_to_cloud(frame: DepthFrame, intr: CameraIntrinsics, pose: Pose,
                   stride: int = 1) -> PointCloud:
    """Back-project every valid stride-grid pixel into the world frame."""
    if stride < 1:
        raise GeometryError("stride must be >= 1")
    if frame.width != intr.width or frame.height != intr.height:
        raise ResolutionMismatch(
            f"frame {frame.width}x{frame.height} vs intrinsics "
            f"{intr.width}x{intr.height}"
        )
    depths = frame.depths[::stride, ::stride].astype(float) / 1000.0
    vs, us = np.mgrid[0:frame.height:stride, 0:frame.width:stride]
    valid = depths > 0
    z = depths[valid]
    u = us[valid].astype(float)
    v = vs[valid].astype(float)
    pts_cam = np.stack(
        [(u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z], axis=1
    )
    return PointCloud(apply(pose, pts_cam))
