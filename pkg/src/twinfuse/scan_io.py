"""On-disk scan directory produced by `twinfuse simulate`.

Layout:

    meta.json           intrinsics, frame count, rates, noise, seed
    frames/frame_%06d.bin   depth frames in the wire DEPTH_FRAME payload
                            encoding (u64 id, u16 w, u16 h, u16 depths, BE)
    observations.jsonl  one line per frame: landmark sightings
    poses.json          odometry estimates and (simulation-only) truth
    loop_closures.json  simulator-declared frame-id pairs
    detections.jsonl    optional scripted 2-D detections
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, DepthFrame, Pose
from .simulate import LandmarkObservation


class ScanIOError(Exception):
    pass


def encode_depth_payload(frame: DepthFrame) -> bytes:
    h, w = frame.depths.shape
    head = struct.pack(">QHH", frame.frame_id, w, h)
    body = frame.depths.astype(">u2").tobytes()
    return head + body


def decode_depth_payload(payload: bytes) -> DepthFrame:
    if len(payload) < 12:
        raise ScanIOError("depth payload too short")
    frame_id, w, h = struct.unpack(">QHH", payload[:12])
    expected = 12 + 2 * w * h
    if len(payload) != expected:
        raise ScanIOError(
            f"depth payload length {len(payload)} != expected {expected}"
        )
    depths = np.frombuffer(payload[12:], dtype=">u2").astype(np.uint16)
    return DepthFrame(frame_id, 0.0, "default", depths.reshape(h, w))


def pose_to_dict(p: Pose, frame_id=None):
    d = {
        "rotation": [float(v) for v in p.rotation.ravel()],
        "translation": [float(v) for v in p.translation],
    }
    if frame_id is not None:
        d["frame_id"] = int(frame_id)
    return d


def pose_from_dict(d) -> Pose:
    return Pose(
        np.array(d["rotation"], dtype=float).reshape(3, 3),
        np.array(d["translation"], dtype=float),
    )


def intrinsics_to_dict(intr: CameraIntrinsics):
    return {
        "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
        "width": intr.width, "height": intr.height,
    }


def intrinsics_from_dict(d) -> CameraIntrinsics:
    return CameraIntrinsics(
        d["fx"], d["fy"], d["cx"], d["cy"], int(d["width"]), int(d["height"])
    )


def trajectory_to_dict(traj):
    return {
        "waypoints": [pose_to_dict(p) for p in traj.waypoints],
        "frame_rate": traj.frame_rate,
        "motion_noise": {
            "rot_sigma": traj.motion_noise.rot_sigma,
            "trans_sigma": traj.motion_noise.trans_sigma,
        },
    }


def trajectory_from_dict(d):
    from .simulate import MotionNoise, TrajectorySpec

    noise = d.get("motion_noise", {})
    return TrajectorySpec(
        [pose_from_dict(w) for w in d["waypoints"]],
        float(d["frame_rate"]),
        MotionNoise(float(noise.get("rot_sigma", 0.0)),
                    float(noise.get("trans_sigma", 0.0))),
    )


def save_trajectory(traj, path):
    Path(path).write_text(json.dumps(trajectory_to_dict(traj), indent=1))


def load_trajectory(path):
    return trajectory_from_dict(json.loads(Path(path).read_text()))


@dataclass
class ScanData:
    """In-memory view of one recorded scan."""

    intrinsics: CameraIntrinsics
    frames: list
    observations: list          # list (per frame) of LandmarkObservation lists
    odometry: list              # list of Pose
    truth: list = field(default_factory=list)
    loop_closures: list = field(default_factory=list)
    detections: list = field(default_factory=list)   # raw dicts
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.frames)
        if len(self.observations) != n or len(self.odometry) != n:
            raise ScanIOError("frames/observations/odometry lengths differ")


def write_scan(path, scan: ScanData):
    root = Path(path)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    meta = dict(scan.meta)
    meta["intrinsics"] = intrinsics_to_dict(scan.intrinsics)
    meta["frame_count"] = len(scan.frames)
    (root / "meta.json").write_text(json.dumps(meta, indent=1))
    for frame in scan.frames:
        data = encode_depth_payload(frame)
        (root / "frames" / f"frame_{frame.frame_id:06d}.bin").write_bytes(data)
    with open(root / "observations.jsonl", "w") as f:
        for frame, obs in zip(scan.frames, scan.observations):
            f.write(json.dumps({
                "frame_id": frame.frame_id,
                "landmarks": [
                    {"id": o.landmark_id,
                     "point": [float(v) for v in o.camera_point],
                     "is_outlier": o.is_outlier}
                    for o in obs
                ],
            }) + "\n")
    poses = {
        "odometry": [pose_to_dict(p, f.frame_id)
                     for p, f in zip(scan.odometry, scan.frames)],
    }
    if scan.truth:
        poses["truth"] = [pose_to_dict(p, f.frame_id)
                          for p, f in zip(scan.truth, scan.frames)]
    (root / "poses.json").write_text(json.dumps(poses))
    (root / "loop_closures.json").write_text(
        json.dumps([[int(a), int(b)] for a, b in scan.loop_closures])
    )
    if scan.detections:
        with open(root / "detections.jsonl", "w") as f:
            for det in scan.detections:
                f.write(json.dumps(det) + "\n")


def read_scan(path) -> ScanData:
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise ScanIOError(f"not a scan directory (no meta.json): {root}")
    meta = json.loads(meta_path.read_text())
    intr = intrinsics_from_dict(meta["intrinsics"])
    frames = []
    for fp in sorted((root / "frames").glob("frame_*.bin")):
        frames.append(decode_depth_payload(fp.read_bytes()))
    frame_rate = meta.get("frame_rate")
    for frame in frames:
        if frame_rate:
            frame.timestamp = frame.frame_id / frame_rate
        frame.intrinsics_id = meta.get("intrinsics_id", "default")
    obs_by_frame = {}
    obs_path = root / "observations.jsonl"
    if obs_path.exists():
        for line in obs_path.read_text().splitlines():
            row = json.loads(line)
            obs_by_frame[row["frame_id"]] = [
                LandmarkObservation(
                    int(lm["id"]), tuple(lm["point"]),
                    bool(lm.get("is_outlier", False))
                )
                for lm in row["landmarks"]
            ]
    observations = [obs_by_frame.get(f.frame_id, []) for f in frames]
    poses = json.loads((root / "poses.json").read_text())
    odometry = [pose_from_dict(d) for d in poses["odometry"]]
    truth = [pose_from_dict(d) for d in poses.get("truth", [])]
    closures_path = root / "loop_closures.json"
    loop_closures = (
        [tuple(pair) for pair in json.loads(closures_path.read_text())]
        if closures_path.exists() else []
    )
    detections = []
    det_path = root / "detections.jsonl"
    if det_path.exists():
        detections = [
            json.loads(line) for line in det_path.read_text().splitlines()
        ]
    return ScanData(intr, frames, observations, odometry, truth,
                    loop_closures, detections, meta)
