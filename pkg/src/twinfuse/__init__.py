"""twinfuse: synthetic drone scanning, SLAM-style reconstruction, defect
geolocation, and a durable information-fusion store with a streaming wire
protocol."""

__version__ = "0.1.0"

from .geometry import (CameraIntrinsics, DepthFrame, PointCloud, Pose,
                       StereoRig, apply, backproject, compose, depth_to_cloud,
                       disparity_to_depth, project)
from .registration import RansacConfig, estimate_rigid, ransac_register
from .pose_graph import PoseGraph, PoseGraphEdge, optimize_pose_graph
from .pipeline import PipelineConfig, run_pipeline, voxel_downsample
from .store import ArtifactRecord, Kind, Store
from .evaluate import ErrorRow, MeasurementSpec, emit_report, error_row, measure_extent

__all__ = [
    "ArtifactRecord", "CameraIntrinsics", "DepthFrame", "ErrorRow", "Kind",
    "MeasurementSpec", "PipelineConfig", "PointCloud", "Pose", "PoseGraph",
    "PoseGraphEdge", "RansacConfig", "Store", "StereoRig", "apply",
    "backproject", "compose", "depth_to_cloud", "disparity_to_depth",
    "emit_report", "error_row", "estimate_rigid", "measure_extent",
    "optimize_pose_graph", "project", "ransac_register", "run_pipeline",
    "voxel_downsample",
]
