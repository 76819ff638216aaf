"""Reconstruction pipeline: frame-to-frame odometry at stream rate with
periodic pose-graph refinement, then map fusion into a voxel-thinned cloud.

The two stages honor a snapshot contract: optimization always consumes an
immutable copy of the graph and publishes refined poses atomically, with
any frames that arrived meanwhile re-anchored onto the refined suffix.
Odometry therefore never waits on optimization. Run single-threaded the
same code path is exercised at the same snapshot points, producing
identical output for identical seeds.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (CameraIntrinsics, DepthFrame, PointCloud, Pose, compose,
                       depth_to_cloud, relative)
from .pose_graph import PoseGraph, PoseGraphEdge, optimize_pose_graph
from .registration import NoConsensus, RansacConfig, ransac_register
from .scan_io import ScanData

log = logging.getLogger(__name__)


class PipelineError(Exception):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    ransac: RansacConfig = field(default_factory=RansacConfig)
    optimize_every: int = 10
    voxel: float = 0.020
    cloud_stride: int = 2
    cloud_max_depth: float | None = None
    map_frames: frozenset | None = None
    proximity_closures: bool = False
    proximity_radius: float = 0.5
    proximity_min_gap: int = 10
    fallback_weight_scale: float = 0.1
    graph_max_iters: int = 50
    graph_tol: float = 1e-10


@dataclass
class PipelineResult:
    trajectory: list               # optimized Pose per frame
    pre_opt_trajectory: list       # raw chained odometry per frame
    graph: PoseGraph
    map: PointCloud
    frame_ids: list
    events: list


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """One point per occupied voxel: the centroid of its members."""
    if voxel <= 0:
        raise PipelineError("voxel size must be positive")
    if len(cloud) == 0:
        return PointCloud.empty()
    keys = np.floor(cloud.points / voxel).astype(np.int64)
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    keys = keys[order]
    pts = cloud.points[order]
    boundary = np.ones(len(keys), dtype=bool)
    boundary[1:] = np.any(keys[1:] != keys[:-1], axis=1)
    group = np.cumsum(boundary) - 1
    n_groups = group[-1] + 1
    sums = np.zeros((n_groups, 3))
    np.add.at(sums, group, pts)
    counts = np.bincount(group, minlength=n_groups).astype(float)
    return PointCloud(sums / counts[:, None])


def correspondences_from_observations(prev_obs, cur_obs):
    """Match observations of the two frames by shared landmark id.

    Returns (source, target): current-frame points and previous-frame
    points, so the estimated transform is the pose of the current camera
    expressed in the previous camera's frame.
    """
    prev_by_id = {o.landmark_id: o.camera_point for o in prev_obs}
    src, dst = [], []
    for o in cur_obs:
        p = prev_by_id.get(o.landmark_id)
        if p is not None:
            src.append(o.camera_point)
            dst.append(p)
    return np.array(src, dtype=float).reshape(-1, 3), np.array(
        dst, dtype=float).reshape(-1, 3)


class ReconstructionSession:
    """Streaming consumer implementing the odometry/optimization split."""

    def __init__(self, intrinsics: CameraIntrinsics,
                 cfg: PipelineConfig = PipelineConfig(), seed: int = 0,
                 anchor: Pose | None = None):
        self.intrinsics = intrinsics
        self.cfg = cfg
        self.seed = seed
        self.anchor = anchor
        self._lock = threading.Lock()
        self._graph = PoseGraph()
        self._frame_ids = []
        self._observations = []
        self._pre_opt = []
        self._last_rel = None
        self.events = []
        self._worker = None
        self._optimize_requested = threading.Event()
        self._stop = threading.Event()

    # -- odometry stage -------------------------------------------------

    def add_frame(self, frame: DepthFrame, observations,
                  odom_pose: Pose | None = None):
        """Register the frame against its predecessor and extend the graph."""
        with self._lock:
            n = len(self._graph.nodes)
        if n == 0:
            start = self.anchor or odom_pose or Pose.identity()
            with self._lock:
                self._graph.nodes.append(start)
                self._frame_ids.append(frame.frame_id)
                self._observations.append(observations)
                self._pre_opt.append(start)
            return
        rel, weight = self._estimate_relative(frame, observations, n)
        with self._lock:
            prev = self._graph.nodes[-1]
            self._graph.nodes.append(compose(prev, rel))
            self._graph.edges.append(
                PoseGraphEdge(n - 1, n, rel, weight)
            )
            self._frame_ids.append(frame.frame_id)
            self._observations.append(observations)
            self._pre_opt.append(compose(self._pre_opt[-1], rel))

    def _estimate_relative(self, frame, observations, index):
        src, dst = correspondences_from_observations(
            self._observations[-1], observations
        )
        try:
            if len(src) < self.cfg.ransac.min_inliers:
                raise NoConsensus(
                    f"only {len(src)} shared landmarks with previous frame"
                )
            result = ransac_register(
                src, dst, self.cfg.ransac,
                seed=np.random.SeedSequence(
                    entropy=(self.seed, int(frame.frame_id), 11)
                ).generate_state(1)[0],
            )
            self._last_rel = result.pose
            return result.pose, 1.0
        except NoConsensus as exc:
            rel = self._last_rel or Pose.identity()
            self.events.append({
                "frame_id": int(frame.frame_id),
                "event": "odometry_fallback",
                "detail": str(exc),
            })
            log.info("frame %s: odometry fallback (%s)", frame.frame_id, exc)
            return rel, self.cfg.fallback_weight_scale

    def add_loop_closure(self, i_index: int, j_index: int):
        """Try to register two non-adjacent frames and add the constraint."""
        src, dst = correspondences_from_observations(
            self._observations[i_index], self._observations[j_index]
        )
        try:
            if len(src) < self.cfg.ransac.min_inliers:
                raise NoConsensus("too few shared landmarks for closure")
            result = ransac_register(
                src, dst, self.cfg.ransac,
                seed=np.random.SeedSequence(
                    entropy=(self.seed, i_index, j_index, 13)
                ).generate_state(1)[0],
            )
        except NoConsensus as exc:
            self.events.append({
                "frame_id": int(self._frame_ids[j_index]),
                "event": "loop_closure_rejected",
                "detail": str(exc),
            })
            return False
        with self._lock:
            self._graph.edges.append(
                PoseGraphEdge(i_index, j_index, result.pose, 1.0)
            )
        return True

    # -- optimization stage ----------------------------------------------

    def optimize(self):
        """Snapshot, refine, publish. Safe to call from a worker thread."""
        with self._lock:
            m = len(self._graph.nodes)
            snapshot = PoseGraph(
                list(self._graph.nodes[:m]),
                [e for e in self._graph.edges
                 if e.from_node < m and e.to_node < m],
            )
        if m < 2:
            return None
        result = optimize_pose_graph(
            snapshot, self.cfg.graph_max_iters, self.cfg.graph_tol
        )
        with self._lock:
            stale_last = self._graph.nodes[m - 1]
            self._graph.nodes[:m] = result.nodes
            # Frames that arrived while optimizing chain off the refined tip.
            for k in range(m, len(self._graph.nodes)):
                self._graph.nodes[k] = compose(
                    result.nodes[m - 1],
                    relative(stale_last, self._graph.nodes[k]),
                )
        return result

    def start_background_optimizer(self):
        if self._worker is not None:
            return

        def loop():
            while not self._stop.is_set():
                self._optimize_requested.wait(timeout=0.05)
                if self._optimize_requested.is_set():
                    self._optimize_requested.clear()
                    self.optimize()

        self._worker = threading.Thread(target=loop, daemon=True)
        self._worker.start()

    def request_optimize(self):
        if self._worker is not None:
            self._optimize_requested.set()
        else:
            self.optimize()

    def stop_background_optimizer(self):
        if self._worker is None:
            return
        self._stop.set()
        self._worker.join()
        self._worker = None

    def proximity_closures(self):
        """Pairs of far-apart frames whose optimized positions are close."""
        with self._lock:
            nodes = list(self._graph.nodes)
            connected = {(e.from_node, e.to_node) for e in self._graph.edges}
        pairs = []
        for j in range(len(nodes)):
            for i in range(j - self.cfg.proximity_min_gap):
                if (i, j) in connected:
                    continue
                gap = np.linalg.norm(
                    nodes[i].translation - nodes[j].translation
                )
                if gap < self.cfg.proximity_radius:
                    pairs.append((i, j))
        return pairs

    # -- results ----------------------------------------------------------

    def trajectory(self):
        with self._lock:
            return list(self._graph.nodes)

    def graph(self):
        with self._lock:
            return self._graph.copy()

    def build_map(self, frames) -> PointCloud:
        cfg = self.cfg
        nodes = self.trajectory()
        clouds = []
        for idx, frame in enumerate(frames):
            if (cfg.map_frames is not None
                    and frame.frame_id not in cfg.map_frames):
                continue
            depths = frame.depths
            if cfg.cloud_max_depth is not None:
                cap = int(cfg.cloud_max_depth * 1000)
                depths = depths.copy()
                depths[depths > cap] = 0
            capped = DepthFrame(frame.frame_id, frame.timestamp,
                                frame.intrinsics_id, depths)
            clouds.append(
                depth_to_cloud(capped, self.intrinsics, nodes[idx],
                               cfg.cloud_stride)
            )
        pts = (np.concatenate([c.points for c in clouds])
               if clouds else np.zeros((0, 3)))
        return voxel_downsample(PointCloud(pts), cfg.voxel)


def run_pipeline(scan: ScanData, cfg: PipelineConfig = PipelineConfig(),
                 seed: int = 0, background: bool = False) -> PipelineResult:
    """Consume a recorded scan and return trajectory, graph, and map."""
    anchor = scan.odometry[0] if scan.odometry else None
    session = ReconstructionSession(scan.intrinsics, cfg, seed, anchor)
    if background:
        session.start_background_optimizer()
    closures_by_later = {}
    index_of = {}
    for a, b in scan.loop_closures:
        i, j = (a, b) if a < b else (b, a)
        closures_by_later.setdefault(j, []).append(i)
    try:
        for idx, frame in enumerate(scan.frames):
            odom = scan.odometry[idx] if scan.odometry else None
            session.add_frame(frame, scan.observations[idx], odom)
            index_of[frame.frame_id] = idx
            pending = closures_by_later.get(frame.frame_id, [])
            closed = False
            for earlier in pending:
                if earlier in index_of:
                    closed = session.add_loop_closure(
                        index_of[earlier], idx
                    ) or closed
            if closed or (idx > 0 and idx % cfg.optimize_every == 0):
                session.request_optimize()
                if cfg.proximity_closures and not background:
                    for i, j in session.proximity_closures():
                        session.add_loop_closure(i, j)
    finally:
        if background:
            session.stop_background_optimizer()
    session.optimize()
    return PipelineResult(
        trajectory=session.trajectory(),
        pre_opt_trajectory=list(session._pre_opt),
        graph=session.graph(),
        map=session.build_map(scan.frames),
        frame_ids=list(session._frame_ids),
        events=list(session.events),
    )
