"""2D detection -> 3D defect geolocation and clustering.

A detection is lifted by sampling the median valid depth inside its box,
back-projecting the box center, and transforming by the frame's optimized
pose. Anchors then merge into persistent defect entities by greedy
radius clustering, keyed by label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraIntrinsics, DepthFrame, Pose, apply, backproject
from .store import Kind, Store, derive_id, make_record

DEFAULT_CLUSTER_RADIUS = 0.100  # meters; order of the largest crack width
                                # class times a pose-error safety factor
_TIE_EPS = 1e-9
_CONFIDENCE_CAP = 0.999


class DefectError(Exception):
    pass


class NoValidDepth(DefectError):
    """Every pixel under the detection box carries no depth return."""


@dataclass(frozen=True)
class Detection2D:
    frame_id: int
    bbox: tuple          # (u0, v0, u1, v1) pixels
    label: str
    confidence: float

    def __post_init__(self):
        u0, v0, u1, v1 = self.bbox
        if not (u0 < u1 and v0 < v1):
            raise DefectError(f"degenerate bbox {self.bbox}")
        if not (0.0 <= self.confidence <= 1.0):
            raise DefectError("confidence must be in [0, 1]")
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))


@dataclass
class DefectRecord:
    defect_id: int
    label: str
    centroid: np.ndarray
    support: list                 # (frame_id, anchor 3-tuple, confidence)
    confidence: float


def locate(det: Detection2D, frame: DepthFrame, intr: CameraIntrinsics,
           pose: Pose):
    """World-frame anchor for one detection: median depth at the box center."""
    u0, v0, u1, v1 = det.bbox
    if u0 < 0 or v0 < 0 or u1 > intr.width or v1 > intr.height:
        raise DefectError(f"bbox {det.bbox} outside image")
    cols = slice(int(np.floor(u0)), int(np.ceil(u1)))
    rows = slice(int(np.floor(v0)), int(np.ceil(v1)))
    patch = frame.depths[rows, cols]
    valid = patch[patch > 0]
    if valid.size == 0:
        raise NoValidDepth(f"frame {det.frame_id} bbox {det.bbox}")
    depth_m = float(np.median(valid)) / 1000.0
    center_u = min((u0 + u1) / 2.0, intr.width - 1e-9)
    center_v = min((v0 + v1) / 2.0, intr.height - 1e-9)
    return apply(pose, backproject(intr, center_u, center_v, depth_m))


class DefectClusterer:
    """Greedy online radius clustering of anchors, separated by label."""

    def __init__(self, radius: float = DEFAULT_CLUSTER_RADIUS):
        if radius <= 0:
            raise DefectError("cluster radius must be positive")
        self.radius = radius
        self.clusters: list = []

    def add(self, anchor, label: str, confidence: float,
            frame_id: int) -> DefectRecord:
        anchor = np.asarray(anchor, dtype=float)
        best = None
        best_dist = None
        for rec in self.clusters:
            if rec.label != label:
                continue
            dist = float(np.linalg.norm(rec.centroid - anchor))
            if dist >= self.radius:
                continue
            # Ties within numerical noise resolve to the older cluster.
            if best is None or dist < best_dist - _TIE_EPS:
                best, best_dist = rec, dist
        if best is None:
            best = DefectRecord(len(self.clusters), label, anchor.copy(),
                                [], 0.0)
            self.clusters.append(best)
        best.support.append(
            (int(frame_id), tuple(float(v) for v in anchor), float(confidence))
        )
        weights = np.array([s[2] for s in best.support])
        anchors = np.array([s[1] for s in best.support])
        if weights.sum() <= 0:
            best.centroid = anchors.mean(axis=0)
        else:
            best.centroid = (anchors * weights[:, None]).sum(0) / weights.sum()
        miss = np.prod([1.0 - s[2] for s in best.support])
        best.confidence = min(1.0 - float(miss), _CONFIDENCE_CAP)
        return best

    def records(self):
        return list(self.clusters)


def defect_payload(rec: DefectRecord) -> bytes:
    return json.dumps({
        "defect_id": rec.defect_id,
        "label": rec.label,
        "centroid": [float(v) for v in rec.centroid],
        "confidence": rec.confidence,
        "support": [
            {"frame_id": f, "anchor": list(a), "confidence": c}
            for f, a, c in rec.support
        ],
    }).encode()


def register(rec: DefectRecord, store: Store,
             radius: float = DEFAULT_CLUSTER_RADIUS,
             namespace: str = "") -> bytes:
    """Upsert the defect as a kind=defect artifact (version bump on update)."""
    rid = derive_id("defect", namespace, rec.label, rec.defect_id)
    c = rec.centroid
    bounds = (
        tuple(float(v) - radius for v in c),
        tuple(float(v) + radius for v in c),
    )
    record = make_record(rid, Kind.DEFECT, defect_payload(rec), bounds=bounds)
    store.put(record)
    return rid
