"""Scene description: axis-aligned boxes plus point landmarks.

Scene files are JSON in SI meters:

    {"boxes": [{"min": [x,y,z], "max": [x,y,z], "label": "..."}],
     "landmarks": [{"id": n, "position": [x,y,z]}],
     "defects": [{"id": n, "label": "...", "position": [x,y,z]}]}

``defects`` is an optional extension carrying ground-truth surface marks
used by the evaluation fixtures; readers that only know boxes/landmarks
can ignore it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class SceneError(Exception):
    pass


@dataclass(frozen=True)
class Box:
    min: tuple
    max: tuple
    label: str = ""

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=float)
        hi = np.asarray(self.max, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise SceneError("box corners must be 3-vectors")
        if not np.all(lo < hi):
            raise SceneError(f"box min must be < max componentwise: {self}")
        object.__setattr__(self, "min", tuple(float(v) for v in lo))
        object.__setattr__(self, "max", tuple(float(v) for v in hi))


@dataclass(frozen=True)
class Landmark:
    id: int
    position: tuple

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float)
        if p.shape != (3,):
            raise SceneError("landmark position must be a 3-vector")
        object.__setattr__(self, "position", tuple(float(v) for v in p))


@dataclass(frozen=True)
class DefectMark:
    """Ground-truth surface defect location used by fixtures and tests."""

    id: int
    label: str
    position: tuple

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float)
        object.__setattr__(self, "position", tuple(float(v) for v in p))


@dataclass
class SceneSpec:
    boxes: list = field(default_factory=list)
    landmarks: list = field(default_factory=list)
    defects: list = field(default_factory=list)

    def __post_init__(self):
        ids = [lm.id for lm in self.landmarks]
        if len(ids) != len(set(ids)):
            raise SceneError("landmark ids must be unique")

    def box_arrays(self):
        """(B, 3) min corners and (B, 3) max corners."""
        if not self.boxes:
            return np.zeros((0, 3)), np.zeros((0, 3))
        lo = np.array([b.min for b in self.boxes])
        hi = np.array([b.max for b in self.boxes])
        return lo, hi

    def landmark_arrays(self):
        """(L,) ids and (L, 3) positions."""
        if not self.landmarks:
            return np.zeros(0, dtype=int), np.zeros((0, 3))
        ids = np.array([lm.id for lm in self.landmarks], dtype=int)
        pos = np.array([lm.position for lm in self.landmarks])
        return ids, pos


def scene_to_dict(scene: SceneSpec) -> dict:
    out = {
        "boxes": [
            {"min": list(b.min), "max": list(b.max), "label": b.label}
            for b in scene.boxes
        ],
        "landmarks": [
            {"id": lm.id, "position": list(lm.position)}
            for lm in scene.landmarks
        ],
    }
    if scene.defects:
        out["defects"] = [
            {"id": d.id, "label": d.label, "position": list(d.position)}
            for d in scene.defects
        ]
    return out


def scene_from_dict(data: dict) -> SceneSpec:
    boxes = [
        Box(tuple(b["min"]), tuple(b["max"]), b.get("label", ""))
        for b in data.get("boxes", [])
    ]
    landmarks = [
        Landmark(int(lm["id"]), tuple(lm["position"]))
        for lm in data.get("landmarks", [])
    ]
    defects = [
        DefectMark(int(d["id"]), d.get("label", "defect"), tuple(d["position"]))
        for d in data.get("defects", [])
    ]
    return SceneSpec(boxes, landmarks, defects)


def save_scene(scene: SceneSpec, path):
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=1))


def load_scene(path) -> SceneSpec:
    return scene_from_dict(json.loads(Path(path).read_text()))
