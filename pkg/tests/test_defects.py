import json

import numpy as np
import pytest

from conftest import random_pose
from twinfuse import fixtures
from twinfuse.defects import (DefectClusterer, DefectError, Detection2D,
                              NoValidDepth, defect_payload, locate, register)
from twinfuse.geometry import (DepthFrame, Pose, apply, default_intrinsics)
from twinfuse.harness import eval_intrinsics
from twinfuse.simulate import NoiseSpec, render_depth_frame
from twinfuse.store import Kind, Store


INTR = default_intrinsics(64, 48)


def uniform_frame(depth_mm=2000, frame_id=0):
    return DepthFrame(
        frame_id, 0.0, "i",
        np.full((INTR.height, INTR.width), depth_mm, dtype=np.uint16),
    )


class TestDetection2D:
    def test_rejects_degenerate_bbox(self):
        with pytest.raises(DefectError):
            Detection2D(0, (10, 10, 10, 20), "crack", 0.5)

    def test_rejects_bad_confidence(self):
        with pytest.raises(DefectError):
            Detection2D(0, (0, 0, 5, 5), "crack", 1.5)


class TestLocate:
    def test_center_bbox_uniform_depth(self):
        det = Detection2D(0, (INTR.cx - 8, INTR.cy - 8, INTR.cx + 8,
                              INTR.cy + 8), "crack", 0.9)
        anchor = locate(det, uniform_frame(2000), INTR, Pose.identity())
        assert np.allclose(anchor, [0.0, 0.0, 2.0])

    def test_all_invalid_raises(self):
        det = Detection2D(0, (4, 4, 12, 12), "crack", 0.9)
        with pytest.raises(NoValidDepth):
            locate(det, uniform_frame(0), INTR, Pose.identity())

    def test_median_ignores_invalid_pixels(self):
        depths = np.full((INTR.height, INTR.width), 3000, dtype=np.uint16)
        depths[::2, ::2] = 0
        det = Detection2D(0, (10, 10, 30, 30), "crack", 0.9)
        anchor = locate(det, DepthFrame(0, 0.0, "i", depths), INTR,
                        Pose.identity())
        assert anchor[2] == pytest.approx(3.0)

    def test_bbox_outside_image_rejected(self):
        det = Detection2D(0, (-5, 0, 10, 10), "crack", 0.9)
        with pytest.raises(DefectError):
            locate(det, uniform_frame(), INTR, Pose.identity())

    def test_synthetic_mark_on_fixture_surface(self):
        # Head-on view of the first planted mark, zero noise: the anchor
        # lands within a couple of millimeters of the declared truth.
        intr = eval_intrinsics()
        scene = fixtures.paper_room()
        mark = scene.defects[0]
        pose = Pose(fixtures.LOOK_XN, [1.50, 2.50, 1.20])
        frame = render_depth_frame(scene, pose, intr, NoiseSpec())
        det = Detection2D(0, (intr.cx - 16, intr.cy - 16, intr.cx + 16,
                              intr.cy + 16), "crack", 0.9)
        anchor = locate(det, frame, intr, pose)
        assert np.linalg.norm(anchor - np.array(mark.position)) < 0.006


class TestClusterer:
    def test_single_anchor(self):
        c = DefectClusterer(0.1)
        rec = c.add([1.0, 2.0, 3.0], "crack", 0.9, 0)
        assert rec.defect_id == 0
        assert np.allclose(rec.centroid, [1.0, 2.0, 3.0])
        assert rec.confidence == pytest.approx(0.9)

    def test_two_close_anchors_merge_hand_values(self):
        # 10 mm apart, radius 100 mm, confidences 0.5/0.5: centroid is the
        # midpoint, confidence 1 - 0.5^2 = 0.75.
        c = DefectClusterer(0.1)
        c.add([0.0, 0.0, 1.0], "crack", 0.5, 0)
        rec = c.add([0.010, 0.0, 1.0], "crack", 0.5, 1)
        assert len(c.records()) == 1
        assert np.allclose(rec.centroid, [0.005, 0.0, 1.0])
        assert rec.confidence == pytest.approx(0.75)

    def test_far_anchors_stay_separate(self):
        c = DefectClusterer(0.1)
        c.add([0.0, 0.0, 1.0], "crack", 0.5, 0)
        c.add([0.5, 0.0, 1.0], "crack", 0.5, 1)
        assert len(c.records()) == 2

    def test_labels_never_merge(self):
        c = DefectClusterer(0.1)
        c.add([0.0, 0.0, 1.0], "crack", 0.5, 0)
        c.add([0.0, 0.0, 1.0], "spall", 0.5, 1)
        assert len(c.records()) == 2

    def test_confidence_capped(self):
        c = DefectClusterer(0.1)
        for k in range(20):
            rec = c.add([0.0, 0.0, 1.0], "crack", 0.99, k)
        assert rec.confidence == pytest.approx(0.999)

    def test_weighted_centroid(self):
        c = DefectClusterer(0.5)
        c.add([0.0, 0.0, 0.0], "crack", 0.2, 0)
        rec = c.add([0.3, 0.0, 0.0], "crack", 0.6, 1)
        assert np.allclose(rec.centroid, [0.225, 0.0, 0.0])

    def test_cluster_count_invariant_under_permutation(self, rng):
        # All pairwise distances below the radius: always one cluster.
        anchors = rng.normal(size=(8, 3)) * 0.01
        for perm_seed in range(5):
            order = np.random.default_rng(perm_seed).permutation(8)
            c = DefectClusterer(0.5)
            for i in order:
                c.add(anchors[i], "crack", 0.5, int(i))
            assert len(c.records()) == 1
        # All pairwise distances above the radius: always n clusters.
        spread = np.arange(8)[:, None] * np.array([1.0, 0.0, 0.0])
        for perm_seed in range(5):
            order = np.random.default_rng(perm_seed).permutation(8)
            c = DefectClusterer(0.2)
            for i in order:
                c.add(spread[i], "crack", 0.5, int(i))
            assert len(c.records()) == 8

    def test_rigid_equivariance(self, rng):
        anchors = rng.normal(size=(12, 3))
        labels = ["crack"] * 6 + ["spall"] * 6
        transform = random_pose(rng)
        plain = DefectClusterer(0.8)
        moved = DefectClusterer(0.8)
        for k, (a, lab) in enumerate(zip(anchors, labels)):
            plain.add(a, lab, 0.5, k)
            moved.add(apply(transform, a), lab, 0.5, k)
        assert len(plain.records()) == len(moved.records())
        for p, m in zip(plain.records(), moved.records()):
            assert np.abs(apply(transform, p.centroid) - m.centroid).max() \
                < 1e-9


class TestRegister:
    def test_roundtrip_via_region_query(self, tmp_path):
        with Store(tmp_path) as store:
            c = DefectClusterer(0.1)
            rec = c.add([1.0, 2.0, 1.5], "crack", 0.9, 0)
            register(rec, store, 0.1)
            got = store.query(kind=Kind.DEFECT,
                              region=((0.8, 1.8, 1.3), (1.2, 2.2, 1.7)))
            assert len(got) == 1
            body = json.loads(got[0].payload)
            assert body["label"] == "crack"
            assert np.allclose(body["centroid"], [1.0, 2.0, 1.5])

    def test_upsert_bumps_version(self, tmp_path):
        with Store(tmp_path) as store:
            c = DefectClusterer(0.1)
            rec = c.add([1.0, 2.0, 1.5], "crack", 0.9, 0)
            rid = register(rec, store, 0.1)
            rec = c.add([1.002, 2.0, 1.5], "crack", 0.8, 1)
            rid2 = register(rec, store, 0.1)
            assert rid == rid2
            assert store.get(rid).version == 2

    def test_centroid_within_bounds(self, tmp_path):
        with Store(tmp_path) as store:
            c = DefectClusterer(0.1)
            rec = c.add([0.5, -1.0, 2.0], "crack", 0.7, 0)
            rid = register(rec, store, 0.1)
            stored = store.get(rid)
            lo, hi = stored.bounds
            body = json.loads(stored.payload)
            assert all(lo[i] <= body["centroid"][i] <= hi[i]
                       for i in range(3))
