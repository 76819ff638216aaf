import numpy as np
import pytest

from twinfuse import fixtures
from twinfuse.harness import eval_intrinsics, render_scan
from twinfuse.scan_io import (ScanIOError, load_trajectory, read_scan,
                              save_trajectory, write_scan)
from twinfuse.simulate import NoiseSpec


def small_scan(seed=0):
    scene = fixtures.paper_room()
    traj = fixtures.defect_trajectory()
    return render_scan(scene, traj, eval_intrinsics(80, 60),
                       NoiseSpec(0.01, 0.2, seed), seed)


def test_scan_roundtrip(tmp_path):
    scan = small_scan()
    write_scan(tmp_path / "scan", scan)
    back = read_scan(tmp_path / "scan")
    assert len(back.frames) == len(scan.frames)
    for a, b in zip(scan.frames, back.frames):
        assert a.frame_id == b.frame_id
        assert np.array_equal(a.depths, b.depths)
    for a_obs, b_obs in zip(scan.observations, back.observations):
        assert len(a_obs) == len(b_obs)
        for a, b in zip(a_obs, b_obs):
            assert a.landmark_id == b.landmark_id
            assert a.is_outlier == b.is_outlier
            assert np.allclose(a.camera_point, b.camera_point)
    for a, b in zip(scan.odometry, back.odometry):
        assert np.allclose(a.matrix(), b.matrix())
    assert back.loop_closures == scan.loop_closures
    assert back.detections == scan.detections
    assert back.intrinsics == scan.intrinsics


def test_read_rejects_non_scan_dir(tmp_path):
    with pytest.raises(ScanIOError):
        read_scan(tmp_path)


def test_trajectory_file_roundtrip(tmp_path):
    traj = fixtures.measurement_trajectory(0.001, 0.002)
    save_trajectory(traj, tmp_path / "t.json")
    back = load_trajectory(tmp_path / "t.json")
    assert back.frame_rate == traj.frame_rate
    assert back.motion_noise == traj.motion_noise
    assert len(back.waypoints) == len(traj.waypoints)
    for a, b in zip(traj.waypoints, back.waypoints):
        assert np.allclose(a.matrix(), b.matrix())
