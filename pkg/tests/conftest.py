import numpy as np
import pytest

from twinfuse.geometry import Pose
from twinfuse import se3


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_pose(rng, max_angle=2.5, trans_scale=2.0):
    return Pose(
        se3.random_rotation(rng, max_angle=max_angle),
        rng.normal(size=3) * trans_scale,
    )


def rot_z(deg):
    a = np.deg2rad(deg)
    return np.array([
        [np.cos(a), -np.sin(a), 0.0],
        [np.sin(a), np.cos(a), 0.0],
        [0.0, 0.0, 1.0],
    ])


def drifted_square(odom_weight=0.1):
    """Unit square with systematic per-step yaw drift plus an exact loop edge.

    Odometry edges are weighted below the loop closure, mirroring how the
    pipeline trusts direct registration over drifty step estimates.
    Returns (truth nodes, initialized nodes, edges, the drift step).
    """
    from twinfuse.geometry import compose, relative
    from twinfuse.pose_graph import PoseGraphEdge

    truth = [Pose(np.eye(3), np.zeros(3))]
    step = Pose(rot_z(90), [1.0, 0.0, 0.0])
    for _ in range(3):
        truth.append(compose(truth[-1], step))
    drift = Pose(rot_z(4.0), [0.02, -0.01, 0.0])
    noisy_step = compose(step, drift)
    nodes = [truth[0]]
    for _ in range(3):
        nodes.append(compose(nodes[-1], noisy_step))
    edges = [PoseGraphEdge(i, i + 1, noisy_step, odom_weight)
             for i in range(3)]
    edges.append(PoseGraphEdge(3, 0, relative(truth[3], truth[0]), 1.0))
    return truth, nodes, edges, drift
