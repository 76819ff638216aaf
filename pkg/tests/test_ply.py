import numpy as np
import pytest

from twinfuse.geometry import PointCloud
from twinfuse.ply import PlyError, dumps_ply, loads_ply, read_ply, write_ply


def test_header_shape():
    cloud = PointCloud(np.array([[1.0, 2.0, 3.0]]))
    text = dumps_ply(cloud).decode()
    lines = text.split("\n")
    assert lines[0] == "ply"
    assert lines[1] == "format ascii 1.0"
    assert lines[2] == "element vertex 1"
    assert lines[3:6] == ["property float x", "property float y",
                          "property float z"]
    assert "end_header" in lines
    assert "\r" not in text


def test_roundtrip_plain(tmp_path, rng):
    cloud = PointCloud(rng.uniform(-5, 5, size=(100, 3)))
    path = tmp_path / "cloud.ply"
    write_ply(cloud, path)
    back = read_ply(path)
    assert np.abs(back.points - cloud.points).max() < 1e-6
    assert back.colors is None


def test_roundtrip_colored(rng):
    cloud = PointCloud(
        rng.uniform(-5, 5, size=(40, 3)),
        rng.integers(0, 256, size=(40, 3)).astype(np.uint8),
    )
    back = loads_ply(dumps_ply(cloud))
    assert np.abs(back.points - cloud.points).max() < 1e-6
    assert np.array_equal(back.colors, cloud.colors)


def test_empty_cloud():
    back = loads_ply(dumps_ply(PointCloud.empty()))
    assert len(back) == 0


def test_rejects_garbage():
    with pytest.raises(PlyError):
        loads_ply(b"obj\n1 2 3\n")
