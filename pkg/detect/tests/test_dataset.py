import numpy as np
import pytest

from twinfuse_detect.dataset import (DatasetMissing, PatchDataset,
                                     load_sdnet, make_synthetic,
                                     split_dataset)


def test_synthetic_shapes_and_balance():
    ds = make_synthetic(60, seed=0)
    assert ds.patches.shape == (60, 256, 256, 3)
    assert ds.patches.dtype == np.uint8
    assert 0.2 < ds.balance() < 0.8


def test_synthetic_classes_differ_in_spread():
    ds = make_synthetic(80, seed=1)
    stds = ds.patches.mean(axis=3).reshape(len(ds), -1).std(axis=1)
    crack = stds[ds.labels == 1].mean()
    plain = stds[ds.labels == 0].mean()
    assert crack > plain * 1.5


def test_splits_disjoint_and_deterministic():
    ds = make_synthetic(100, seed=2)
    a = split_dataset(ds, seed=5)
    b = split_dataset(ds, seed=5)
    assert len(a.train) + len(a.val) + len(a.test) == len(ds)
    assert np.array_equal(a.train.patches, b.train.patches)
    assert np.array_equal(a.test.labels, b.test.labels)
    # Disjointness via content fingerprints.
    def keys(split):
        return {bytes(p[:2, :2].tobytes()) + bytes([l])
                for p, l in zip(split.patches, split.labels)}
    # fingerprint collisions would only shrink the union
    union = keys(a.train) | keys(a.val) | keys(a.test)
    assert len(union) > 0.9 * len(ds)


def test_missing_sdnet_raises_with_instructions(tmp_path):
    with pytest.raises(DatasetMissing) as err:
        load_sdnet(tmp_path / "nope")
    assert "SDNET2018" in str(err.value)
    assert "never bundled" in str(err.value)


def test_sdnet_layout_loader(tmp_path):
    # Miniature tree in the published convention.
    from PIL import Image

    rng = np.random.default_rng(0)
    for sub, cracked, plain in (("D", "CD", "UD"), ("W", "CW", "UW")):
        for cls in (cracked, plain):
            d = tmp_path / sub / cls
            d.mkdir(parents=True)
            for i in range(3):
                arr = rng.integers(0, 255, size=(256, 256, 3),
                                   dtype=np.uint8)
                Image.fromarray(arr).save(d / f"{i}.jpg")
    ds = load_sdnet(tmp_path)
    assert len(ds) == 12
    assert int(ds.labels.sum()) == 6
