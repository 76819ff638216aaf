"""Crack-patch datasets: SDNET2018 loader and a synthetic separable fixture.

SDNET2018 is a public dataset of 256x256 concrete-surface patches. It is
never bundled; point --data at a local copy laid out in the published
convention (substructure folders whose class subfolders start with C for
cracked, U for uncracked, e.g. D/CD, D/UD, P/CP, P/UP, W/CW, W/UW).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

PATCH_SIZE = 256
LABELS = ("no_crack", "crack")

SDNET_HELP = """\
SDNET2018 not found. Download the dataset (search "SDNET2018 concrete
crack dataset"; it is distributed through the Utah State University
digital commons) and unpack it so that --data points at the directory
containing the D/, P/, and W/ substructure folders, each holding C*/ and
U*/ class subfolders of 256x256 jpeg patches. Nothing is downloaded
automatically and the data is never bundled with this package."""


class DatasetMissing(Exception):
    pass


@dataclass
class PatchDataset:
    """Patches (N, H, W, 3) uint8 with integer labels (1 = crack)."""

    patches: np.ndarray
    labels: np.ndarray
    name: str = "patches"

    def __post_init__(self):
        self.patches = np.asarray(self.patches, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.patches) != len(self.labels):
            raise ValueError("patch/label count mismatch")

    def __len__(self):
        return len(self.patches)

    def balance(self):
        """Fraction of crack patches; reported whenever splits are made."""
        return float(self.labels.mean()) if len(self) else 0.0

    def subset(self, idx):
        return PatchDataset(self.patches[idx], self.labels[idx], self.name)


@dataclass
class Splits:
    train: PatchDataset
    val: PatchDataset
    test: PatchDataset


def split_dataset(ds: PatchDataset, seed: int = 0, train_frac: float = 0.7,
                  val_frac: float = 0.15) -> Splits:
    """Deterministic disjoint train/val/test split."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    n_train = int(len(ds) * train_frac)
    n_val = int(len(ds) * val_frac)
    return Splits(
        ds.subset(order[:n_train]),
        ds.subset(order[n_train:n_train + n_val]),
        ds.subset(order[n_train + n_val:]),
    )


def load_sdnet(root, limit_per_class: int | None = None) -> PatchDataset:
    root = Path(root)
    if not root.exists():
        raise DatasetMissing(SDNET_HELP)
    try:
        from PIL import Image
    except ImportError as exc:
        raise DatasetMissing("Pillow is required to read SDNET2018") from exc
    patches, labels = [], []
    counts = {0: 0, 1: 0}
    class_dirs = sorted(
        d for sub in root.iterdir() if sub.is_dir()
        for d in sub.iterdir()
        if d.is_dir() and d.name[:1].upper() in ("C", "U")
    )
    if not class_dirs:
        raise DatasetMissing(SDNET_HELP)
    for class_dir in class_dirs:
        label = 1 if class_dir.name[:1].upper() == "C" else 0
        for img_path in sorted(class_dir.glob("*.jpg")):
            if limit_per_class and counts[label] >= limit_per_class:
                break
            with Image.open(img_path) as img:
                arr = np.asarray(img.convert("RGB").resize(
                    (PATCH_SIZE, PATCH_SIZE)))
            patches.append(arr)
            labels.append(label)
            counts[label] += 1
    if not patches:
        raise DatasetMissing(SDNET_HELP)
    return PatchDataset(np.stack(patches), np.array(labels), "sdnet2018")


def make_synthetic(n: int = 200, seed: int = 0,
                   size: int = PATCH_SIZE) -> PatchDataset:
    """Linearly separable stand-in: dark jagged streak vs plain concrete.

    Used by the smoke tests so the suite never needs the real dataset.
    """
    rng = np.random.default_rng(seed)
    patches = np.empty((n, size, size, 3), dtype=np.uint8)
    labels = rng.integers(0, 2, size=n)
    half_w = max(2, size // 48)  # streak survives train-time downscaling
    for i in range(n):
        base = rng.normal(170, 8, size=(size, size))
        if labels[i]:
            x = rng.integers(size // 4, 3 * size // 4)
            y = 0
            while y < size:
                run = int(rng.integers(8, 24))
                x = int(np.clip(x + rng.integers(-4, 5), half_w,
                                size - half_w - 1))
                base[y:y + run, x - half_w:x + half_w + 1] -= \
                    rng.uniform(80, 120)
                y += run
        gray = np.clip(base, 0, 255).astype(np.uint8)
        patches[i] = gray[..., None].repeat(3, axis=2)
    return PatchDataset(patches, labels, "synthetic")
