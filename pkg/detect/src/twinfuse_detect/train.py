"""Training loop with seeded determinism and hashed-config checkpoints.

Determinism note: given one seed, one machine, and one torch build, runs
reproduce bit-identically (cuDNN is not in play on CPU); across torch
versions expect validation accuracy to match only within a small
tolerance, which is why checkpoints carry their config hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .dataset import PatchDataset
from .models import TorchClassifier, build_backbone


@dataclass
class TrainConfig:
    backbone: str = "small-resnet-18-class"
    epochs: int = 5
    seed: int = 0
    image_size: int = 64
    batch_size: int = 32
    lr: float = 1e-3


def config_hash(cfg: TrainConfig) -> str:
    return hashlib.sha256(
        json.dumps(asdict(cfg), sort_keys=True).encode()
    ).hexdigest()[:16]


def _as_tensors(ds: PatchDataset, image_size: int):
    x = torch.from_numpy(ds.patches.astype(np.float32)).permute(0, 3, 1, 2)
    x = torch.nn.functional.interpolate(
        x / 255.0, size=(image_size, image_size), mode="bilinear",
        align_corners=False,
    )
    return x, torch.from_numpy(ds.labels)


def train(train_split: PatchDataset, cfg: TrainConfig,
          val_split: PatchDataset | None = None):
    """Returns (classifier, history dict)."""
    if len(train_split) == 0:
        raise ValueError("empty train split")
    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed)
    model = build_backbone(cfg.backbone)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    loss_fn = nn.CrossEntropyLoss()
    x, y = _as_tensors(train_split, cfg.image_size)
    history = {"loss": [], "train_accuracy": []}
    order_rng = np.random.default_rng(cfg.seed)
    model.train()
    for _epoch in range(cfg.epochs):
        order = order_rng.permutation(len(x))
        epoch_loss = 0.0
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            opt.zero_grad()
            logits = model(x[idx])
            loss = loss_fn(logits, y[idx])
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach()) * len(idx)
        history["loss"].append(epoch_loss / len(x))
        model.eval()
        with torch.no_grad():
            acc = float((model(x).argmax(1) == y).float().mean())
        model.train()
        history["train_accuracy"].append(acc)
    clf = TorchClassifier(model, cfg.image_size)
    if val_split is not None and len(val_split):
        probs = clf.predict_proba(val_split.patches)
        history["val_accuracy"] = float(
            ((probs > 0.5).astype(int) == val_split.labels).mean())
    return clf, history


def save_checkpoint(clf: TorchClassifier, cfg: TrainConfig, history,
                    path):
    torch.save({
        "state_dict": clf.model.state_dict(),
        "config": asdict(cfg),
        "config_hash": config_hash(cfg),
        "history": history,
    }, path)


def load_checkpoint(path) -> tuple[TorchClassifier, TrainConfig, dict]:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    cfg = TrainConfig(**blob["config"])
    if blob.get("config_hash") != config_hash(cfg):
        raise ValueError(f"checkpoint config hash mismatch in {path}")
    model = build_backbone(cfg.backbone)
    model.load_state_dict(blob["state_dict"])
    return TorchClassifier(model, cfg.image_size), cfg, blob.get("history", {})
