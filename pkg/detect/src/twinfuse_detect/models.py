"""Classifier backbones plus the deterministic no-training stub."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

BACKBONES = ("small-resnet-18-class", "small-resnet-50-class",
             "vgg-16-class")


def _gn(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, channels), channels)


class BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride, 1, bias=False)
        self.n1 = _gn(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, 1, 1, bias=False)
        self.n2 = _gn(cout)
        self.down = None
        if stride != 1 or cin != cout:
            self.down = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride, bias=False), _gn(cout))

    def forward(self, x):
        identity = self.down(x) if self.down is not None else x
        out = torch.relu(self.n1(self.conv1(x)))
        out = self.n2(self.conv2(out))
        return torch.relu(out + identity)


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, cin, cout, stride=1):
        super().__init__()
        wide = cout * self.expansion
        self.conv1 = nn.Conv2d(cin, cout, 1, bias=False)
        self.n1 = _gn(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, stride, 1, bias=False)
        self.n2 = _gn(cout)
        self.conv3 = nn.Conv2d(cout, wide, 1, bias=False)
        self.n3 = _gn(wide)
        self.down = None
        if stride != 1 or cin != wide:
            self.down = nn.Sequential(
                nn.Conv2d(cin, wide, 1, stride, bias=False), _gn(wide))

    def forward(self, x):
        identity = self.down(x) if self.down is not None else x
        out = torch.relu(self.n1(self.conv1(x)))
        out = torch.relu(self.n2(self.conv2(out)))
        out = self.n3(self.conv3(out))
        return torch.relu(out + identity)


class SmallResNet(nn.Module):
    """Reduced-width residual classifier (GroupNorm, desk-scale data).

    Keeps the resnet-18/50 block layout but at a quarter of the stock
    width, so it trains from scratch on a few hundred patches in seconds.
    GroupNorm replaces BatchNorm: tiny datasets never stabilize batch
    statistics, which otherwise wrecks eval-mode behaviour.
    """

    def __init__(self, block, layers, num_classes=2, width=16):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, width, 5, 2, 2, bias=False), _gn(width),
            nn.ReLU(inplace=True),
        )
        stages = []
        cin = width
        for i, reps in enumerate(layers):
            cout = width * (2 ** i)
            for r in range(reps):
                stride = 2 if (r == 0 and i > 0) else 1
                stages.append(block(cin, cout, stride))
                cin = cout * block.expansion
        self.stages = nn.Sequential(*stages)
        self.head = nn.Linear(cin, num_classes)

    def forward(self, x):
        x = self.stages(self.stem(x))
        x = x.mean(dim=(2, 3))
        return self.head(x)


def build_backbone(name: str) -> nn.Module:
    """Backbones; names describe the block layout, widths are desk-scale."""
    if name == "small-resnet-18-class":
        return SmallResNet(BasicBlock, [2, 2, 2, 2])
    if name == "small-resnet-50-class":
        return SmallResNet(Bottleneck, [3, 4, 6, 3])
    if name == "vgg-16-class":
        from torchvision import models

        return models.vgg16(weights=None, num_classes=2)
    raise ValueError(f"unknown backbone {name!r}; pick from {BACKBONES}")


class VarianceStub:
    """Deterministic stand-in classifier: crack probability grows with the
    patch's intensity spread. Lets integration tests stream detections
    without any training."""

    name = "variance-stub"

    def __init__(self, threshold: float = 2.0, scale: float = 1.0):
        self.threshold = threshold
        self.scale = scale

    def predict_proba(self, patches: np.ndarray) -> np.ndarray:
        """(N, H, W[, C]) patches -> (N,) crack probability."""
        arr = np.asarray(patches, dtype=float)
        if arr.ndim == 4:
            arr = arr.mean(axis=3)
        stds = arr.reshape(len(arr), -1).std(axis=1)
        return 1.0 / (1.0 + np.exp(-(stds - self.threshold) / self.scale))


class TorchClassifier:
    """Thin inference wrapper shared by evaluate and stream."""

    def __init__(self, model: nn.Module, image_size: int = 64,
                 device: str = "cpu"):
        self.model = model.to(device).eval()
        self.image_size = image_size
        self.device = device
        self.name = type(model).__name__

    def predict_proba(self, patches: np.ndarray) -> np.ndarray:
        from torch.nn.functional import interpolate, softmax

        arr = np.asarray(patches, dtype=np.float32)
        if arr.ndim == 3:
            arr = arr[..., None].repeat(3, axis=3)
        x = torch.from_numpy(arr).permute(0, 3, 1, 2) / 255.0
        x = interpolate(x, size=(self.image_size, self.image_size),
                        mode="bilinear", align_corners=False)
        probs = []
        with torch.no_grad():
            for start in range(0, len(x), 64):
                logits = self.model(x[start:start + 64].to(self.device))
                probs.append(softmax(logits, dim=1)[:, 1].cpu().numpy())
        return np.concatenate(probs) if probs else np.zeros(0)
