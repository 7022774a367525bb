"""Regression networks: convolutional trunk, fully connected head emitting
the 6-number pose vector (normalized x, y plus a raw quaternion).

Presets trade capacity for desk-scale runtime; paper_like swaps in a
ResNet50 trunk with the same regression head.
"""

import torch
from torch import nn

PRESETS = ("tiny", "small", "paper_like")


class ConvRegressor(nn.Module):
    def __init__(self, in_channels: int, widths, head: int, pool=(6, 8)):
        super().__init__()
        layers = []
        prev = in_channels
        for w in widths:
            layers += [nn.Conv2d(prev, w, 3, stride=2, padding=1), nn.ReLU(inplace=True)]
            prev = w
        self.trunk = nn.Sequential(*layers)
        # fixed-size pooling keeps spatial layout (position matters) while
        # making the head independent of the input resolution
        self.pool = nn.AdaptiveAvgPool2d(pool)
        self.head = nn.Sequential(
            nn.Flatten(),
            nn.Linear(prev * pool[0] * pool[1], head),
            nn.ReLU(inplace=True),
            nn.Linear(head, 6),
        )

    def forward(self, x):
        return self.head(self.pool(self.trunk(x)))


def build_model(preset: str, in_channels: int) -> nn.Module:
    if preset == "tiny":
        return ConvRegressor(in_channels, (16, 32, 64, 64), head=128)
    if preset == "small":
        return ConvRegressor(in_channels, (24, 48, 96, 128, 128), head=256)
    if preset == "paper_like":
        from torchvision.models import resnet50

        net = resnet50(weights=None)
        net.conv1 = nn.Conv2d(in_channels, 64, 7, stride=2, padding=3, bias=False)
        net.fc = nn.Linear(net.fc.in_features, 6)
        return net
    raise ValueError(f"unknown preset {preset!r}; expected one of {PRESETS}")


def pose_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """L2 on normalized position plus L2 on the quaternion, no cross-weighting
    (position normalization makes the two terms commensurate)."""
    return torch.mean(torch.sum((pred[:, :2] - target[:, :2]) ** 2, dim=1)) + torch.mean(
        torch.sum((pred[:, 2:] - target[:, 2:]) ** 2, dim=1)
    )
