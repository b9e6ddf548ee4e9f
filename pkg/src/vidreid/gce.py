"""Global-guided correlation estimation and feature disentanglement."""
from __future__ import annotations

from typing import NamedTuple

import torch
from torch import nn

from .errors import ShapeError


class Disentangled(NamedTuple):
    high: torch.Tensor
    low: torch.Tensor


def compute_global_descriptor(stack: torch.Tensor) -> torch.Tensor:
    """Average a ``[N, T, C, H, W]`` stack over time and space -> ``[N, C]``."""
    if stack.dim() != 5:
        raise ShapeError(f"expected [N, T, C, H, W], got {list(stack.shape)}")
    if stack.shape[1] == 0:
        raise ShapeError("cannot average over an empty temporal axis")
    return stack.mean(dim=(1, 3, 4))


def disentangle(stack: torch.Tensor, corr: torch.Tensor) -> Disentangled:
    """Split ``stack`` into ``stack * corr`` and ``stack * (1 - corr)``.

    ``corr`` has a singleton channel axis and is broadcast over channels.
    """
    if corr.dim() != 5 or corr.shape[2] != 1:
        raise ShapeError(f"correlation map must be [N, T, 1, H, W], got {list(corr.shape)}")
    if corr.shape[:2] != stack.shape[:2] or corr.shape[3:] != stack.shape[3:]:
        raise ShapeError(
            f"correlation map {list(corr.shape)} does not match stack {list(stack.shape)}"
        )
    return Disentangled(stack * corr, stack * (1 - corr))


class CorrelationHead(nn.Module):
    """Estimates a per-frame correlation map under global guidance.

    The global descriptor passes through a shared linear projection, is tiled
    to every spatial site of every frame and concatenated in front of the frame
    features. Two 1x1 convolutions with BN and ReLU between them reduce the
    ``2C`` channels to one, and a sigmoid maps the result into (0, 1).
    """

    def __init__(self, channels: int, hidden: int | None = None):
        super().__init__()
        if hidden is None:
            hidden = max(channels // 8, 8)
        if hidden <= 0:
            raise ValueError("hidden width must be positive")
        self.channels = channels
        self.project = nn.Linear(channels, channels)
        self.conv1 = nn.Conv2d(2 * channels, hidden, 1)
        self.bn = nn.BatchNorm2d(hidden)
        self.relu = nn.ReLU()
        self.conv2 = nn.Conv2d(hidden, 1, 1)

    def forward(self, stack: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
        n, t, c, h, w = stack.shape
        if g.dim() != 2 or g.shape[1] != c or c != self.channels:
            raise ShapeError(
                f"descriptor {list(g.shape)} / stack channels {c} do not match "
                f"head width {self.channels}"
            )
        if g.shape[0] != n:
            raise ShapeError(f"descriptor batch {g.shape[0]} != stack batch {n}")
        guide = self.project(g)[:, None, :, None, None].expand(n, t, c, h, w)
        x = torch.cat([guide, stack], dim=2).reshape(n * t, 2 * c, h, w)
        x = self.conv2(self.relu(self.bn(self.conv1(x))))
        return torch.sigmoid(x).reshape(n, t, 1, h, w)

    def zero_(self) -> "CorrelationHead":
        """Zero both convolutions so every correlation value becomes 0.5."""
        with torch.no_grad():
            for conv in (self.conv1, self.conv2):
                conv.weight.zero_()
                conv.bias.zero_()
        return self


def estimate_correlation(stack: torch.Tensor, g: torch.Tensor, head: CorrelationHead) -> torch.Tensor:
    return head(stack, g)


class GCE(nn.Module):
    """Descriptor, correlation map and split in one module."""

    def __init__(self, channels: int, hidden: int | None = None):
        super().__init__()
        self.head = CorrelationHead(channels, hidden)

    def forward(self, stack):
        g = compute_global_descriptor(stack)
        corr = self.head(stack, g)
        high, low = disentangle(stack, corr)
        return high, low, corr
