"""Frame-level feature extractors.

Anything that maps ``[N, T, 3, H_img, W_img]`` to ``[N, T, C, H, W]`` can act
as a backbone. Two implementations live here: a small residual network that
trains on a CPU in minutes, and an adapter around torchvision's ResNet-50 with
the last down-sampling removed.
"""
from __future__ import annotations

from typing import Sequence

import torch
from torch import nn

from .errors import ShapeError


class BasicBlock(nn.Module):
    """Two 3x3 convolutions with an identity (or 1x1 projected) shortcut."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=False)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class FrameBackbone(nn.Module):
    """Base class: folds time into the batch and checks the input signature."""

    out_channels: int
    stride: int

    def __init__(self, image_size: tuple[int, int]):
        super().__init__()
        self.image_size = tuple(image_size)

    def output_size(self) -> tuple[int, int]:
        h, w = self.image_size
        return -(-h // self.stride), -(-w // self.stride)

    def forward_frames(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        check_frames(frames, self.image_size)
        n, t = frames.shape[:2]
        maps = self.forward_frames(frames.reshape(n * t, *frames.shape[2:]))
        return maps.reshape(n, t, *maps.shape[1:])


class DeskBackbone(FrameBackbone):
    """Stride-2 stem followed by four residual stages.

    With the default strides ``(2, 2, 2, 1)`` the overall stride is 16, so a
    256x128 frame yields a 16x8 map. A 1x1 projection sets the output width.
    """

    def __init__(
        self,
        out_channels: int = 128,
        widths: Sequence[int] = (32, 64, 96, 128),
        strides: Sequence[int] = (2, 2, 2, 1),
        image_size: tuple[int, int] = (256, 128),
        stem_channels: int = 16,
    ):
        super().__init__(image_size)
        if len(widths) != len(strides):
            raise ValueError("widths and strides must have equal length")
        self.stem = nn.Sequential(
            nn.Conv2d(3, stem_channels, 3, 2, 1, bias=False),
            nn.BatchNorm2d(stem_channels),
            nn.ReLU(inplace=False),
        )
        stages = []
        in_ch = stem_channels
        for width, stride in zip(widths, strides):
            stages.append(BasicBlock(in_ch, width, stride))
            in_ch = width
        self.stages = nn.Sequential(*stages)
        self.proj = nn.Conv2d(in_ch, out_channels, 1)
        self.out_channels = out_channels
        self.stride = 2
        for s in strides:
            self.stride *= s

    def output_size(self) -> tuple[int, int]:
        h, w = self.image_size
        for s in (2,) + tuple(m.conv1.stride[0] for m in self.stages):
            h, w = -(-h // s), -(-w // s)
        return h, w

    def forward_frames(self, x):
        return self.proj(self.stages(self.stem(x)))


class ResNet50Adapter(FrameBackbone):
    """torchvision ResNet-50 trunk with ``layer4`` stride set to 1.

    Weights are whatever torchvision provides for ``weights``; the default
    ``None`` gives a randomly initialised network and needs no download.
    """

    def __init__(self, image_size=(256, 128), weights=None):
        super().__init__(image_size)
        from torchvision.models import resnet50

        net = resnet50(weights=weights)
        net.layer4[0].conv2.stride = (1, 1)
        net.layer4[0].downsample[0].stride = (1, 1)
        self.trunk = nn.Sequential(
            net.conv1, net.bn1, net.relu, net.maxpool,
            net.layer1, net.layer2, net.layer3, net.layer4,
        )
        self.out_channels = 2048
        self.stride = 16

    def forward_frames(self, x):
        return self.trunk(x)


def check_frames(frames: torch.Tensor, image_size: tuple[int, int]) -> None:
    if frames.dim() != 5 or frames.shape[2] != 3:
        raise ShapeError(
            f"expected frames of shape [N, T, 3, H, W], got {list(frames.shape)}"
        )
    if frames.shape[1] < 1:
        raise ShapeError("frame sequences must contain at least one frame")
    actual = tuple(frames.shape[3:])
    if actual != tuple(image_size):
        raise ShapeError(
            f"expected frame size {tuple(image_size)} (H, W), got {actual}"
        )


def build_backbone(name: str, out_channels: int, image_size) -> FrameBackbone:
    if name == "desk":
        return DeskBackbone(out_channels=out_channels, image_size=tuple(image_size))
    if name == "resnet50":
        return ResNet50Adapter(image_size=tuple(image_size))
    raise ValueError(f"unknown backbone {name!r}")


def extract_features(frames: torch.Tensor, backbone: FrameBackbone) -> torch.Tensor:
    """Run ``backbone`` over a ``[N, T, 3, H, W]`` batch of sequences."""
    return backbone(frames)
