"""Bi-directional enhancement and memory recurrence over disentangled frames."""
from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from .errors import NumericError, ShapeError


class ResidualBlock(nn.Module):
    """Channel-preserving residual block: conv3x3-BN-ReLU-conv3x3-BN plus identity.

    No rectification follows the addition, so the identity path carries the
    accumulated memory unchanged, negative entries included.

    Convolutions are shared across time steps but each step keeps its own
    batch-norm layers (``steps`` of them, the last one reused beyond that):
    the memory grows as it accumulates, so a single set of running
    statistics would not fit every step at evaluation time. The second BN
    gain starts at zero, making a fresh block an identity map.
    """

    def __init__(self, channels: int, steps: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1, bias=False)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1, bias=False)
        self.bn1 = nn.ModuleList(nn.BatchNorm2d(channels) for _ in range(steps))
        self.bn2 = nn.ModuleList(nn.BatchNorm2d(channels) for _ in range(steps))
        self.relu = nn.ReLU()
        for bn in self.bn2:
            nn.init.zeros_(bn.weight)

    def forward(self, x, step: int = 0):
        i = min(step, len(self.bn1) - 1)
        out = self.relu(self.bn1[i](self.conv1(x)))
        out = self.bn2[i](self.conv2(out))
        return x + out


def _conv_relu(channels):
    return nn.Sequential(nn.Conv2d(channels, channels, 1), nn.ReLU())


class EMU(nn.Module):
    """Enhancement and memory unit, applied once per time step.

    ``identity_maps`` replaces the two 1x1 difference projections with the
    identity and ``identity_res`` does the same for the memory residual block;
    both exist for hand-checkable tests. ``enhancement=False`` passes the
    high-correlation map through unchanged, ``memory=False`` freezes the
    memory at its initial value.
    """

    def __init__(
        self,
        channels: int,
        enhancement: bool = True,
        memory: bool = True,
        identity_maps: bool = False,
        identity_res: bool = False,
        steps: int = 1,
    ):
        super().__init__()
        self.channels = channels
        self.enhancement = enhancement
        self.memory = memory
        if enhancement:
            self.f1 = nn.Identity() if identity_maps else _conv_relu(channels)
            self.f2 = nn.Identity() if identity_maps else _conv_relu(channels)
            self.attn = nn.Linear(channels, channels)
        if memory:
            self.res = None if identity_res else ResidualBlock(channels, steps)

    def difference(self, high_t, memory):
        return (self.f2(memory) - self.f1(high_t)) ** 2

    def channel_gate(self, high_t, memory):
        d = self.difference(high_t, memory).mean(dim=(2, 3))
        return torch.sigmoid(self.attn(d))

    def forward(self, high_t, low_t, memory, step: int = 0):
        if high_t.shape != low_t.shape or high_t.shape != memory.shape:
            raise ShapeError(
                f"EMU inputs disagree: high {list(high_t.shape)}, "
                f"low {list(low_t.shape)}, memory {list(memory.shape)}"
            )
        if not torch.isfinite(memory).all():
            raise NumericError("non-finite memory state entering EMU")
        if self.enhancement:
            gate = self.channel_gate(high_t, memory)
            enhanced = (1 + gate)[:, :, None, None] * high_t
        else:
            enhanced = high_t
        if not self.memory:
            new_memory = memory
        elif self.res is None:
            new_memory = memory + low_t
        else:
            new_memory = self.res(memory + low_t, step)
        return enhanced, new_memory


def emu_step(high_t, low_t, memory, emu: EMU, step: int = 0):
    return emu(high_t, low_t, memory, step)


def init_memory(low_stack: torch.Tensor) -> torch.Tensor:
    if low_stack.shape[1] < 1:
        raise ShapeError("memory initialisation needs at least one frame")
    return low_stack.mean(dim=1)


class DirectionOutput(NamedTuple):
    steps: torch.Tensor  # [N, T, C], original frame order
    memory: torch.Tensor  # [N, C, H, W] after the last step
    trajectory: list  # memory after each frame, original frame order


def run_direction(high_stack, low_stack, order: str, emu: EMU, keep_trajectory=False):
    """Iterate ``emu`` over the frames in ``order`` ('forward' or 'backward').

    Step vectors are spatially averaged enhanced maps, written back in the
    original frame order whichever way the chain runs.
    """
    if high_stack.shape != low_stack.shape:
        raise ShapeError(
            f"high {list(high_stack.shape)} and low {list(low_stack.shape)} stacks differ"
        )
    t_len = high_stack.shape[1]
    if order == "forward":
        frames = range(t_len)
    elif order == "backward":
        frames = range(t_len - 1, -1, -1)
    else:
        raise ValueError(f"order must be 'forward' or 'backward', got {order!r}")
    memory = init_memory(low_stack)
    steps = [None] * t_len
    trajectory = [None] * t_len if keep_trajectory else []
    for k, t in enumerate(frames):
        enhanced, memory = emu(high_stack[:, t], low_stack[:, t], memory, k)
        steps[t] = enhanced.mean(dim=(2, 3))
        if keep_trajectory:
            trajectory[t] = memory
    if not torch.isfinite(memory).all():
        raise NumericError("non-finite memory after the last EMU step")
    return DirectionOutput(torch.stack(steps, dim=1), memory, trajectory)


def integrate_bidirectional(fwd: DirectionOutput, bwd: DirectionOutput, w_high: nn.Linear, w_low: nn.Linear):
    """Fuse both directions: returns per-step ``[N, T, C_out]`` and final low ``[N, C_out]``."""
    if fwd.steps.shape != bwd.steps.shape:
        raise ShapeError(
            f"direction outputs differ: {list(fwd.steps.shape)} vs {list(bwd.steps.shape)}"
        )
    fused = w_high(torch.cat([fwd.steps, bwd.steps], dim=-1))
    low = w_low(torch.cat([fwd.memory.mean(dim=(2, 3)), bwd.memory.mean(dim=(2, 3))], dim=-1))
    return fused, low


class VideoEmbedding(NamedTuple):
    high: torch.Tensor
    low: torch.Tensor
    joint: torch.Tensor


def test_time_embedding(per_step_fused: torch.Tensor, low_final: torch.Tensor, pool: str = "mean",
                        normalize_halves: bool = False) -> VideoEmbedding:
    """Pool the per-step vectors over time and append the final low vector.

    With ``normalize_halves`` each half is L2-normalised before the
    concatenation so neither dominates the joint vector by scale alone.
    """
    if per_step_fused.shape[1] < 1:
        raise ShapeError("need at least one time step")
    if pool == "mean":
        high = per_step_fused.mean(dim=1)
    elif pool == "max":
        high = per_step_fused.max(dim=1).values
    else:
        raise ValueError(f"pool must be 'mean' or 'max', got {pool!r}")
    if normalize_halves:
        joint = torch.cat([F.normalize(high, dim=-1), F.normalize(low_final, dim=-1)], dim=-1)
    else:
        joint = torch.cat([high, low_final], dim=-1)
    return VideoEmbedding(high, low_final, joint)


class TRL(nn.Module):
    """Forward/backward EMU chains with a linear fusion of both directions.

    ``direction`` may be 'bi', 'forward' or 'backward'. With a single
    direction the fusion layers read ``C`` inputs instead of ``2C``.
    """

    def __init__(
        self,
        channels: int,
        out_channels: int | None = None,
        direction: str = "bi",
        tied_weights: bool = False,
        enhancement: bool = True,
        memory: bool = True,
        identity_maps: bool = False,
        identity_res: bool = False,
        steps: int = 1,
    ):
        super().__init__()
        if direction not in ("bi", "forward", "backward"):
            raise ValueError(f"unknown direction {direction!r}")
        out_channels = out_channels or channels
        self.direction = direction
        self.tied_weights = tied_weights
        emu_kw = dict(enhancement=enhancement, memory=memory,
                      identity_maps=identity_maps, identity_res=identity_res, steps=steps)
        self.fwd = self.bwd = None
        if direction in ("bi", "forward"):
            self.fwd = EMU(channels, **emu_kw)
        if direction in ("bi", "backward"):
            if tied_weights and self.fwd is not None:
                self.bwd = self.fwd
            else:
                self.bwd = EMU(channels, **emu_kw)
        width = 2 * channels if direction == "bi" else channels
        self.w_high = nn.Linear(width, out_channels, bias=False)
        self.w_low = nn.Linear(width, out_channels, bias=False)
        if out_channels == channels:
            # start as the average of the directions
            k = width // channels
            eye = torch.eye(channels).repeat(1, k) / k
            with torch.no_grad():
                self.w_high.weight.copy_(eye)
                self.w_low.weight.copy_(eye)

    def directions(self, high, low, keep_trajectory=False):
        fwd = bwd = None
        if self.fwd is not None:
            fwd = run_direction(high, low, "forward", self.fwd, keep_trajectory)
        if self.bwd is not None:
            bwd = run_direction(high, low, "backward", self.bwd, keep_trajectory)
        return fwd, bwd

    def forward(self, high, low, keep_trajectory=False):
        fwd, bwd = self.directions(high, low, keep_trajectory)
        if fwd is not None and bwd is not None:
            fused, low_final = integrate_bidirectional(fwd, bwd, self.w_high, self.w_low)
        else:
            single = fwd if fwd is not None else bwd
            fused = self.w_high(single.steps)
            low_final = self.w_low(single.memory.mean(dim=(2, 3)))
        if keep_trajectory:
            return fused, low_final, (fwd, bwd)
        return fused, low_final


# keep pytest from collecting this when a test module imports it
test_time_embedding.__test__ = False
