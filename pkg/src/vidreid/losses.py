"""OIM and verification losses and their weighted sum."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, DataError, ShapeError


class OIMTable(nn.Module):
    """Lookup table holding one unit-norm embedding per training identity.

    Rows start at zero and score uniformly until their identity is seen for
    the first time. The table is a buffer: it receives no gradients and is
    only changed by :meth:`update`.
    """

    def __init__(self, num_identities: int, dim: int, momentum: float = 0.5,
                 temperature: float = 1 / 30):
        super().__init__()
        if not 0 <= momentum <= 1:
            raise ConfigError("OIM momentum must lie in [0, 1]")
        if temperature <= 0:
            raise ConfigError("OIM temperature must be positive")
        self.momentum = momentum
        self.temperature = temperature
        self.skipped = 0
        self.register_buffer("entries", torch.zeros(num_identities, dim))

    @property
    def num_identities(self) -> int:
        return self.entries.shape[0]

    def logits(self, features: torch.Tensor) -> torch.Tensor:
        return F.normalize(features, dim=1) @ self.entries.t() / self.temperature

    def forward(self, features, labels):
        return oim_loss(features, labels, self)

    @torch.no_grad()
    def update(self, features, labels):
        oim_update(self, features, labels)
        return self


def _check_labels(labels: torch.Tensor, num_identities: int) -> None:
    if labels.numel() and (labels.min() < 0 or labels.max() >= num_identities):
        raise DataError(
            f"labels must lie in [0, {num_identities}), got range "
            f"[{int(labels.min())}, {int(labels.max())}]"
        )


def oim_loss(features: torch.Tensor, labels: torch.Tensor, table: OIMTable) -> torch.Tensor:
    """Mean softmax cross-entropy of normalised features against the table."""
    if features.dim() != 2 or features.shape[0] != labels.shape[0]:
        raise ShapeError(
            f"features {list(features.shape)} and labels {list(labels.shape)} misaligned"
        )
    _check_labels(labels, table.num_identities)
    logits = table.logits(features)
    return F.cross_entropy(logits, labels)


@torch.no_grad()
def oim_update(table: OIMTable, features: torch.Tensor, labels: torch.Tensor) -> OIMTable:
    """Momentum-update the rows of the labelled identities, one sample at a time."""
    _check_labels(labels, table.num_identities)
    mu = table.momentum
    entries = table.entries
    for f, y in zip(features.detach(), labels.tolist()):
        norm = f.norm()
        if not torch.isfinite(norm) or norm == 0:
            table.skipped += 1
            continue
        row = (1 - mu) * entries[y] + mu * (f / norm).to(entries.dtype)
        row_norm = row.norm()
        if row_norm == 0:
            table.skipped += 1
            continue
        entries[y] = row / row_norm
    return table


class SimilarityHead(nn.Module):
    """Maps a pair of vectors to a match probability via ``|a - b|``."""

    def __init__(self, dim: int):
        super().__init__()
        self.fc = nn.Linear(dim, 1)

    def forward(self, a, b):
        return torch.sigmoid(self.logit(a, b))

    def logit(self, a, b):
        return self.fc((a - b).abs()).squeeze(-1)


def verification_loss(probe, gallery, y, head: SimilarityHead) -> torch.Tensor:
    """Binary cross-entropy of ``head(probe, gallery)`` against ``y``."""
    if probe.shape != gallery.shape or probe.shape[0] != y.shape[0]:
        raise ShapeError(
            f"probe {list(probe.shape)}, gallery {list(gallery.shape)} and "
            f"labels {list(y.shape)} do not align"
        )
    # the logit form is the numerically stable equivalent of BCE on sigmoid(logit)
    return F.binary_cross_entropy_with_logits(head.logit(probe, gallery), y.to(probe.dtype))


@dataclass(frozen=True)
class LossWeights:
    frame: float = 1.0
    video: float = 1.0
    verification: float = 1.0

    def __post_init__(self):
        values = (self.frame, self.video, self.verification)
        if any(v < 0 for v in values):
            raise ConfigError("loss weights must be nonnegative")
        if not any(v > 0 for v in values):
            raise ConfigError("at least one loss weight must be positive")


def total_loss(l_frame, l_video, l_veri, weights: LossWeights):
    return weights.frame * l_frame + weights.video * l_video + weights.verification * l_veri
