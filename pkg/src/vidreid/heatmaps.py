"""Export correlation maps and memory activations for one tracklet.

Files written per frame ``t`` (two-digit index):

- ``frame_tXX.png``    the input frame as fed to the network (before normalisation)
- ``corr_tXX.png``     correlation map upsampled to the input size, grayscale:
                       value ``v`` in (0, 1) becomes ``round(255 * v)``
- ``mem_fwd_tXX.png``  channel-mean of the forward memory after frame ``t``
- ``mem_bwd_tXX.png``  same for the backward chain

Memory maps are min-max scaled over the whole sequence of one direction
(a constant sequence renders black). All pixels are clamped to [0, 255].
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .data import FrameCache, rrs_sample
from .data.transforms import normalize
from .engine import load_checkpoint, model_from_checkpoint


def to_gray(values: np.ndarray) -> np.ndarray:
    return np.clip(np.round(values * 255.0), 0, 255).astype(np.uint8)


def _upsample(maps: torch.Tensor, size) -> np.ndarray:
    return F.interpolate(maps, size=size, mode="bilinear", align_corners=False)[:, 0].numpy()


def _scaled(seq: torch.Tensor) -> np.ndarray:
    lo, hi = float(seq.min()), float(seq.max())
    if hi - lo <= 0:
        return np.zeros(seq.shape, dtype=np.float64)
    return ((seq - lo) / (hi - lo)).numpy()


@torch.no_grad()
def export_heatmaps(checkpoint, record, out_dir, frame_indices=None) -> list:
    """Write the per-frame images for ``record`` (a tracklet record) and return their paths."""
    state = checkpoint if isinstance(checkpoint, dict) else load_checkpoint(checkpoint)
    model, config = model_from_checkpoint(state)
    model.eval()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = FrameCache(config.image_size)
    if frame_indices is None:
        frame_indices = rrs_sample(len(record.frames), config.T, "eval")
    raw = cache.clip(record, frame_indices)
    frames = normalize(raw, (config.norm_mean,) * 3, (config.norm_std,) * 3)[None]
    out = model(frames, keep_trajectory=True)
    size = config.image_size
    written = []

    def save(arr, name):
        path = out_dir / name
        Image.fromarray(arr).save(path)
        written.append(path)

    for t in range(raw.shape[0]):
        img = (raw[t].permute(1, 2, 0).numpy() * 255).round().clip(0, 255).astype(np.uint8)
        save(img, f"frame_t{t:02d}.png")
    if "corr" in out:
        corr = _upsample(out["corr"][0], size)
        for t, m in enumerate(corr):
            save(to_gray(m), f"corr_t{t:02d}.png")
    for label, direction in zip(("fwd", "bwd"), out.get("directions", (None, None))):
        if direction is None:
            continue
        seq = torch.stack([m[0].mean(dim=0) for m in direction.trajectory])[:, None]
        seq = torch.from_numpy(_scaled(seq)).float()
        for t, m in enumerate(_upsample(seq, size)):
            save(to_gray(m), f"mem_{label}_t{t:02d}.png")
    return written
