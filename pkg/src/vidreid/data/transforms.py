"""Frame loading, normalisation and clip-level augmentation."""
from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

DEFAULT_MEAN = (0.5, 0.5, 0.5)
DEFAULT_STD = (0.25, 0.25, 0.25)


def load_frame(path, image_size) -> torch.Tensor:
    """Read an image as a ``[3, H, W]`` float tensor in [0, 1], resized to ``image_size``."""
    h, w = image_size
    with Image.open(path) as im:
        im = im.convert("RGB")
        if im.size != (w, h):
            im = im.resize((w, h), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return torch.from_numpy(arr.copy()).permute(2, 0, 1)


class FrameCache:
    """Keeps decoded frames in memory; synthetic sets are small."""

    def __init__(self, image_size):
        self.image_size = tuple(image_size)
        self._frames = {}

    def __call__(self, path) -> torch.Tensor:
        key = str(path)
        if key not in self._frames:
            self._frames[key] = load_frame(path, self.image_size)
        return self._frames[key]

    def clip(self, record, indices) -> torch.Tensor:
        return torch.stack([self(record.frames[i]) for i in indices])


def normalize(frames: torch.Tensor, mean=DEFAULT_MEAN, std=DEFAULT_STD) -> torch.Tensor:
    mean = torch.as_tensor(mean, dtype=frames.dtype).view(3, 1, 1)
    std = torch.as_tensor(std, dtype=frames.dtype).view(3, 1, 1)
    return (frames - mean) / std


def _erase_box(h, w, gen, area=(0.02, 0.2), ratio=(0.3, 3.3)):
    for _ in range(20):
        target = float(torch.empty(1).uniform_(*area, generator=gen)) * h * w
        log_r = torch.empty(1).uniform_(math.log(ratio[0]), math.log(ratio[1]), generator=gen)
        aspect = math.exp(float(log_r))
        eh = int(round(math.sqrt(target * aspect)))
        ew = int(round(math.sqrt(target / aspect)))
        if 0 < eh < h and 0 < ew < w:
            top = int(torch.randint(0, h - eh + 1, (1,), generator=gen))
            left = int(torch.randint(0, w - ew + 1, (1,), generator=gen))
            return top, left, eh, ew
    return None


def augment(frames: torch.Tensor, mode: str = "train", seed=None, generator=None,
            pad: int = 8, flip_p: float = 0.5, erase_p: float = 0.5,
            mean=DEFAULT_MEAN, std=DEFAULT_STD) -> torch.Tensor:
    """Augment one clip ``[T, 3, H, W]`` with values in [0, 1] and normalise it.

    Training applies a padded random crop and a horizontal flip shared by all
    frames of the clip, then erases one random box per frame with probability
    ``erase_p``, filled with uniform noise in [0, 1]. Evaluation only
    normalises.
    """
    if mode == "eval":
        return normalize(frames, mean, std)
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    gen = generator
    if gen is None:
        gen = torch.Generator()
        gen.manual_seed(0 if seed is None else int(seed))
    t, _, h, w = frames.shape
    out = frames
    if pad > 0:
        padded = F.pad(frames, (pad, pad, pad, pad))
        top = int(torch.randint(0, 2 * pad + 1, (1,), generator=gen))
        left = int(torch.randint(0, 2 * pad + 1, (1,), generator=gen))
        out = padded[:, :, top:top + h, left:left + w]
    if float(torch.rand(1, generator=gen)) < flip_p:
        out = out.flip(-1)
    out = out.clone()
    for i in range(t):
        if float(torch.rand(1, generator=gen)) < erase_p:
            box = _erase_box(h, w, gen)
            if box is not None:
                top, left, eh, ew = box
                out[i, :, top:top + eh, left:left + ew] = torch.rand(3, eh, ew, generator=gen)
    return normalize(out, mean, std)
