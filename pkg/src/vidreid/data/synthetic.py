"""Synthetic multi-camera tracklets of colored walking figures.

Each identity gets a unique torso hue plus a random leg color, torso shape
and accessory. Each camera has its own background gradient and gain. A
figure drifts back and forth across the frame; a tracklet is a window of
consecutive integer phases on that path, so frames rendered at equal phases
under equal camera parameters are pixel-identical.
"""
from __future__ import annotations

import colorsys
import hashlib
import json
import shutil
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DataError
from .index import TrackletIndex, TrackletRecord, default_split

PHASE_PERIOD = 16
SHAPES = ("rect", "ellipse")
ACCESSORIES = ("none", "hat", "bag", "stripe")


@dataclass(frozen=True)
class SyntheticSpec:
    identities: int = 8
    cameras: int = 2
    tracklets_per_pair: int = 2
    frames_per_tracklet: int = 16
    height: int = 64
    width: int = 32
    noise: float = 0.03
    camera_variation: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("identities", "cameras", "tracklets_per_pair", "frames_per_tracklet",
                     "height", "width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")


@dataclass(frozen=True)
class Appearance:
    torso: tuple
    legs: tuple
    head: tuple
    shape: str
    accessory: str
    accessory_color: tuple


@dataclass(frozen=True)
class CameraLook:
    top: tuple
    bottom: tuple
    gain: float


def _hsv(h, s, v):
    return tuple(float(c) for c in colorsys.hsv_to_rgb(h % 1.0, s, v))


def hue_slot(i: int, n: int) -> int:
    """Evenly spaced hue slot of identity ``i`` out of ``n``.

    The first half of the identities takes the even slots and the second
    half the odd ones, so either half spans the whole color wheel (the
    default split trains on the first half).
    """
    half = (n + 1) // 2
    return 2 * i if i < half else 2 * (i - half) + 1


def make_appearances(spec: SyntheticSpec) -> list:
    rng = np.random.default_rng([spec.seed, 1])
    looks = []
    for i in range(spec.identities):
        hue = hue_slot(i, spec.identities) / spec.identities
        looks.append(Appearance(
            torso=_hsv(hue, 0.85, 0.9),
            legs=_hsv(rng.uniform(), rng.uniform(0.3, 0.9), rng.uniform(0.25, 0.7)),
            head=_hsv(0.08, rng.uniform(0.3, 0.6), rng.uniform(0.6, 0.9)),
            shape=SHAPES[int(rng.integers(len(SHAPES)))],
            accessory=ACCESSORIES[int(rng.integers(len(ACCESSORIES)))],
            accessory_color=_hsv(rng.uniform(), 0.9, rng.uniform(0.3, 1.0)),
        ))
    return looks


def make_cameras(spec: SyntheticSpec) -> list:
    rng = np.random.default_rng([spec.seed, 2])
    base_top, base_bottom = (0.55, 0.6, 0.65), (0.35, 0.33, 0.3)
    cams = []
    for _ in range(spec.cameras):
        shift_top = rng.uniform(-0.25, 0.25, 3)
        shift_bottom = rng.uniform(-0.2, 0.2, 3)
        gain = 1.0 + rng.uniform(-0.25, 0.25)
        v = spec.camera_variation
        cams.append(CameraLook(
            top=tuple(float(np.clip(b + v * s, 0, 1)) for b, s in zip(base_top, shift_top)),
            bottom=tuple(float(np.clip(b + v * s, 0, 1)) for b, s in zip(base_bottom, shift_bottom)),
            gain=float(1.0 + v * (gain - 1.0)),
        ))
    return cams


def trajectory(phase: int, width: int, body_w: float) -> tuple:
    u = (phase % PHASE_PERIOD) / PHASE_PERIOD
    frac = 2 * u if u < 0.5 else 2 - 2 * u
    lo, hi = body_w / 2 + 1, width - body_w / 2 - 1
    return lo + frac * (hi - lo), (phase % 2)


def render_frame(look: Appearance, cam: CameraLook, phase: int, height: int, width: int) -> np.ndarray:
    """Float image ``[H, W, 3]`` in [0, 1], without noise."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    t = (yy / max(height - 1, 1))[..., None]
    img = (1 - t) * np.array(cam.top) + t * np.array(cam.bottom)

    body_w = 0.45 * width
    cx, bob = trajectory(phase, width, body_w)
    top = 0.1 * height + bob
    head_r = 0.08 * height
    head_cy = top + head_r
    torso_top, torso_bot = head_cy + head_r, top + 0.55 * height
    leg_bot = min(top + 0.92 * height, height - 1)

    def paint(mask, color):
        img[mask] = color

    if look.shape == "rect":
        torso = (abs(xx - cx) <= body_w / 2) & (yy >= torso_top) & (yy <= torso_bot)
    else:
        cy, ry = (torso_top + torso_bot) / 2, (torso_bot - torso_top) / 2 + 0.5
        torso = ((xx - cx) / (body_w / 2 + 0.5)) ** 2 + ((yy - cy) / ry) ** 2 <= 1
    leg_w = body_w * 0.3
    stride = (phase % 4 - 1.5) * 0.6
    legs = (yy > torso_bot) & (yy <= leg_bot) & (
        (abs(xx - (cx - body_w * 0.22 - stride)) <= leg_w / 2)
        | (abs(xx - (cx + body_w * 0.22 + stride)) <= leg_w / 2)
    )
    head = (xx - cx) ** 2 + (yy - head_cy) ** 2 <= head_r**2
    paint(legs, look.legs)
    paint(torso, look.torso)
    paint(head, look.head)
    if look.accessory == "hat":
        paint((abs(xx - cx) <= head_r * 1.3) & (yy >= head_cy - head_r * 1.6) & (yy <= head_cy - head_r * 0.6),
              look.accessory_color)
    elif look.accessory == "bag":
        bx = cx + body_w / 2 + 1
        paint((abs(xx - bx) <= max(width * 0.06, 1)) & (yy >= torso_top + 0.1 * height)
              & (yy <= torso_bot + 0.05 * height), look.accessory_color)
    elif look.accessory == "stripe":
        mid = (torso_top + torso_bot) / 2
        paint(torso & (abs(yy - mid) <= max(height * 0.03, 0.6)), look.accessory_color)
    return np.clip(img * cam.gain, 0, 1)


def to_uint8(img: np.ndarray, noise: float, rng) -> np.ndarray:
    if noise > 0:
        img = img + rng.normal(0, noise, img.shape)
    return np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)


def tracklet_start(spec: SyntheticSpec, i: int, c: int, k: int) -> int:
    rng = np.random.default_rng([spec.seed, 3, i, c, k])
    return int(rng.integers(0, PHASE_PERIOD))


def generate_synthetic_dataset(spec: SyntheticSpec, out_dir, force: bool = False) -> TrackletIndex:
    """Render the dataset to ``out_dir`` and write its manifest."""
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        if not force:
            raise DataError(f"{out_dir} already exists and is not empty (use force to overwrite)")
        shutil.rmtree(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    looks = make_appearances(spec)
    cams = make_cameras(spec)
    keys, frames_of, pattern_of = [], {}, {}
    for i, look in enumerate(looks):
        pid = f"{i:04d}"
        for c, cam in enumerate(cams):
            for k in range(spec.tracklets_per_pair):
                key = (pid, f"c{c}", f"t{k}")
                folder = out_dir.joinpath(*key)
                folder.mkdir(parents=True)
                noise_rng = np.random.default_rng([spec.seed, 4, i, c, k])
                start = tracklet_start(spec, i, c, k)
                paths = []
                for j in range(spec.frames_per_tracklet):
                    img = render_frame(look, cam, start + j, spec.height, spec.width)
                    path = folder / f"frame{j:04d}.png"
                    Image.fromarray(to_uint8(img, spec.noise, noise_rng)).save(path)
                    paths.append(path)
                keys.append(key)
                frames_of[key] = tuple(paths)
                pattern_of[key] = "/".join(key) + "/*.png"

    splits = default_split(keys)
    records = [TrackletRecord(*key, splits[key], frames_of[key], pattern_of[key]) for key in keys]
    index = TrackletIndex(out_dir, records)
    index.write_manifest()
    (out_dir / "synthetic.json").write_text(json.dumps(asdict(spec), indent=1, sort_keys=True) + "\n")
    return index


def manifest_digest(root) -> str:
    """SHA-256 over the manifest and every frame listed in it."""
    from .index import load_dataset_index

    root = Path(root)
    h = hashlib.sha256((root / "manifest.csv").read_bytes())
    for r in load_dataset_index(root, "manifest").records:
        for p in r.frames:
            h.update(p.read_bytes())
    return h.hexdigest()
