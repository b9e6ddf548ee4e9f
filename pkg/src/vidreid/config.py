"""Training configuration and its flat ``key = value`` file format.

Precedence when resolving a run: command-line flag > config file > default.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .losses import LossWeights

CHOICES = {
    "direction": ("bi", "forward", "backward"),
    "pool": ("mean", "max"),
    "test_feature": ("joint", "high", "low"),
    "backbone": ("desk", "resnet50"),
    "device": ("cpu", "cuda"),
}


@dataclass(frozen=True)
class TrainConfig:
    # schedule
    T: int = 8
    batch: int = 16
    epochs: int = 50
    lr: float = 1e-3
    lr_step: int = 15
    lr_gamma: float = 0.1
    weight_decay: float = 5e-4
    momentum: float = 0.9
    nesterov: bool = True
    steps_per_epoch: int = 0  # 0: enough batches to see every training tracklet once
    # losses
    w_frame: float = 1.0
    w_video: float = 1.0
    w_veri: float = 1.0
    oim_momentum: float = 0.5
    oim_temperature: float = 1 / 30
    # model
    backbone: str = "desk"
    channels: int = 128
    image_height: int = 256
    image_width: int = 128
    norm_mean: float = 0.5
    norm_std: float = 0.25
    augment: bool = True
    # ablation flags
    gce: bool = True
    trl: bool = True
    direction: str = "bi"
    enhancement: bool = True
    memory: bool = True
    frame_oim: bool = True
    video_oim: bool = True
    verification: bool = True
    tied_weights: bool = False
    pool: str = "mean"
    test_feature: str = "joint"
    # runtime
    seed: int = 0
    device: str = "cpu"
    threads: int = 1

    def __post_init__(self):
        for name, allowed in CHOICES.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        for name in ("T", "batch", "epochs", "channels", "image_height", "image_width", "lr_step", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.batch % 2:
            raise ConfigError("batch must be even (probe/gallery halves)")
        if self.lr <= 0 or self.norm_std <= 0:
            raise ConfigError("lr and norm_std must be positive")
        if not (self.frame_oim or self.video_oim or self.verification):
            raise ConfigError("at least one loss must be enabled")
        self.loss_weights()

    @property
    def image_size(self) -> tuple:
        return (self.image_height, self.image_width)

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            self.w_frame if self.frame_oim else 0.0,
            self.w_video if self.video_oim else 0.0,
            self.w_veri if self.verification else 0.0,
        )

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.to_dict().items())

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        unknown = set(values) - set(field_types())
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    @classmethod
    def from_text(cls, text: str, base: "TrainConfig | None" = None) -> "TrainConfig":
        base = base or cls()
        return base.replace(**parse_text(text))

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_text(Path(path).read_text())


def field_types() -> dict:
    return {f.name: f.type for f in fields(TrainConfig)}


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def parse_value(name: str, raw: str):
    kind = field_types()[name]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def parse_text(text: str) -> dict:
    values = {}
    types = field_types()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = parse_value(key, raw)
    return values


def resolve(config_file=None, overrides: dict | None = None) -> TrainConfig:
    """Defaults, then the config file, then explicit overrides."""
    cfg = TrainConfig()
    if config_file is not None:
        cfg = TrainConfig.from_text(Path(config_file).read_text(), cfg)
    if overrides:
        cfg = cfg.replace(**{k: v for k, v in overrides.items() if v is not None})
    return cfg
