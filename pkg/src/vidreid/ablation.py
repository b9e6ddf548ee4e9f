"""Preset configuration grids for component studies."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .data import FrameCache, load_dataset_index
from .engine import evaluate, train

FULL = dict(gce=True, trl=True, frame_oim=True, verification=True)

# preset -> (declared fields, [(row name, changes)])
PRESETS = {
    "components": (
        ("gce", "trl", "frame_oim", "verification"),
        [
            ("Baseline", dict(gce=False, trl=False, frame_oim=False, verification=False)),
            ("+GCE", dict(FULL, trl=False)),
            ("+GCE+TRL", dict(FULL)),
        ],
    ),
    "emu": (
        ("memory", "enhancement"),
        [
            ("GRL", dict(memory=True, enhancement=True)),
            ("-Memory", dict(memory=False, enhancement=True)),
            ("-Enhancement", dict(memory=True, enhancement=False)),
        ],
    ),
    "length": (("T",), [(f"T={t}", dict(T=t)) for t in (4, 6, 8, 10)]),
    "direction": (
        ("direction",),
        [("Forward", dict(direction="forward")), ("Backward", dict(direction="backward")),
         ("Bi-direction", dict(direction="bi"))],
    ),
    "losses": (
        ("frame_oim", "video_oim"),
        [
            ("V-OIM", dict(frame_oim=False, video_oim=True)),
            ("F-OIM", dict(frame_oim=True, video_oim=False)),
            ("V&F-OIM", dict(frame_oim=True, video_oim=True)),
        ],
    ),
}


def preset_configs(preset: str, base: TrainConfig) -> list:
    if preset not in PRESETS:
        raise KeyError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    _, rows = PRESETS[preset]
    return [(name, base.replace(**changes)) for name, changes in rows]


def config_diff(a: TrainConfig, b: TrainConfig) -> set:
    da, db = a.to_dict(), b.to_dict()
    return {k for k in da if da[k] != db[k]}


def row_features(config: TrainConfig) -> tuple:
    if not (config.gce or config.trl):
        return ("joint",)
    return ("low", "high", "joint")


def ablate(preset: str, base: TrainConfig, dataset_root, out_dir, seeds=None) -> list:
    """Train and evaluate every row of ``preset`` for each seed.

    Returns rows ``{"name", "feature", "rank1", "map", "per_seed"}`` with
    seed-averaged scores, and writes ``<preset>.txt`` / ``<preset>.json``.
    """
    out_dir = Path(out_dir)
    seeds = list(seeds) if seeds else [base.seed]
    index = load_dataset_index(dataset_root)
    caches = {}
    rows = []
    for name, cfg in preset_configs(preset, base):
        per_feature = {}
        for seed in seeds:
            run_cfg = cfg.replace(seed=seed)
            cache = caches.setdefault(run_cfg.image_size, FrameCache(run_cfg.image_size))
            run_dir = out_dir / preset / _slug(name) / f"seed{seed}"
            result = train(run_cfg, dataset_root, run_dir, index=index, cache=cache)
            evals = evaluate(result["checkpoint"], dataset_root, features=row_features(run_cfg),
                             index=index, cache=cache)
            for feat, res in evals.items():
                per_feature.setdefault(feat, []).append((float(res.cmc[0]), res.map))
        for feat, scores in per_feature.items():
            r1, maps = zip(*scores)
            rows.append({"name": name, "feature": feat, "rank1": float(np.mean(r1)),
                         "map": float(np.mean(maps)), "per_seed": scores})
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{preset}.txt").write_text(format_table(rows))
    (out_dir / f"{preset}.json").write_text(json.dumps(rows, indent=1))
    return rows


def format_table(rows) -> str:
    lines = [f"{'method':<16}{'feature':<9}{'mAP':>8}{'Rank-1':>8}"]
    for r in rows:
        lines.append(f"{r['name']:<16}{r['feature']:<9}{r['map']:>8.4f}{r['rank1']:>8.4f}")
    return "\n".join(lines) + "\n"


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in name).strip("_").lower() or "row"
