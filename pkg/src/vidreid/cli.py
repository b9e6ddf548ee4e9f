"""Command line entry point: ``vidreid {generate,train,evaluate,ablate,heatmaps}``.

Every training-config field is also a flag (``--w-frame 0.5``, ``--gce false``).
Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import config as cfgmod
from .ablation import PRESETS, ablate, format_table
from .data import SyntheticSpec, generate_synthetic_dataset, load_dataset_index
from .errors import ConfigError, DataError, ReidError


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("config overrides")
    for name in cfgmod.field_types():
        if name in ("seed", "device"):
            continue
        g.add_argument("--" + name.replace("_", "-"), dest=name, default=None, metavar="V")
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--device", default=None, choices=cfgmod.CHOICES["device"])


def cli_overrides(args) -> dict:
    out = {}
    for name in cfgmod.field_types():
        raw = getattr(args, name, None)
        if raw is None:
            continue
        out[name] = raw if not isinstance(raw, str) else cfgmod.parse_value(name, raw)
    return out


def config_from_args(args) -> cfgmod.TrainConfig:
    return cfgmod.resolve(args.config, cli_overrides(args))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vidreid", description="Video person re-identification: "
                                     "data generation, training, evaluation, ablations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a synthetic tracklet dataset")
    for f in fields(SyntheticSpec):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name,
                       type=type(f.default), default=f.default)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--force", action="store_true", help="overwrite an existing directory")

    p = sub.add_parser("train", help="train a model")
    _add_config_flags(p)
    p.add_argument("--data-root", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--resume", type=Path)
    p.add_argument("--save-every", type=int, default=0)

    p = sub.add_parser("evaluate", help="score a checkpoint on query/gallery")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data-root", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.add_argument("--features", default=None,
                   help="comma list of low,high,joint (default: configured test feature)")

    p = sub.add_parser("ablate", help="run an ablation preset")
    p.add_argument("preset", choices=sorted(PRESETS))
    _add_config_flags(p)
    p.add_argument("--data-root", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seeds", default=None, help="comma list, default: --seed")

    p = sub.add_parser("heatmaps", help="export correlation and memory maps")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data-root", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--tracklet", default=None,
                   help="identity/camera/tracklet (default: first query tracklet)")
    return parser


def _find_record(index, key):
    if key is None:
        records = index.split("query") or index.records
        return records[0]
    parts = tuple(key.split("/"))
    for r in index.records:
        if r.key == parts:
            return r
    raise DataError(f"tracklet {key!r} not found")


def run(args) -> int:
    from .engine import evaluate, train
    from .heatmaps import export_heatmaps

    if args.command == "generate":
        spec = SyntheticSpec(**{f.name: getattr(args, f.name) for f in fields(SyntheticSpec)})
        index = generate_synthetic_dataset(spec, args.out, force=args.force)
        n_frames = sum(len(r.frames) for r in index.records)
        print(f"wrote {len(index.records)} tracklets, {n_frames} frames to {args.out}")
    elif args.command == "train":
        config = config_from_args(args)
        args.out.mkdir(parents=True, exist_ok=True)
        config.save(args.out / "config.txt")
        result = train(config, args.data_root, args.out, resume=args.resume,
                       save_every=args.save_every)
        print(f"checkpoint: {result['checkpoint']}")
    elif args.command == "evaluate":
        feats = tuple(args.features.split(",")) if args.features else None
        results = evaluate(args.checkpoint, args.data_root, args.out, features=feats)
        for feat, res in results.items():
            print(f"[{feat}]")
            print(res.to_text(), end="")
            print(json.dumps({"feature": feat, "map": res.map, "cmc": list(map(float, res.cmc))}))
    elif args.command == "ablate":
        config = config_from_args(args)
        seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
        rows = ablate(args.preset, config, args.data_root, args.out, seeds)
        print(format_table(rows), end="")
    elif args.command == "heatmaps":
        index = load_dataset_index(args.data_root)
        paths = export_heatmaps(args.checkpoint, _find_record(index, args.tracklet), args.out)
        print(f"wrote {len(paths)} images to {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ReidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (TypeError, ValueError) as exc:
        # bad flag values surface from dataclass validation
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
