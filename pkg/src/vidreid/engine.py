"""Training loop, checkpoints and evaluation."""
from __future__ import annotations

import io
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig
from .data import FrameCache, augment, load_dataset_index, mine_pairs, rrs_sample, verification_pairs
from .errors import DataError, NumericError
from .metrics import EvalResult, evaluate_embeddings
from .model import ReidNet, load_parameter_tree, parameter_tree

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
FEATURES = ("low", "high", "joint")


def seed_everything(seed: int, threads: int = 1) -> None:
    torch.manual_seed(seed)
    torch.set_num_threads(threads)


def epoch_rngs(seed: int, epoch: int):
    """Independent numpy/torch generators for one epoch, derived from the seed.

    Deriving them from ``(seed, epoch)`` means a resumed run needs no stored
    sampler state to replay the exact batches of an uninterrupted one.
    """
    rng = np.random.default_rng([seed, epoch])
    gen = torch.Generator()
    gen.manual_seed(int(rng.integers(2**62)))
    return rng, gen


def build_optimizer(model, config: TrainConfig):
    opt = torch.optim.SGD(model.parameters(), lr=config.lr, momentum=config.momentum,
                          weight_decay=config.weight_decay, nesterov=config.nesterov)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=config.lr_step, gamma=config.lr_gamma)
    return opt, sched


def lr_at(config: TrainConfig, epoch: int) -> float:
    return config.lr * config.lr_gamma ** (epoch // config.lr_step)


def make_clip_batch(records, cache: FrameCache, config: TrainConfig, mode: str, rng=None, gen=None):
    clips = []
    for r in records:
        idx = rrs_sample(len(r.frames), config.T, mode, rng)
        clip = cache.clip(r, idx)
        if mode == "train" and config.augment:
            clip = augment(clip, "train", generator=gen,
                           mean=(config.norm_mean,) * 3, std=(config.norm_std,) * 3)
        else:
            clip = augment(clip, "eval", mean=(config.norm_mean,) * 3, std=(config.norm_std,) * 3)
        clips.append(clip)
    return torch.stack(clips)


# ---------------------------------------------------------------- checkpoints

def checkpoint_state(model, optimizer, scheduler, epoch: int, config: TrainConfig) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "epoch": epoch,
        "config": config.to_dict(),
        "num_identities": model.num_identities,
        "params": parameter_tree(model),
        "optimizer": optimizer.state_dict() if optimizer else None,
        "scheduler": scheduler.state_dict() if scheduler else None,
        "rng": {"torch": torch.get_rng_state(), "seed": config.seed},
    }


def _canonical(obj):
    # pickle memoizes by object identity; interning every string makes the
    # byte stream independent of where equal strings came from (fresh vs loaded)
    if isinstance(obj, str):
        return sys.intern(obj)
    if isinstance(obj, dict):
        return {_canonical(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return type(obj)(_canonical(v) for v in obj)
    return obj


def save_checkpoint(state: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    torch.save(_canonical(state), buf)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)
    return path


def load_checkpoint(path) -> dict:
    try:
        state = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError, EOFError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if state.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {state.get('format_version')}")
    return state


def model_from_checkpoint(state: dict, config: TrainConfig | None = None):
    config = config or TrainConfig.from_dict(state["config"])
    model = ReidNet(config, state["num_identities"])
    load_parameter_tree(model, state["params"])
    return model, config


# ---------------------------------------------------------------- training

def train(config: TrainConfig, dataset_root, out_dir, resume=None, stop_epoch=None,
          save_every: int = 0, index=None, cache=None) -> dict:
    """Train ``config`` on ``dataset_root``; writes ``last.pt`` and ``train_log.jsonl``.

    ``resume`` continues from a checkpoint path. ``stop_epoch`` halts early
    after that many completed epochs (the schedule still follows
    ``config.epochs``). Returns ``{"checkpoint", "log"}``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = index or load_dataset_index(dataset_root)
    cache = cache or FrameCache(config.image_size)
    seed_everything(config.seed, config.threads)
    num_ids = len(index.train_identities())
    model = ReidNet(config, num_ids)
    opt, sched = build_optimizer(model, config)
    start = 0
    log_path = out_dir / "train_log.jsonl"
    records = []
    if resume is not None:
        state = load_checkpoint(resume)
        load_parameter_tree(model, state["params"])
        opt.load_state_dict(state["optimizer"])
        sched.load_state_dict(state["scheduler"])
        torch.set_rng_state(state["rng"]["torch"])
        start = state["epoch"]
        if log_path.exists():
            records = [json.loads(line) for line in log_path.read_text().splitlines()][:start]
    log_path.write_text("".join(json.dumps(r) + "\n" for r in records))

    n_train = len(index.split("train"))
    steps = config.steps_per_epoch or max(1, math.ceil(n_train / (config.batch // 2)))
    end = config.epochs if stop_epoch is None else min(stop_epoch, config.epochs)
    last_ckpt = out_dir / "last.pt"
    for epoch in range(start, end):
        rng, gen = epoch_rngs(config.seed, epoch)
        model.train()
        lr = opt.param_groups[0]["lr"]
        sums = {"frame": 0.0, "video": 0.0, "veri": 0.0, "total": 0.0}
        tic = time.perf_counter()
        for step in range(steps):
            batch = mine_pairs(index, config.batch, rng)
            frames = make_clip_batch(batch.records, cache, config, "train", rng, gen)
            labels = torch.as_tensor(batch.labels)
            pairs = tuple(torch.as_tensor(a) for a in verification_pairs(batch.labels))
            out = model(frames)
            parts = model.losses(out, labels, pairs)
            if not torch.isfinite(parts["total"]):
                raise NumericError(
                    f"non-finite loss at epoch {epoch} step {step}; last good checkpoint: {last_ckpt}"
                )
            opt.zero_grad()
            parts["total"].backward()
            opt.step()
            model.update_tables(out, labels)
            for k in sums:
                sums[k] += parts[k].item()
        sched.step()
        rec = {"epoch": epoch, "steps": steps, "lr": lr,
               **{k: v / steps for k, v in sums.items()},
               "wall": round(time.perf_counter() - tic, 3)}
        records.append(rec)
        with log_path.open("a") as fh:
            fh.write(json.dumps(rec) + "\n")
        log.info("epoch %d lr %.2e loss %.4f", epoch, lr, rec["total"])
        state = checkpoint_state(model, opt, sched, epoch + 1, config)
        save_checkpoint(state, last_ckpt)
        if save_every and (epoch + 1) % save_every == 0:
            save_checkpoint(state, out_dir / f"epoch{epoch + 1:03d}.pt")
    return {"checkpoint": last_ckpt, "log": records, "model": model}


# ---------------------------------------------------------------- evaluation

@torch.no_grad()
def embed_records(model, records, cache, config, batch_size=32) -> dict:
    model.eval()
    feats = {k: [] for k in FEATURES}
    for i in range(0, len(records), batch_size):
        frames = make_clip_batch(records[i:i + batch_size], cache, config, "eval")
        out = model(frames)
        for k in FEATURES:
            feats[k].append(out[k])
    return {k: torch.cat(v).double().numpy() for k, v in feats.items()}


def evaluate(checkpoint, dataset_root, out_dir=None, features=None, index=None, cache=None,
             max_rank: int = 20) -> dict:
    """Score a checkpoint on the query/gallery split.

    Returns one :class:`EvalResult` per requested feature ('low', 'high',
    'joint'); by default only the configured test feature.
    """
    state = checkpoint if isinstance(checkpoint, dict) else load_checkpoint(checkpoint)
    model, config = model_from_checkpoint(state)
    index = index or load_dataset_index(dataset_root)
    cache = cache or FrameCache(config.image_size)
    query, gallery = index.split("query"), index.split("gallery")
    if not query or not gallery:
        raise DataError("dataset has no query/gallery split")
    q = embed_records(model, query, cache, config)
    g = embed_records(model, gallery, cache, config)
    q_ids = [r.identity for r in query]
    g_ids = [r.identity for r in gallery]
    q_cams = [r.camera for r in query]
    g_cams = [r.camera for r in gallery]
    features = features or (config.test_feature,)
    results = {}
    for feat in features:
        res = evaluate_embeddings(q[feat], q_ids, q_cams, g[feat], g_ids, g_cams, max_rank)
        results[feat] = res
        if out_dir is not None:
            res.write(Path(out_dir) / f"eval_{feat}")
    return results


def rank1(result: EvalResult) -> float:
    return float(result.cmc[0])
