"""Restricted random sampling of clips and positive-pair batch mining."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError

MAX_RETRIES = 100


def chunk_bounds(length: int, num_chunks: int) -> list:
    """``[start, stop)`` of each chunk; the remainder joins the last chunk."""
    size = length // num_chunks
    bounds = [(i * size, (i + 1) * size) for i in range(num_chunks)]
    bounds[-1] = (bounds[-1][0], length)
    return bounds


def rrs_sample(length: int, num_chunks: int, mode: str = "eval", rng=None) -> list:
    """Pick ``num_chunks`` ordered frame indices from a sequence of ``length``.

    Training draws one index uniformly inside each chunk; evaluation takes
    each chunk's first frame. Sequences shorter than ``num_chunks`` are
    cycled so the result always has ``num_chunks`` entries.
    """
    if length < 1:
        raise DataError("cannot sample from an empty sequence")
    if num_chunks < 1:
        raise ValueError("num_chunks must be at least 1")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if length < num_chunks:
        return [i % length for i in range(num_chunks)]
    bounds = chunk_bounds(length, num_chunks)
    if mode == "eval":
        return [lo for lo, _ in bounds]
    rng = np.random.default_rng(rng)
    return [int(rng.integers(lo, hi)) for lo, hi in bounds]


@dataclass
class SampleBatch:
    """Batch of ``N`` records: probes first, then their cross-camera partners.

    ``records[i]`` and ``records[i + N/2]`` share an identity.
    """

    records: list
    labels: np.ndarray
    cameras: list
    frames: object = None

    @property
    def half(self) -> int:
        return len(self.records) // 2

    @property
    def pair_labels(self) -> np.ndarray:
        h = self.half
        return (self.labels[:h] == self.labels[h:]).astype(np.int64)


def mine_pairs(index, batch_size: int, rng=None) -> SampleBatch:
    """Draw ``batch_size / 2`` probe tracklets and a same-identity,
    different-camera partner for each.

    Probe identities are drawn uniformly without replacement, then one of
    the identity's tracklets uniformly.
    """
    if batch_size < 2 or batch_size % 2:
        raise ValueError(f"batch size must be a positive even number, got {batch_size}")
    rng = np.random.default_rng(rng)
    train = index.split("train")
    if not train:
        raise DataError("train split is empty")
    label_of = index.label_map()
    by_identity = {}
    for r in train:
        by_identity.setdefault(r.identity, []).append(r)

    half = batch_size // 2
    # identities without replacement (reshuffled when exhausted), so a batch
    # holds as many distinct identities as the split allows
    identities = sorted(by_identity)
    queue: list = []
    probes, partners = [], []
    while len(probes) < half:
        for _ in range(MAX_RETRIES):
            if not queue:
                queue = [identities[i] for i in rng.permutation(len(identities))]
            pool = by_identity[queue.pop(0)]
            probe = pool[int(rng.integers(len(pool)))]
            others = [r for r in by_identity[probe.identity] if r.camera != probe.camera]
            if others:
                break
        else:
            raise DataError(f"no cross-camera partner found after {MAX_RETRIES} draws")
        probes.append(probe)
        partners.append(others[int(rng.integers(len(others)))])
    records = probes + partners
    labels = np.array([label_of[r.identity] for r in records], dtype=np.int64)
    return SampleBatch(records, labels, [r.camera for r in records])


def verification_pairs(labels) -> tuple:
    """Probe/gallery index pairs for the verification loss.

    Probe ``i`` meets its own partner ``i + h`` (positive) and the next
    partner in round-robin order with a different identity (negative).
    Returns ``(probe_idx, gallery_idx, y)`` arrays.
    """
    labels = np.asarray(labels)
    h = len(labels) // 2
    p_idx, g_idx, y = [], [], []
    for i in range(h):
        p_idx.append(i)
        g_idx.append(i + h)
        y.append(int(labels[i] == labels[i + h]))
    for i in range(h):
        for step in range(1, h):
            j = (i + step) % h + h
            if labels[j] != labels[i]:
                p_idx.append(i)
                g_idx.append(j)
                y.append(0)
                break
    return np.array(p_idx), np.array(g_idx), np.array(y, dtype=np.int64)
