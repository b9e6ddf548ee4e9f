"""Retrieval evaluation: distances, CMC and mAP under the cross-camera protocol.

For every query, gallery entries with the same identity *and* camera are
removed before ranking. Queries with no remaining positive are dropped.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError


@dataclass
class DistanceMatrix:
    values: np.ndarray
    query_ids: np.ndarray
    query_cams: np.ndarray
    gallery_ids: np.ndarray
    gallery_cams: np.ndarray


@dataclass
class EvalResult:
    cmc: np.ndarray
    map: float
    per_query_ap: np.ndarray
    valid: np.ndarray = field(default=None)
    rank_lists: list = field(default_factory=list)

    def rank(self, k: int) -> float:
        return float(self.cmc[k - 1])

    def to_record(self) -> dict:
        return {
            "map": float(self.map),
            "cmc": [float(v) for v in self.cmc],
            "per_query_ap": [None if np.isnan(v) else float(v) for v in self.per_query_ap],
            "rank_lists": [list(map(int, r)) for r in self.rank_lists],
        }

    def to_text(self, ranks=(1, 5, 10, 20)) -> str:
        lines = [f"mAP: {self.map:.4f}"]
        for k in ranks:
            if k <= len(self.cmc):
                lines.append(f"Rank-{k}: {self.cmc[k - 1]:.4f}")
        lines.append(f"valid_queries: {int(np.sum(self.valid)) if self.valid is not None else len(self.per_query_ap)}")
        return "\n".join(lines) + "\n"

    def write(self, stem) -> None:
        from pathlib import Path

        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        stem.with_suffix(".txt").write_text(self.to_text())
        stem.with_suffix(".json").write_text(json.dumps(self.to_record(), indent=1))


def pairwise_distances(queries, gallery) -> np.ndarray:
    """Euclidean distance between every query row and every gallery row."""
    q = np.asarray(queries, dtype=np.float64)
    g = np.asarray(gallery, dtype=np.float64)
    if q.ndim != 2 or g.ndim != 2 or q.shape[1] != g.shape[1]:
        raise ShapeError(f"dimension mismatch: queries {q.shape}, gallery {g.shape}")
    sq = (q**2).sum(1)[:, None] + (g**2).sum(1)[None, :] - 2 * q @ g.T
    return np.sqrt(np.clip(sq, 0, None))


def l2_normalize(x, eps=1e-12):
    x = np.asarray(x, dtype=np.float64)
    return x / np.maximum(np.linalg.norm(x, axis=1, keepdims=True), eps)


def _filtered_rankings(dist: DistanceMatrix):
    """Yield ``(order, matches)`` per query, or ``None`` for invalid queries."""
    values = np.asarray(dist.values)
    if values.shape != (len(dist.query_ids), len(dist.gallery_ids)):
        raise ShapeError(f"distance matrix {values.shape} does not match metadata")
    g_ids = np.asarray(dist.gallery_ids)
    g_cams = np.asarray(dist.gallery_cams)
    for i in range(values.shape[0]):
        order = np.argsort(values[i], kind="stable")
        keep = ~((g_ids[order] == dist.query_ids[i]) & (g_cams[order] == dist.query_cams[i]))
        order = order[keep]
        matches = g_ids[order] == dist.query_ids[i]
        yield (order, matches) if matches.any() else None


def evaluate_distances(dist: DistanceMatrix, max_rank: int = 20) -> EvalResult:
    """CMC and AP in one pass over the filtered rankings."""
    n_q = len(dist.query_ids)
    hits = np.zeros(max_rank)
    aps = np.full(n_q, np.nan)
    valid = np.zeros(n_q, dtype=bool)
    ranks = []
    for i, ranked in enumerate(_filtered_rankings(dist)):
        if ranked is None:
            ranks.append([])
            continue
        order, matches = ranked
        valid[i] = True
        ranks.append(order[:max_rank])
        first = int(np.argmax(matches))
        if first < max_rank:
            hits[first:] += 1
        positions = np.flatnonzero(matches)
        precision = np.arange(1, len(positions) + 1) / (positions + 1)
        # correctly rounded sums: the result is independent of summation order
        aps[i] = math.fsum(precision) / len(precision)
    if not valid.any():
        raise DataError("no query has a valid cross-camera positive")
    n_valid = valid.sum()
    return EvalResult(hits / n_valid, math.fsum(aps[valid]) / int(n_valid), aps, valid, ranks)


def cmc_curve(dist: DistanceMatrix, max_rank: int = 20) -> np.ndarray:
    return evaluate_distances(dist, max_rank).cmc


def mean_average_precision(dist: DistanceMatrix) -> tuple[float, np.ndarray]:
    res = evaluate_distances(dist, 1)
    return res.map, res.per_query_ap


def evaluate_embeddings(q_feats, q_ids, q_cams, g_feats, g_ids, g_cams, max_rank=20) -> EvalResult:
    """Normalise embeddings, compute distances and score the ranking."""
    dist = DistanceMatrix(
        pairwise_distances(l2_normalize(q_feats), l2_normalize(g_feats)),
        np.asarray(q_ids), np.asarray(q_cams), np.asarray(g_ids), np.asarray(g_cams),
    )
    return evaluate_distances(dist, max_rank)
