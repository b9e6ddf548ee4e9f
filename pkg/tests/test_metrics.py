import math
from math import fsum

import numpy as np
import pytest

from vidreid.errors import DataError, ShapeError
from vidreid.metrics import (
    DistanceMatrix,
    cmc_curve,
    evaluate_distances,
    mean_average_precision,
    pairwise_distances,
)


def oracle(values, q_ids, q_cams, g_ids, g_cams, max_rank):
    """Sort each query's gallery with Python's sort, drop junk, scan."""
    hits = [0] * max_rank
    aps = []
    for i in range(len(q_ids)):
        ranked = sorted(range(len(g_ids)), key=lambda j: (values[i][j], j))
        ranked = [j for j in ranked if not (g_ids[j] == q_ids[i] and g_cams[j] == q_cams[i])]
        flags = [g_ids[j] == q_ids[i] for j in ranked]
        if not any(flags):
            continue
        first = flags.index(True)
        for k in range(first, max_rank):
            hits[k] += 1
        found, precisions = 0, []
        for pos, f in enumerate(flags):
            if f:
                found += 1
                precisions.append(found / (pos + 1))
        aps.append(fsum(precisions) / len(precisions))
    return [h / len(aps) for h in hits], fsum(aps) / len(aps)


def random_instance(rng):
    q, g = int(rng.integers(1, 11)), int(rng.integers(1, 21))
    n_ids, n_cams = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    dm = DistanceMatrix(
        rng.permutation(q * g).reshape(q, g).astype(float) / (q * g),  # tie-free
        rng.integers(0, n_ids, q), rng.integers(0, n_cams, q),
        rng.integers(0, n_ids, g), rng.integers(0, n_cams, g),
    )
    return dm


def make(values, q_ids, q_cams, g_ids, g_cams):
    return DistanceMatrix(np.asarray(values, float), np.asarray(q_ids), np.asarray(q_cams),
                          np.asarray(g_ids), np.asarray(g_cams))


def test_distance_examples():
    v = np.array([[0.6, 0.8]])
    assert pairwise_distances(v, v)[0, 0] == pytest.approx(0.0, abs=1e-7)
    d = pairwise_distances(np.eye(2)[:1], np.eye(2)[1:])
    assert d[0, 0] == pytest.approx(math.sqrt(2))


def test_distance_matches_loop_and_transpose():
    rng = np.random.default_rng(0)
    q, g = rng.normal(size=(3, 4)), rng.normal(size=(5, 4))
    d = pairwise_distances(q, g)
    for i in range(3):
        for j in range(5):
            assert d[i, j] == pytest.approx(math.sqrt(sum((q[i] - g[j]) ** 2)), abs=1e-6)
    assert np.allclose(pairwise_distances(g, q), d.T)
    with pytest.raises(ShapeError):
        pairwise_distances(q, rng.normal(size=(2, 3)))


def test_perfect_ranking_gives_ones():
    dm = make([[0.1, 0.9], [0.8, 0.2]], [0, 1], [0, 0], [0, 1], [1, 1])
    assert np.all(cmc_curve(dm, 2) == 1.0)
    m, aps = mean_average_precision(dm)
    assert m == 1.0


def test_single_query_positive_at_rank_three():
    dm = make([[0.1, 0.2, 0.3, 0.4]], [7], [0], [1, 2, 7, 3], [1, 1, 1, 1])
    assert cmc_curve(dm, 5).tolist() == [0, 0, 1, 1, 1]


def test_ap_positive_second_of_three():
    dm = make([[0.1, 0.2, 0.3]], [5], [0], [1, 5, 2], [1, 1, 1])
    m, aps = mean_average_precision(dm)
    assert abs(m - 0.5) < 1e-9


def test_same_camera_same_identity_excluded():
    # the nearest entry is the query's own camera view and must be skipped
    dm = make([[0.0, 0.5, 0.6]], [1], [0], [1, 2, 1], [0, 1, 1])
    res = evaluate_distances(dm, 3)
    assert res.cmc.tolist() == [0, 1, 1]
    assert res.map == pytest.approx(0.5)


def test_queries_without_positive_are_dropped():
    dm = make([[0.1, 0.2], [0.3, 0.4]], [1, 9], [0, 0], [1, 2], [1, 1])
    res = evaluate_distances(dm, 2)
    assert res.valid.tolist() == [True, False]
    assert res.cmc[0] == 1.0
    assert np.isnan(res.per_query_ap[1])


def test_all_invalid_rejected():
    dm = make([[0.1]], [1], [0], [2], [1])
    with pytest.raises(DataError):
        cmc_curve(dm)


def test_matches_bruteforce_on_random_instances():
    rng = np.random.default_rng(1)
    checked = 0
    while checked < 100:
        dm = random_instance(rng)
        try:
            want_cmc, want_map = oracle(dm.values, dm.query_ids, dm.query_cams,
                                        dm.gallery_ids, dm.gallery_cams, 20)
        except ZeroDivisionError:
            with pytest.raises(DataError):
                evaluate_distances(dm, 20)
            continue
        res = evaluate_distances(dm, 20)
        assert res.cmc.tolist() == want_cmc
        assert res.map == want_map
        checked += 1


def test_cmc_monotone_and_map_bounds():
    rng = np.random.default_rng(2)
    for _ in range(50):
        dm = random_instance(rng)
        try:
            res = evaluate_distances(dm, 20)
        except DataError:
            continue
        assert np.all(np.diff(res.cmc) >= 0)
        assert np.all((res.cmc >= 0) & (res.cmc <= 1))
        assert 0 <= res.map <= 1


def test_gallery_permutation_invariance():
    rng = np.random.default_rng(3)
    for _ in range(30):
        dm = random_instance(rng)
        try:
            base = evaluate_distances(dm, 20)
        except DataError:
            continue
        perm = rng.permutation(len(dm.gallery_ids))
        shuffled = DistanceMatrix(dm.values[:, perm], dm.query_ids, dm.query_cams,
                                  dm.gallery_ids[perm], dm.gallery_cams[perm])
        res = evaluate_distances(shuffled, 20)
        assert np.array_equal(res.cmc, base.cmc)
        assert res.map == base.map


def test_map_one_iff_positives_first():
    dm = make([[0.1, 0.2, 0.3, 0.4]], [1], [0], [1, 1, 2, 3], [1, 2, 1, 1])
    assert mean_average_precision(dm)[0] == 1.0
    dm = make([[0.1, 0.2, 0.3, 0.4]], [1], [0], [1, 2, 1, 3], [1, 1, 2, 1])
    assert mean_average_precision(dm)[0] < 1.0


def test_report_serialisation(tmp_path):
    dm = make([[0.1, 0.2, 0.3]], [5], [0], [1, 5, 2], [1, 1, 1])
    res = evaluate_distances(dm, 3)
    res.write(tmp_path / "report")
    import json

    record = json.loads((tmp_path / "report.json").read_text())
    assert record["map"] == 0.5 and record["cmc"] == [0.0, 1.0, 1.0]
    assert record["rank_lists"] == [[0, 1, 2]]
    assert "Rank-1: 0.0000" in (tmp_path / "report.txt").read_text()
