import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectraloc.models.knn import knn_predict, knn_predict_batch

from conftest import rng


def oracle(train, query, k):
    """Full sort of (distance, position) pairs with scalar arithmetic."""
    scored = []
    for pos, (vals, x, y) in enumerate(train):
        scored.append((sum((a - b) ** 2 for a, b in zip(vals, query)), pos, x, y))
    scored.sort()
    near = scored[:k]
    return sum(s[2] for s in near) / k, sum(s[3] for s in near) / k


def test_single_point():
    assert knn_predict([([1.0, 2.0], 3.0, 4.0)], [9.0, 9.0], 1) == (3.0, 4.0)


def test_exact_match():
    train = [([0.0, 0.0], 0.0, 0.0), ([1.0, 1.0], 5.0, 5.0), ([2.0, 2.0], 9.0, 1.0)]
    assert knn_predict(train, [1.0, 1.0], 1) == (5.0, 5.0)


def test_ties_follow_training_order():
    train = [([1.0], 10.0, 0.0), ([-1.0], 20.0, 0.0), ([1.0], 30.0, 0.0)]
    assert knn_predict(train, [0.0], 1) == (10.0, 0.0)
    assert knn_predict(train, [0.0], 2) == (15.0, 0.0)


def test_random_cases_match_oracle():
    r = rng(42)
    for case in range(200):
        n, dim = int(r.integers(1, 50)), int(r.integers(1, 10))
        k = int(r.integers(1, n + 1))
        # coarse grid values make exact ties common
        xs = r.integers(0, 4, (n, dim)).astype(float) / 2
        xy = r.uniform(-5, 5, (n, 2))
        q = r.integers(0, 4, dim).astype(float) / 2
        train = [(list(v), float(a), float(b)) for v, (a, b) in zip(xs, xy)]
        got = knn_predict(train, q, k)
        want = oracle(train, list(q), k)
        assert got == pytest.approx(want, abs=1e-12), case


@given(st.integers(1, 30), st.integers(1, 6), st.integers(0, 2**16))
def test_batch_matches_single(n, dim, seed):
    r = rng(seed)
    xs, xy = r.normal(size=(n, dim)), r.normal(size=(n, 2))
    queries = r.normal(size=(5, dim))
    k = int(r.integers(1, n + 1))
    batch = knn_predict_batch(xs, xy, queries, k)
    train = list(zip(xs, xy[:, 0], xy[:, 1]))
    for q, row in zip(queries, batch):
        assert tuple(row) == knn_predict(train, q, k)


def test_errors():
    with pytest.raises(ValueError):
        knn_predict([], [1.0], 1)
    with pytest.raises(ValueError):
        knn_predict([([1.0, 2.0], 0.0, 0.0)], [1.0], 1)
    with pytest.raises(ValueError):
        knn_predict([([1.0], 0.0, 0.0)], [1.0], 2)
    with pytest.raises(ValueError):
        knn_predict([([1.0], 0.0, 0.0)], [1.0], 0)
