"""Brute-force k-nearest-neighbour localization."""

from __future__ import annotations

import numpy as np


def knn_predict_batch(train_x: np.ndarray, train_xy: np.ndarray, query: np.ndarray, k: int) -> np.ndarray:
    """Mean coordinates of the ``k`` Euclidean-nearest training inputs, per query row.

    Ties are broken by training-set order.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_xy = np.asarray(train_xy, dtype=np.float64)
    query = np.atleast_2d(np.asarray(query, dtype=np.float64))
    if len(train_x) == 0:
        raise ValueError("training set is empty")
    if not 1 <= k <= len(train_x):
        raise ValueError(f"k must lie in [1, {len(train_x)}], got {k}")
    if query.shape[1] != train_x.shape[1]:
        raise ValueError(f"query length {query.shape[1]} != training length {train_x.shape[1]}")
    out = np.empty((len(query), 2))
    chunk = max(1, 2_000_000 // (train_x.size or 1))
    for s in range(0, len(query), chunk):
        # direct differences, not the dot-product expansion, so exact ties stay ties
        d = ((query[s:s + chunk, None, :] - train_x[None, :, :]) ** 2).sum(axis=-1)
        nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
        out[s:s + chunk] = train_xy[nearest].mean(axis=1)
    return out


def knn_predict(train, query, k: int) -> tuple[float, float]:
    """``train`` is a sequence of ``(values, x, y)``; ``query`` a feature vector."""
    if len(train) == 0:
        raise ValueError("training set is empty")
    xs = np.array([np.asarray(getattr(v, "values", v), dtype=np.float64) for v, _, _ in train])
    xy = np.array([(x, y) for _, x, y in train], dtype=np.float64)
    q = np.asarray(getattr(query, "values", query), dtype=np.float64)
    if xs.ndim != 2 or q.ndim != 1:
        raise ValueError("inconsistent input lengths")
    px, py = knn_predict_batch(xs, xy, q[None, :], k)[0]
    return float(px), float(py)
