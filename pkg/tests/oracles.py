"""Brute-force reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np


def prufer_decode(seq: tuple[int, ...], n: int) -> list[tuple[int, int]]:
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    edges = []
    for v in seq:
        leaf = min(u for u in range(n) if degree[u] == 1)
        edges.append((min(leaf, v), max(leaf, v)))
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = [x for x in range(n) if degree[x] == 1]
    edges.append((u, w))
    return edges


@lru_cache(maxsize=None)
def all_spanning_trees(n: int) -> np.ndarray:
    """Every labelled spanning tree of K_n as rows of (i, j) edges, ``n**(n-2)`` rows."""
    if n == 2:
        return np.array([[[0, 1]]])
    trees = [prufer_decode(seq, n) for seq in itertools.product(range(n), repeat=n - 2)]
    return np.array(trees)


def brute_force_mst_weight(weights: np.ndarray) -> float:
    """Minimum total weight over all spanning trees; ``inf`` entries are missing edges."""
    n = weights.shape[0]
    if n == 1:
        return 0.0
    trees = all_spanning_trees(n)
    totals = weights[trees[..., 0], trees[..., 1]]
    ok = np.isfinite(totals).all(axis=1)
    return min((math.fsum(row) for row in totals[ok].tolist()), default=math.inf)


def brute_force_tau(scores, truths, weighted: bool = True) -> float:
    """Pair-by-pair loop with hyperbolic additive weights on truth rank."""
    n = len(scores)
    rank = [sum(1 for u in truths if u > t) for t in truths]
    num, den = [], []
    for i in range(n):
        for j in range(i + 1, n):
            ds = scores[i] - scores[j]
            dt = truths[i] - truths[j]
            if ds == 0 or dt == 0:
                continue
            w = 1.0 / (rank[i] + 1) + 1.0 / (rank[j] + 1) if weighted else 1.0
            num.append(w if (ds > 0) == (dt > 0) else -w)
            den.append(w)
    return math.fsum(num) / math.fsum(den)


def brute_force_leakage(features: np.ndarray, labels: np.ndarray) -> float:
    """Cross-label fraction of the unique MST, found by enumeration (n <= 7)."""
    x = np.asarray(features, dtype=np.float64).reshape(len(labels), -1)
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    trees = all_spanning_trees(len(labels))
    totals = d[trees[..., 0], trees[..., 1]].sum(axis=1)
    best = trees[int(np.argmin(totals))]
    cross = sum(labels[i] != labels[j] for i, j in best)
    return cross / (len(labels) - 1)
