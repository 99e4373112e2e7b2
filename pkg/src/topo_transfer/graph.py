"""Complete feature/semantic graphs and exact minimum spanning trees.

Edges are totally ordered by ``(w, i, j)`` with ``i < j`` and weights compared
bit-for-bit, so the MST is unique and both algorithms below return the same
edge set:

* :func:`minimum_spanning_tree` - Kruskal with union-find over an explicit
  :class:`EdgeList` (sparse/local graphs, oracles, debugging).
* :func:`dense_mst` - Prim over a dense weight matrix, used for complete
  graphs where materialising ~n^2/2 edges would be wasteful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import GraphError
from .types import SampleSet


@dataclass(frozen=True, eq=False)
class EdgeList:
    n: int
    i: np.ndarray
    j: np.ndarray
    w: np.ndarray
    kind: str = "native"
    lam: float | None = None

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.int64)
        j = np.asarray(self.j, dtype=np.int64)
        w = np.asarray(self.w, dtype=np.float64)
        if not (i.shape == j.shape == w.shape) or i.ndim != 1:
            raise GraphError("edge columns must be 1-D and of equal length")
        if i.size and (np.any(i >= j) or i.min() < 0 or j.max() >= self.n):
            raise GraphError("edges must satisfy 0 <= i < j < n")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise GraphError("edge weights must be finite and >= 0")
        if np.unique(i * self.n + j).size != i.size:
            raise GraphError("duplicate edge")
        for name, a in (("i", i), ("j", j), ("w", w)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def from_triples(cls, n: int, triples, **kw) -> EdgeList:
        triples = list(triples)
        i = [min(a, b) for a, b, _ in triples]
        j = [max(a, b) for a, b, _ in triples]
        return cls(n, np.array(i, dtype=np.int64), np.array(j, dtype=np.int64),
                   np.array([w for *_, w in triples], dtype=np.float64), **kw)

    @classmethod
    def from_dense(cls, weights: np.ndarray, **kw) -> EdgeList:
        n = weights.shape[0]
        i, j = np.triu_indices(n, k=1)
        return cls(n, i, j, weights[i, j], **kw)

    def triples(self) -> list[tuple[int, int, float]]:
        return list(zip(self.i.tolist(), self.j.tolist(), self.w.tolist()))

    def __len__(self) -> int:
        return int(self.i.size)


@dataclass(frozen=True, eq=False)
class SpanningTree:
    """Tree edges sorted by ``(i, j)``; ``total_weight`` is an exact fsum."""

    n: int
    i: np.ndarray
    j: np.ndarray
    w: np.ndarray
    total_weight: float

    @classmethod
    def from_edges(cls, n: int, i, j, w) -> SpanningTree:
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        w = np.asarray(w, dtype=np.float64)
        order = np.lexsort((j, i))
        i, j, w = i[order], j[order], w[order]
        return cls(n, i, j, w, math.fsum(w.tolist()))

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.i.tolist(), self.j.tolist(), self.w.tolist()))

    def edge_pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.i.tolist(), self.j.tolist()))


# -- distances --------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _distances(x):
    n, d = x.shape
    out = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        out[i, i] = 0.0
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                t = x[i, k] - x[j, k]
                acc += t * t
            out[i, j] = out[j, i] = math.sqrt(acc)
    return out


def pairwise_distances(features: np.ndarray) -> np.ndarray:
    """Dense Euclidean distance matrix in float64.

    Squared differences are summed in ascending feature order, one multiply
    and one add per term (no fast-math, so no fused multiply-add), which keeps
    the result bit-identical across platforms and thread counts.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return _distances(np.ascontiguousarray(x))


def semantic_weights(dist: np.ndarray, labels: np.ndarray, lam: float) -> np.ndarray:
    """``0`` within a class, ``min(d, lam)`` across classes."""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    return np.where(same, 0.0, np.minimum(dist, lam))


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not (math.isfinite(lam) and lam > 0):
        raise GraphError(f"lambda must be finite and > 0, got {lam}")
    return lam


def build_native_graph(sample_set: SampleSet) -> EdgeList:
    if len(sample_set) < 2:
        raise GraphError(f"need at least 2 points, got {len(sample_set)}")
    return EdgeList.from_dense(pairwise_distances(sample_set.features), kind="native")


def build_semantic_graph(sample_set: SampleSet, lam: float) -> EdgeList:
    lam = _check_lambda(lam)
    if len(sample_set) < 2:
        raise GraphError(f"need at least 2 points, got {len(sample_set)}")
    dist = pairwise_distances(sample_set.features)
    return EdgeList.from_dense(semantic_weights(dist, sample_set.labels, lam), kind="semantic", lam=lam)


# -- MST --------------------------------------------------------------------


def minimum_spanning_tree(graph: EdgeList) -> SpanningTree:
    """Kruskal over ``graph`` with ``(w, i, j)`` edge order."""
    n = graph.n
    if n < 1:
        raise GraphError("graph has no nodes")
    order = np.lexsort((graph.j, graph.i, graph.w))
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    gi, gj = graph.i.tolist(), graph.j.tolist()
    picked = []
    for e in order.tolist():
        ra, rb = find(gi[e]), find(gj[e])
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
            picked.append(e)
            if len(picked) == n - 1:
                break
    if len(picked) != n - 1:
        raise GraphError(f"graph is disconnected ({len(picked) + 1} nodes reachable in a forest of {n})")
    picked = np.array(picked, dtype=np.int64)
    return SpanningTree.from_edges(n, graph.i[picked], graph.j[picked], graph.w[picked])


@numba.njit(cache=True, nogil=True)
def _prim(w):
    n = w.shape[0]
    outside = np.ones(n, dtype=np.bool_)
    outside[0] = False
    best_w = w[0].copy()
    best_a = np.zeros(n, dtype=np.int64)
    best_b = np.arange(n)
    ei = np.empty(n - 1, dtype=np.int64)
    ej = np.empty(n - 1, dtype=np.int64)
    ew = np.empty(n - 1, dtype=np.float64)
    for step in range(n - 1):
        v = -1
        bw = np.inf
        ba = 0
        bb = 0
        for u in range(n):
            if not outside[u]:
                continue
            x = best_w[u]
            if v < 0 or x < bw or (x == bw and (best_a[u] < ba or (best_a[u] == ba and best_b[u] < bb))):
                v = u
                bw = x
                ba = best_a[u]
                bb = best_b[u]
        if bw == np.inf:
            return ei, ej, ew, False
        ei[step] = ba
        ej[step] = bb
        ew[step] = bw
        outside[v] = False
        for u in range(n):
            if not outside[u]:
                continue
            x = w[v, u]
            a = min(u, v)
            b = max(u, v)
            cur = best_w[u]
            if x < cur or (x == cur and (a < best_a[u] or (a == best_a[u] and b < best_b[u]))):
                best_w[u] = x
                best_a[u] = a
                best_b[u] = b
    return ei, ej, ew, True


def dense_mst(weights: np.ndarray) -> SpanningTree:
    """Prim over a symmetric dense matrix; ``inf`` marks a missing edge.

    The frontier keeps, per outside vertex, the smallest ``(w, i, j)`` key of
    an edge into the tree, so the tie rule matches Kruskal's exactly.
    """
    w = np.ascontiguousarray(weights, dtype=np.float64)
    n = w.shape[0]
    if w.ndim != 2 or w.shape != (n, n) or n < 1:
        raise GraphError(f"weights must be a square matrix, got {w.shape}")
    if np.isnan(w).any():
        raise GraphError("weights contain NaN")
    if n == 1:
        return SpanningTree.from_edges(1, [], [], [])
    ei, ej, ew, ok = _prim(w)
    if not ok:
        raise GraphError("graph is disconnected")
    return SpanningTree.from_edges(n, ei, ej, ew)


def native_mst(sample_set: SampleSet) -> SpanningTree:
    if len(sample_set) < 2:
        raise GraphError(f"need at least 2 points, got {len(sample_set)}")
    return dense_mst(pairwise_distances(sample_set.features))


def semantic_mst(sample_set: SampleSet, lam: float) -> SpanningTree:
    lam = _check_lambda(lam)
    if len(sample_set) < 2:
        raise GraphError(f"need at least 2 points, got {len(sample_set)}")
    dist = pairwise_distances(sample_set.features)
    return dense_mst(semantic_weights(dist, sample_set.labels, lam))


def write_tree(tree: SpanningTree, path: Path | str) -> None:
    """Debug dump: one ``i j w`` line per edge, weights in round-trip repr."""
    lines = [f"{i} {j} {w!r}" for i, j, w in tree.edges]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_tree(path: Path | str, n: int) -> SpanningTree:
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    return SpanningTree.from_edges(
        n, [int(r[0]) for r in rows], [int(r[1]) for r in rows], [float(r[2]) for r in rows]
    )
