"""Approximate nearest-neighbor indexing with a bounded candidate budget.

Two index structures are provided: a randomized kd-tree forest and a
hierarchical k-means tree. Both are searched best-first under a hard budget
of ``m`` examined leaf candidates per query (default round(sqrt(N))); with
budget >= N the search degenerates to an exact scan. A small validation
probe picks the structure with the better recall at the configured budget.

Trees are stored as flat arrays so the batch search loops can run under
numba with one thread per query.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

__all__ = ["AnnIndex", "build_index", "brute_force_knn"]

_LEAF_SIZE = 16
_N_TREES = 8
_BRANCHING = 16
_TOP_VAR_DIMS = 8


# ---------------------------------------------------------------------------
# numba helpers: binary max-heap for running top-k, min-heap priority queue
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _topk_push(hd, hi, size, d, i, k):
    if size < k:
        hd[size] = d
        hi[size] = i
        j = size
        while j > 0:
            p = (j - 1) // 2
            if hd[p] < hd[j]:
                hd[p], hd[j] = hd[j], hd[p]
                hi[p], hi[j] = hi[j], hi[p]
                j = p
            else:
                break
        return size + 1
    if d < hd[0]:
        hd[0] = d
        hi[0] = i
        j = 0
        while True:
            l = 2 * j + 1
            r = l + 1
            big = j
            if l < k and hd[l] > hd[big]:
                big = l
            if r < k and hd[r] > hd[big]:
                big = r
            if big == j:
                break
            hd[big], hd[j] = hd[j], hd[big]
            hi[big], hi[j] = hi[j], hi[big]
            j = big
    return size


@njit(cache=True, inline="always")
def _pq_push(qd, qn, size, d, node):
    qd[size] = d
    qn[size] = node
    j = size
    while j > 0:
        p = (j - 1) // 2
        if qd[p] > qd[j]:
            qd[p], qd[j] = qd[j], qd[p]
            qn[p], qn[j] = qn[j], qn[p]
            j = p
        else:
            break
    return size + 1


@njit(cache=True, inline="always")
def _pq_pop(qd, qn, size):
    d = qd[0]
    node = qn[0]
    size -= 1
    qd[0] = qd[size]
    qn[0] = qn[size]
    j = 0
    while True:
        l = 2 * j + 1
        r = l + 1
        small = j
        if l < size and qd[l] < qd[small]:
            small = l
        if r < size and qd[r] < qd[small]:
            small = r
        if small == j:
            break
        qd[small], qd[j] = qd[j], qd[small]
        qn[small], qn[j] = qn[j], qn[small]
        j = small
    return d, node, size


@njit(cache=True, inline="always", fastmath=True)
def _sqdist(a, b):
    acc = 0.0
    for t in range(a.shape[0]):
        diff = a[t] - b[t]
        acc += diff * diff
    return acc


@njit(cache=True, inline="always", fastmath=True)
def _sqdist_bounded(a, b, cutoff):
    """Squared distance with early abandonment once past ``cutoff``."""
    acc = 0.0
    dim = a.shape[0]
    t = 0
    while t + 8 <= dim:
        for u in range(t, t + 8):
            diff = a[u] - b[u]
            acc += diff * diff
        if acc > cutoff:
            return acc
        t += 8
    for u in range(t, dim):
        diff = a[u] - b[u]
        acc += diff * diff
    return acc


@njit(cache=True, fastmath=True)
def _kd_search_batch(queries, data, split_dim, split_val, left, right,
                     leaf_start, leaf_end, leaf_points, roots, k, budget):
    nq = queries.shape[0]
    n = data.shape[0]
    n_nodes = split_dim.shape[0]
    out_idx = np.full((nq, k), -1, dtype=np.int64)
    out_dist = np.full((nq, k), np.inf, dtype=np.float64)
    visited = np.full(n, -1, dtype=np.int64)  # stamped with the query id
    hd = np.empty(k, dtype=np.float64)
    hi = np.empty(k, dtype=np.int64)
    qd = np.empty(n_nodes + roots.shape[0] + 2, dtype=np.float64)
    qn = np.empty(n_nodes + roots.shape[0] + 2, dtype=np.int64)
    for qi in range(nq):
        q = queries[qi]
        hsize = 0
        qsize = 0
        for r in range(roots.shape[0]):
            qsize = _pq_push(qd, qn, qsize, 0.0, roots[r])
        checked = 0
        while qsize > 0 and checked < budget:
            bound, node, qsize = _pq_pop(qd, qn, qsize)
            # descend greedily, queueing far siblings
            while left[node] >= 0:
                dim = split_dim[node]
                margin = q[dim] - split_val[node]
                if margin < 0.0:
                    near, far = left[node], right[node]
                else:
                    near, far = right[node], left[node]
                qsize = _pq_push(qd, qn, qsize, bound + margin * margin, far)
                node = near
            for t in range(leaf_start[node], leaf_end[node]):
                p = leaf_points[t]
                if visited[p] != qi:
                    visited[p] = qi
                    cutoff = hd[0] if hsize == k else np.inf
                    d = _sqdist_bounded(q, data[p], cutoff)
                    if d <= cutoff:
                        hsize = _topk_push(hd, hi, hsize, d, p, k)
                    checked += 1
                    if checked >= budget:
                        break
        order = np.argsort(hd[:hsize])
        for t in range(hsize):
            out_dist[qi, t] = hd[order[t]]
            out_idx[qi, t] = hi[order[t]]
    return out_idx, out_dist


@njit(cache=True, fastmath=True)
def _km_search_batch(queries, data, centroids, child_start, child_end,
                     leaf_start, leaf_end, leaf_points, k, budget):
    nq = queries.shape[0]
    n_nodes = centroids.shape[0]
    out_idx = np.full((nq, k), -1, dtype=np.int64)
    out_dist = np.full((nq, k), np.inf, dtype=np.float64)
    hd = np.empty(k, dtype=np.float64)
    hi = np.empty(k, dtype=np.int64)
    qd = np.empty(n_nodes + 2, dtype=np.float64)
    qn = np.empty(n_nodes + 2, dtype=np.int64)
    for qi in range(nq):
        q = queries[qi]
        hsize = 0
        qsize = _pq_push(qd, qn, 0, 0.0, 0)
        checked = 0
        while qsize > 0 and checked < budget:
            _, node, qsize = _pq_pop(qd, qn, qsize)
            if child_start[node] >= 0:
                for c in range(child_start[node], child_end[node]):
                    qsize = _pq_push(qd, qn, qsize, _sqdist(q, centroids[c]), c)
            else:
                for t in range(leaf_start[node], leaf_end[node]):
                    p = leaf_points[t]
                    cutoff = hd[0] if hsize == k else np.inf
                    d = _sqdist_bounded(q, data[p], cutoff)
                    if d <= cutoff:
                        hsize = _topk_push(hd, hi, hsize, d, p, k)
                    checked += 1
                    if checked >= budget:
                        break
        order = np.argsort(hd[:hsize])
        for t in range(hsize):
            out_dist[qi, t] = hd[order[t]]
            out_idx[qi, t] = hi[order[t]]
    return out_idx, out_dist


# ---------------------------------------------------------------------------
# tree construction (numpy, seeded)
# ---------------------------------------------------------------------------

@dataclass
class _KdForest:
    split_dim: np.ndarray
    split_val: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_start: np.ndarray
    leaf_end: np.ndarray
    leaf_points: np.ndarray
    roots: np.ndarray


def _build_kd_forest(data: np.ndarray, n_trees: int, rng: np.random.Generator) -> _KdForest:
    n = data.shape[0]
    split_dim: list[int] = []
    split_val: list[float] = []
    left: list[int] = []
    right: list[int] = []
    leaf_start: list[int] = []
    leaf_end: list[int] = []
    leaf_points: list[int] = []
    roots = []

    def new_node() -> int:
        split_dim.append(-1)
        split_val.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_start.append(-1)
        leaf_end.append(-1)
        return len(split_dim) - 1

    def build(idx: np.ndarray) -> int:
        node = new_node()
        if idx.shape[0] <= _LEAF_SIZE:
            leaf_start[node] = len(leaf_points)
            leaf_points.extend(idx.tolist())
            leaf_end[node] = len(leaf_points)
            return node
        sub = data[idx]
        var = sub.var(axis=0)
        top = np.argsort(var)[::-1][:_TOP_VAR_DIMS]
        top = top[var[top] > 0]
        if top.size == 0:
            # all points identical along every axis: make a leaf
            leaf_start[node] = len(leaf_points)
            leaf_points.extend(idx.tolist())
            leaf_end[node] = len(leaf_points)
            return node
        dim = int(rng.choice(top))
        vals = sub[:, dim]
        thresh = float(np.median(vals))
        mask = vals < thresh
        if not mask.any() or mask.all():
            mask = vals <= thresh
            if mask.all():
                half = idx.shape[0] // 2
                order = np.argsort(vals, kind="stable")
                mask = np.zeros(idx.shape[0], dtype=bool)
                mask[order[:half]] = True
        split_dim[node] = dim
        split_val[node] = thresh
        left[node] = build(idx[mask])
        right[node] = build(idx[~mask])
        return node

    import sys
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 10000 + 4 * int(math.log2(n + 1)) * 100))
    try:
        for _ in range(n_trees):
            roots.append(build(rng.permutation(n)))
    finally:
        sys.setrecursionlimit(limit)
    return _KdForest(
        np.asarray(split_dim, dtype=np.int64),
        np.asarray(split_val, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(leaf_start, dtype=np.int64),
        np.asarray(leaf_end, dtype=np.int64),
        np.asarray(leaf_points, dtype=np.int64),
        np.asarray(roots, dtype=np.int64),
    )


@dataclass
class _KMeansTree:
    centroids: np.ndarray
    child_start: np.ndarray
    child_end: np.ndarray
    leaf_start: np.ndarray
    leaf_end: np.ndarray
    leaf_points: np.ndarray


def _lloyd(points: np.ndarray, n_clusters: int, rng: np.random.Generator,
           iters: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Plain seeded Lloyd iterations; returns (centroids, assignment)."""
    n = points.shape[0]
    pick = rng.choice(n, size=n_clusters, replace=False)
    centers = points[pick].copy()
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d2 = (
            (points ** 2).sum(axis=1)[:, None]
            - 2.0 * points @ centers.T
            + (centers ** 2).sum(axis=1)[None, :]
        )
        new_assign = d2.argmin(axis=1)
        if np.array_equal(new_assign, assign) and _ > 0:
            break
        assign = new_assign
        for c in range(n_clusters):
            member = points[assign == c]
            if member.shape[0]:
                centers[c] = member.mean(axis=0)
    return centers, assign


def _build_kmeans_tree(data: np.ndarray, rng: np.random.Generator) -> _KMeansTree:
    centroids: list[np.ndarray] = []
    child_start: list[int] = []
    child_end: list[int] = []
    leaf_start: list[int] = []
    leaf_end: list[int] = []
    leaf_points: list[int] = []

    def new_node(center: np.ndarray) -> int:
        centroids.append(center)
        child_start.append(-1)
        child_end.append(-1)
        leaf_start.append(-1)
        leaf_end.append(-1)
        return len(centroids) - 1

    root = new_node(data.mean(axis=0))
    stack = [(root, np.arange(data.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.shape[0] <= max(_LEAF_SIZE, _BRANCHING):
            leaf_start[node] = len(leaf_points)
            leaf_points.extend(idx.tolist())
            leaf_end[node] = len(leaf_points)
            continue
        k = min(_BRANCHING, idx.shape[0])
        centers, assign = _lloyd(data[idx], k, rng)
        groups = [idx[assign == c] for c in range(k)]
        if sum(1 for g in groups if g.shape[0]) <= 1:
            leaf_start[node] = len(leaf_points)
            leaf_points.extend(idx.tolist())
            leaf_end[node] = len(leaf_points)
            continue
        child_start[node] = len(centroids)
        children = []
        for c, g in enumerate(groups):
            if g.shape[0] == 0:
                continue
            children.append((new_node(centers[c]), g))
        child_end[node] = len(centroids)
        stack.extend(children)
    return _KMeansTree(
        np.stack(centroids).astype(np.float32),
        np.asarray(child_start, dtype=np.int64),
        np.asarray(child_end, dtype=np.int64),
        np.asarray(leaf_start, dtype=np.int64),
        np.asarray(leaf_end, dtype=np.int64),
        np.asarray(leaf_points, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# public interface
# ---------------------------------------------------------------------------

def brute_force_knn(data: np.ndarray, queries: np.ndarray, k: int,
                    chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Exact k-NN by blocked exhaustive search. Returns (indices, sq-dists)."""
    n = data.shape[0]
    k = min(k, n)
    sq_data = (data ** 2).sum(axis=1)
    all_idx = np.empty((queries.shape[0], k), dtype=np.int64)
    all_d2 = np.empty((queries.shape[0], k), dtype=np.float64)
    for start in range(0, queries.shape[0], chunk):
        q = queries[start:start + chunk]
        d2 = (q ** 2).sum(axis=1)[:, None] - 2.0 * q @ data.T + sq_data[None, :]
        np.maximum(d2, 0.0, out=d2)
        part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        rows = np.arange(q.shape[0])[:, None]
        sub = d2[rows, part]
        order = np.argsort(sub, axis=1, kind="stable")
        all_idx[start:start + chunk] = part[rows, order]
        all_d2[start:start + chunk] = sub[rows, order]
    return all_idx, all_d2


@dataclass
class AnnIndex:
    """Budgeted approximate nearest-neighbor index over N feature rows."""

    data: np.ndarray
    m: int
    structure: str  # "kdforest" or "kmeans"
    _kd: Optional[_KdForest] = field(default=None, repr=False)
    _km: Optional[_KMeansTree] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def query(self, queries: np.ndarray, k: int = 10,
              budget: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
        """Top-k neighbors for each query row.

        Returns (indices, distances); distances are Euclidean (not squared),
        rows padded with -1/inf when fewer than k candidates were reached.
        Never examines more than ``budget`` (default: the index's m) points.
        """
        queries = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float32)
        if queries.shape[1] != self.data.shape[1]:
            raise ValueError(
                f"query dim {queries.shape[1]} != index dim {self.data.shape[1]}")
        b = self.m if budget is None else int(budget)
        b = max(1, min(b, self.n))
        if self.structure == "kdforest":
            t = self._kd
            idx, d2 = _kd_search_batch(
                queries, self.data, t.split_dim, t.split_val, t.left, t.right,
                t.leaf_start, t.leaf_end, t.leaf_points, t.roots, k, b)
        else:
            t = self._km
            idx, d2 = _km_search_batch(
                queries, self.data, t.centroids, t.child_start, t.child_end,
                t.leaf_start, t.leaf_end, t.leaf_points, k, b)
        return idx, np.sqrt(d2)


def _probe_recall(index: AnnIndex, rng: np.random.Generator, k: int = 10) -> float:
    n = index.n
    sample = rng.choice(n, size=min(max(10, n // 100), n), replace=False)
    queries = index.data[sample]
    true_idx, _ = brute_force_knn(index.data, queries, k)
    got_idx, _ = index.query(queries, k=k)
    hits = 0
    for row_true, row_got in zip(true_idx, got_idx):
        hits += len(set(row_true.tolist()) & set(row_got.tolist()))
    return hits / true_idx.size


def build_index(
    features: np.ndarray,
    m: Optional[int] = None,
    seed: int = 0,
    structure: str = "auto",
) -> AnnIndex:
    """Build the ANN index; ``structure`` is "kdforest", "kmeans", or "auto".

    "auto" builds both and keeps whichever recalls more true neighbors at
    the candidate budget on a small sample probe.
    """
    data = np.ascontiguousarray(np.atleast_2d(features), dtype=np.float32)
    n = data.shape[0]
    if n < 2:
        raise ValueError("need at least 2 features to index")
    if m is None:
        m = max(1, int(round(math.sqrt(n))))
    rng = np.random.default_rng(seed)
    candidates = []
    if structure in ("kdforest", "auto"):
        kd = AnnIndex(data, m, "kdforest", _kd=_build_kd_forest(data, _N_TREES, rng))
        candidates.append(kd)
    if structure in ("kmeans", "auto"):
        km = AnnIndex(data, m, "kmeans", _km=_build_kmeans_tree(data, rng))
        candidates.append(km)
    if not candidates:
        raise ValueError(f"unknown index structure {structure!r}")
    if len(candidates) == 1:
        return candidates[0]
    probe_rng = np.random.default_rng(seed + 1)
    recalls = [_probe_recall(c, np.random.default_rng(probe_rng.integers(2 ** 31)))
               for c in candidates]
    return candidates[int(np.argmax(recalls))]
