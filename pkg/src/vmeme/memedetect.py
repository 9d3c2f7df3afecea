"""Near-duplicate matching and meme cluster construction.

Each keyframe queries the ANN index for up to k candidates; candidates
within the query-adaptive threshold T_q become matched pairs, and the pairs
are closed transitively with union-find into meme clusters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .ann import AnnIndex
from .correlogram import CollectionMaxFeature, CorrelogramFeature
from .corpus import Corpus

__all__ = [
    "FrameRefT",
    "MatchPair",
    "MemeCluster",
    "UnionFind",
    "query_threshold",
    "match_all",
    "close_clusters",
    "filter_clusters",
    "evaluate",
    "sweep_tau",
]

FrameRefT = tuple[str, int]  # (video_id, shot_index)

DEFAULT_TAU = 11.5  # shipped high-recall operating point
DEFAULT_KNN = 50


@dataclass(frozen=True)
class MatchPair:
    """Unordered near-duplicate pair, stored canonically (a < b)."""

    frame_a: FrameRefT
    frame_b: FrameRefT
    distance: float

    def __post_init__(self):
        if self.distance < 0:
            raise ValueError("distance must be non-negative")
        if self.frame_a > self.frame_b:
            a, b = self.frame_a, self.frame_b
            object.__setattr__(self, "frame_a", b)
            object.__setattr__(self, "frame_b", a)

    @property
    def key(self) -> tuple[FrameRefT, FrameRefT]:
        return (self.frame_a, self.frame_b)


@dataclass(frozen=True)
class MemeCluster:
    meme_id: int
    members: frozenset[FrameRefT]

    def videos(self) -> frozenset[str]:
        return frozenset(v for v, _ in self.members)

    def authors(self, corpus: Corpus) -> frozenset[str]:
        return frozenset(corpus.author_of(v) for v in self.videos())

    def onset_time(self, corpus: Corpus) -> float:
        return min(corpus.video(v).upload_time for v in self.videos())

    def last_time(self, corpus: Corpus) -> float:
        return max(corpus.video(v).upload_time for v in self.videos())


class UnionFind:
    """Disjoint sets with union by rank and path compression."""

    def __init__(self):
        self.parent: dict[Hashable, Hashable] = {}
        self.rank: dict[Hashable, int] = {}

    def find(self, x: Hashable) -> Hashable:
        parent = self.parent
        p = parent.get(x)
        if p is None:
            parent[x] = x
            self.rank[x] = 0
            return x
        # path halving: point every visited node at its grandparent
        while p != x:
            gp = parent[p]
            parent[x] = gp
            x, p = p, gp
        return x

    def union(self, a: Hashable, b: Hashable) -> None:
        # find() inlined: union is the hot path over millions of match pairs
        parent = self.parent
        rank = self.rank
        ra = parent.get(a)
        if ra is None:
            parent[a] = a
            rank[a] = 0
            ra = a
        else:
            while ra != a:
                gp = parent[ra]
                parent[a] = gp
                a, ra = ra, gp
        rb = parent.get(b)
        if rb is None:
            parent[b] = b
            rank[b] = 0
            rb = b
        else:
            while rb != b:
                gp = parent[rb]
                parent[b] = gp
                b, rb = rb, gp
        if ra == rb:
            return
        if rank[ra] < rank[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        if rank[ra] == rank[rb]:
            rank[ra] += 1

    def components(self) -> list[set[Hashable]]:
        groups: dict[Hashable, set[Hashable]] = {}
        for x in self.parent:
            groups.setdefault(self.find(x), set()).add(x)
        return list(groups.values())


def query_threshold(
    f_q: CorrelogramFeature | float,
    f_max: CollectionMaxFeature | float,
    tau: float = DEFAULT_TAU,
) -> float:
    """Query-adaptive match threshold T_q = tau * |f_q| / |f_max|."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    q_norm = f_q if isinstance(f_q, (int, float)) else f_q.l2_norm
    max_norm = f_max if isinstance(f_max, (int, float)) else f_max.l2_norm
    if not (math.isfinite(q_norm) and math.isfinite(max_norm)):
        raise ValueError("feature norms must be finite")
    if max_norm == 0:
        raise ValueError("collection max feature has zero norm")
    return tau * q_norm / max_norm


def match_all(
    index: AnnIndex,
    features: Sequence[CorrelogramFeature],
    f_max: CollectionMaxFeature,
    tau: float = DEFAULT_TAU,
    k: int = DEFAULT_KNN,
    budget: Optional[int] = None,
) -> list[MatchPair]:
    """Query every frame, keep candidates within T_q, canonicalize pairs."""
    if index.n != len(features):
        raise ValueError("index was not built over the given features")
    queries = np.stack([f.values for f in features])
    idx, dist = index.query(queries, k=min(k + 1, index.n), budget=budget)
    refs = [f.frame_ref for f in features]
    max_norm = f_max.l2_norm
    pairs: dict[tuple[FrameRefT, FrameRefT], float] = {}
    for qi in range(len(features)):
        t_q = query_threshold(features[qi], max_norm, tau)
        for j, d in zip(idx[qi], dist[qi]):
            if j < 0 or j == qi or d > t_q:
                continue
            a, b = refs[qi], refs[int(j)]
            if a == b:
                continue
            key = (a, b) if a < b else (b, a)
            prev = pairs.get(key)
            if prev is None or d < prev:
                pairs[key] = float(d)
    return [MatchPair(a, b, d) for (a, b), d in sorted(pairs.items())]


def close_clusters(pairs: Iterable[MatchPair]) -> list[MemeCluster]:
    """Transitive closure of matched pairs into meme clusters."""
    uf = UnionFind()
    for p in pairs:
        uf.union(p.frame_a, p.frame_b)
    comps = sorted(uf.components(), key=lambda c: min(c))
    return [MemeCluster(i, frozenset(c)) for i, c in enumerate(comps)]


def filter_clusters(clusters: Iterable[MemeCluster], corpus: Corpus) -> list[MemeCluster]:
    """Keep clusters spanning >= 2 distinct videos and >= 2 distinct authors."""
    kept = []
    for c in clusters:
        for ref in c.members:
            corpus.frame_video(ref)
        if len(c.videos()) >= 2 and len(c.authors(corpus)) >= 2:
            kept.append(c)
    return [MemeCluster(i, c.members) for i, c in enumerate(kept)]


def _pair_set(clusters_or_pairs) -> set[tuple[FrameRefT, FrameRefT]]:
    first = None
    items = list(clusters_or_pairs)
    if items and isinstance(items[0], MemeCluster):
        out: set[tuple[FrameRefT, FrameRefT]] = set()
        for c in items:
            members = sorted(c.members)
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    out.add((members[i], members[j]))
        return out
    return {p.key for p in items}


def evaluate(
    detected,
    labels: Mapping[tuple[FrameRefT, FrameRefT], bool],
) -> dict[str, float]:
    """Precision/recall/F1 of detected pairs (or cluster partitions) against
    labeled duplicate / non-duplicate pairs.

    A detector declaring nothing gets precision 1 by convention. Recall over
    zero labeled positives is undefined and raises.
    """
    positives = {tuple(sorted(k)) for k, v in labels.items() if v}
    negatives = {tuple(sorted(k)) for k, v in labels.items() if not v}
    if not positives:
        raise ValueError("labels contain no positive pairs; recall undefined")
    detected_pairs = _pair_set(detected)
    tp = len(detected_pairs & positives)
    fp = len(detected_pairs & negatives)
    fn = len(positives - detected_pairs)
    precision = tp / (tp + fp) if (tp + fp) else 1.0
    recall = tp / (tp + fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def sweep_tau(
    index: AnnIndex,
    features: Sequence[CorrelogramFeature],
    f_max: CollectionMaxFeature,
    labels: Mapping[tuple[FrameRefT, FrameRefT], bool],
    taus: Sequence[float],
    k: int = DEFAULT_KNN,
    budget: Optional[int] = None,
) -> list[dict[str, float]]:
    """Operating curve: evaluate detection P/R/F1 over a grid of tau values."""
    out = []
    for tau in taus:
        pairs = match_all(index, features, f_max, tau=tau, k=k, budget=budget)
        row = evaluate(pairs, labels)
        row["tau"] = float(tau)
        out.append(row)
    return out
