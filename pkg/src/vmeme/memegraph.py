"""Diffusion graphs over memes: video graph, author graph, influence indices,
centralities, originality, and distributional statistics.

The video graph is time-directed (edges point from earlier to later posts of
a shared meme) and therefore a DAG; the author graph is undirected with
weights accumulated over all cross-author video edges.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import Corpus, SECONDS_PER_DAY
from .memedetect import MemeCluster

__all__ = [
    "DEFAULT_ETA",
    "VideoEdge",
    "VideoGraph",
    "AuthorGraph",
    "InfluenceResult",
    "build_video_graph",
    "build_author_graph",
    "influence_indices",
    "centralities",
    "originality_index",
    "gini",
    "zipf_fit",
]

DEFAULT_ETA = 0.7654       # power-law memory exponent for edge decay
MIN_DT_DAYS = 1.0 / 24.0   # clamp so near-simultaneous posts keep finite decay
ORIGINATOR_WINDOW_S = 3600.0


@dataclass(frozen=True)
class VideoEdge:
    src: str
    dst: str
    nu: int            # shared meme count
    dt_days: float     # clamped, > 0
    omega_star: float  # nu
    omega_prime: float # nu * dt^-eta


@dataclass
class VideoGraph:
    nodes: list[str]
    node_time: dict[str, float]
    edges: dict[tuple[str, str], VideoEdge]
    eta: float = DEFAULT_ETA

    def adjacency(self, upto: float = math.inf) -> dict[str, set[str]]:
        """Directed successor sets restricted to nodes existing before upto."""
        keep = {v for v in self.nodes if self.node_time[v] <= upto}
        adj: dict[str, set[str]] = {v: set() for v in keep}
        for (a, b) in self.edges:
            if a in keep and b in keep:
                adj[a].add(b)
        return adj


@dataclass
class AuthorGraph:
    nodes: list[str]
    node_time: dict[str, float]
    weights: dict[tuple[str, str], float]  # canonical (a < b), theta_rs

    def adjacency(self, upto: float = math.inf) -> dict[str, set[str]]:
        keep = {a for a in self.nodes if self.node_time[a] <= upto}
        adj: dict[str, set[str]] = {a: set() for a in keep}
        for (a, b) in self.weights:
            if a in keep and b in keep:
                adj[a].add(b)
                adj[b].add(a)
        return adj


def build_video_graph(
    clusters: Sequence[MemeCluster],
    corpus: Corpus,
    eta: float = DEFAULT_ETA,
) -> VideoGraph:
    """Directed edges between videos sharing memes, earlier to later.

    Videos posting a shared meme at the identical timestamp get no edge
    (strict temporal precedence).
    """
    shared: dict[tuple[str, str], int] = {}
    participating: set[str] = set()
    for c in clusters:
        vids = sorted(c.videos())
        participating.update(vids)
        for i in range(len(vids)):
            for j in range(i + 1, len(vids)):
                key = (vids[i], vids[j])
                shared[key] = shared.get(key, 0) + 1
    nodes = sorted(participating)
    node_time = {v: corpus.video(v).upload_time for v in nodes}
    edges: dict[tuple[str, str], VideoEdge] = {}
    for (a, b), nu in sorted(shared.items()):
        ta, tb = node_time[a], node_time[b]
        if ta == tb:
            continue
        src, dst = (a, b) if ta < tb else (b, a)
        dt_days = max(abs(tb - ta) / SECONDS_PER_DAY, MIN_DT_DAYS)
        edges[(src, dst)] = VideoEdge(
            src=src, dst=dst, nu=nu, dt_days=dt_days,
            omega_star=float(nu), omega_prime=nu * dt_days ** (-eta),
        )
    return VideoGraph(nodes, node_time, edges, eta)


def build_author_graph(
    vg: VideoGraph,
    corpus: Corpus,
    weight_variant: str = "omega_star",
) -> AuthorGraph:
    """Undirected author graph; theta_rs sums the video-edge weights between
    the two authors' videos in either direction."""
    if weight_variant not in ("omega_star", "omega_prime"):
        raise ValueError(f"unknown weight variant {weight_variant!r}")
    weights: dict[tuple[str, str], float] = {}
    node_time: dict[str, float] = {}
    nodes: set[str] = set()
    for v in vg.nodes:
        a = corpus.author_of(v)
        nodes.add(a)
        t = vg.node_time[v]
        node_time[a] = min(node_time.get(a, math.inf), t)
    for e in vg.edges.values():
        ar, as_ = corpus.author_of(e.src), corpus.author_of(e.dst)
        if ar == as_:
            continue
        key = (ar, as_) if ar < as_ else (as_, ar)
        w = e.omega_star if weight_variant == "omega_star" else e.omega_prime
        weights[key] = weights.get(key, 0.0) + w
    return AuthorGraph(sorted(nodes), node_time, weights)


@dataclass
class InfluenceResult:
    zeta_in: dict[tuple[str, int], int]   # (video_id, meme_id) -> count
    zeta_out: dict[tuple[str, int], int]
    chi_video: dict[str, float]
    chi_hat: dict[str, float]             # per-author total influence
    chi_bar: dict[str, float]             # per-author average influence
    author_in_degree: dict[str, int]
    author_out_degree: dict[str, int]


def influence_indices(
    clusters: Sequence[MemeCluster],
    corpus: Corpus,
    upto: float = math.inf,
) -> InfluenceResult:
    """Per-meme precedence degrees (unit weights) and smoothed influence.

    zeta_in / zeta_out count strictly earlier / later videos in each meme
    subgraph; equal timestamps contribute to neither side. chi_m sums
    zeta_out / (1 + zeta_in) over memes; author indices aggregate chi_m.
    """
    zeta_in: dict[tuple[str, int], int] = {}
    zeta_out: dict[tuple[str, int], int] = {}
    chi_video: dict[str, float] = {}
    for c in clusters:
        vids = [v for v in sorted(c.videos()) if corpus.video(v).upload_time <= upto]
        if len(vids) < 2:
            continue
        times = [corpus.video(v).upload_time for v in vids]
        for i, v in enumerate(vids):
            zin = sum(1 for t in times if t < times[i])
            zout = sum(1 for t in times if t > times[i])
            zeta_in[(v, c.meme_id)] = zin
            zeta_out[(v, c.meme_id)] = zout
            chi_video[v] = chi_video.get(v, 0.0) + zout / (1.0 + zin)
    chi_hat: dict[str, float] = {}
    n_videos: dict[str, int] = {}
    a_in: dict[str, int] = {}
    a_out: dict[str, int] = {}
    for v, chi in chi_video.items():
        a = corpus.author_of(v)
        chi_hat[a] = chi_hat.get(a, 0.0) + chi
    for (v, _meme), zin in zeta_in.items():
        a = corpus.author_of(v)
        a_in[a] = a_in.get(a, 0) + zin
    for (v, _meme), zout in zeta_out.items():
        a = corpus.author_of(v)
        a_out[a] = a_out.get(a, 0) + zout
    for a in chi_hat:
        n_videos[a] = corpus.authors[a].productivity
    chi_bar = {a: chi_hat[a] / n_videos[a] for a in chi_hat}
    return InfluenceResult(zeta_in, zeta_out, chi_video, chi_hat, chi_bar, a_in, a_out)


def _bfs_lengths(adj: Mapping[str, set[str]], source: str) -> dict[str, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def _brandes_betweenness(adj: Mapping[str, set[str]], directed: bool) -> dict[str, float]:
    nodes = sorted(adj)
    bc = {v: 0.0 for v in nodes}
    for s in nodes:
        stack: list[str] = []
        pred: dict[str, list[str]] = {v: [] for v in nodes}
        sigma = {v: 0.0 for v in nodes}
        sigma[s] = 1.0
        dist = {v: -1 for v in nodes}
        dist[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            stack.append(u)
            for w in sorted(adj[u]):
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    queue.append(w)
                if dist[w] == dist[u] + 1:
                    sigma[w] += sigma[u]
                    pred[w].append(u)
        delta = {v: 0.0 for v in nodes}
        while stack:
            w = stack.pop()
            for u in pred[w]:
                delta[u] += sigma[u] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
        del pred
    n = len(nodes)
    if n > 2:
        if directed:
            scale = 1.0 / ((n - 1) * (n - 2))
        else:
            # undirected: each pair counted from both endpoints
            scale = 1.0 / ((n - 1) * (n - 2))
    else:
        scale = 0.0
    return {v: bc[v] * scale for v in nodes}


def centralities(
    graph: VideoGraph | AuthorGraph,
    upto: float = math.inf,
) -> dict[str, dict[str, float]]:
    """Per-node degree, closeness, and betweenness on the unweighted graph
    restricted to nodes existing before ``upto``.

    degree: distinct neighbors / (n - 1). closeness: reachable nodes divided
    by the sum of shortest-path lengths to them (0 for isolates).
    betweenness: fraction of all-pairs shortest paths through the node.
    """
    directed = isinstance(graph, VideoGraph)
    adj = graph.adjacency(upto)
    nodes = sorted(adj)
    n = len(nodes)
    out: dict[str, dict[str, float]] = {}
    if n == 0:
        return out
    # undirected neighbor sets for the degree measure
    nbrs: dict[str, set[str]] = {v: set(adj[v]) for v in nodes}
    if directed:
        for u in nodes:
            for w in adj[u]:
                nbrs[w].add(u)
    betw = _brandes_betweenness(adj, directed)
    for v in nodes:
        degree = len(nbrs[v]) / (n - 1) if n > 1 else 0.0
        lengths = _bfs_lengths(adj, v)
        reach = len(lengths) - 1
        total = sum(lengths.values())
        closeness = reach / total if total > 0 else 0.0
        out[v] = {"degree": degree, "closeness": closeness, "betweenness": betw[v]}
    return out


def originality_index(
    clusters: Sequence[MemeCluster],
    corpus: Corpus,
) -> dict[str, float]:
    """Fraction of an author's memes they posted first.

    Clusters whose two earliest postings fall within one hour (no clear
    originator) are excluded from the tallies; authors with no eligible
    cluster are absent from the output.
    """
    originated: dict[str, int] = {}
    total: dict[str, int] = {}
    for c in clusters:
        vids = sorted(c.videos())
        if len(vids) < 2:
            continue
        times = sorted((corpus.video(v).upload_time, v) for v in vids)
        if times[1][0] - times[0][0] < ORIGINATOR_WINDOW_S:
            continue
        first_author = corpus.author_of(times[0][1])
        authors = {corpus.author_of(v) for v in vids}
        for a in authors:
            total[a] = total.get(a, 0) + 1
        originated[first_author] = originated.get(first_author, 0) + 1
    return {a: originated.get(a, 0) / total[a] for a in sorted(total)}


def gini(values: Iterable[float]) -> float:
    """Mean-absolute-difference Gini coefficient of a non-negative sample."""
    x = np.asarray(list(values), dtype=np.float64)
    if x.size == 0:
        raise ValueError("gini of an empty sample")
    if (x < 0).any():
        raise ValueError("gini requires non-negative values")
    total = x.sum()
    if total == 0:
        raise ValueError("gini undefined for an all-zero sample")
    # O(n log n) equivalent of sum_i sum_j |x_i - x_j| / (2 n^2 mean)
    xs = np.sort(x)
    n = xs.size
    cum = np.cumsum(xs)
    mad_sum = 2.0 * float(((np.arange(1, n + 1) * xs) - cum).sum())
    return mad_sum / (2.0 * n * total)


def zipf_fit(frequencies: Sequence[float]) -> float:
    """Least-squares power-law exponent of log frequency vs log rank.

    Frequencies must be in descending order over >= 10 positive ranks; the
    exponent is reported positive.
    """
    f = np.asarray([c for c in frequencies if c > 0], dtype=np.float64)
    if f.size < 10:
        raise ValueError("need at least 10 ranks with positive counts")
    ranks = np.arange(1, f.size + 1, dtype=np.float64)
    slope = np.polyfit(np.log(ranks), np.log(f), 1)[0]
    return float(-slope)
