"""Meme popularity prediction from early dynamics, network, and content.

Each meme that survives pruning becomes one feature row assembled strictly
from data up to one day after its onset; targets are log-scale total volume
and lifespan. A kernelized support vector regressor with an inner
hyperparameter grid search predicts the targets, evaluated over several
random half/half splits with MSE, Pearson correlation, and Kendall's tau.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import stats
from sklearn.model_selection import GridSearchCV, KFold
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.svm import SVR

from .corpus import Corpus, SECONDS_PER_DAY
from .memedetect import MemeCluster
from .memegraph import build_author_graph, build_video_graph, centralities, influence_indices
from .topics import JointVocabulary, TopicModel, infer_theta

logger = logging.getLogger(__name__)

__all__ = [
    "MemeFeatureRow",
    "RegressionReport",
    "FEATURE_SETS",
    "assemble_features",
    "filter_features",
    "train_regressor",
    "evaluate_regressor",
    "kendall_tau",
]

MIN_MEME_VIDEOS = 4
AGGREGATES = ("max", "mean", "median", "std")

FEATURE_SETS: dict[str, tuple[str, ...]] = {
    "volume_d1": ("volume_d1",),
    "connectivity": ("connectivity",),
    "influence": ("influence",),
    "net_all": ("volume_d1", "connectivity", "influence"),
    "txt": ("txt",),
    "txt_vmeme": ("txt", "vmeme"),
    "net_txt_vmeme": ("volume_d1", "connectivity", "influence", "txt", "vmeme"),
}


@dataclass
class MemeFeatureRow:
    meme_id: int
    blocks: dict[str, np.ndarray]      # volume_d1, connectivity, influence, txt, vmeme, topic
    presence: dict[str, float]         # 1.0 when the block had real data
    log_volume: float
    log_lifespan_days: float

    def __post_init__(self):
        for name, vec in self.blocks.items():
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"non-finite values in block {name!r}")
        if not (math.isfinite(self.log_volume) and math.isfinite(self.log_lifespan_days)):
            raise ValueError("targets must be finite")

    def target(self, name: str) -> float:
        return self.log_volume if name == "volume" else self.log_lifespan_days


def _aggregate(values: Sequence[float]) -> np.ndarray:
    """(max, mean, median, std) of a non-empty sample."""
    arr = np.asarray(values, dtype=np.float64)
    return np.array([arr.max(), arr.mean(), float(np.median(arr)), arr.std()])


def assemble_features(
    clusters: Sequence[MemeCluster],
    corpus: Corpus,
    model: Optional[TopicModel] = None,
    vocab: Optional[JointVocabulary] = None,
    joint_bags: Optional[Sequence] = None,
    delta_days: float = 1.0,
    eta: float = 0.7654,
) -> list[MemeFeatureRow]:
    """One feature row per meme, computed from the corpus truncated at one
    day after the meme's onset (no information leaks past that point).

    Memes appearing in fewer than 4 videos are pruned.
    """
    bags_by_doc = {b.doc_id: b for b in joint_bags} if joint_bags is not None else {}
    n_text = vocab.n_text if vocab is not None else 0
    n_meme = len(vocab.meme_terms) if vocab is not None else 0
    vg = build_video_graph(clusters, corpus, eta=eta)
    ag = build_author_graph(vg, corpus)
    rows = []
    for c in clusters:
        videos = sorted(c.videos())
        if len(videos) < MIN_MEME_VIDEOS:
            continue
        times = {v: corpus.video(v).upload_time for v in videos}
        onset = min(times.values())
        last = max(times.values())
        t1 = onset + delta_days * SECONDS_PER_DAY
        window = [v for v in videos if times[v] <= t1]
        window_authors = sorted({corpus.author_of(v) for v in window})

        vc = centralities(vg, upto=t1)
        ac = centralities(ag, upto=t1)
        inf = influence_indices(clusters, corpus, upto=t1)

        author_video_metric: dict[str, dict[str, list[float]]] = {}
        for v, metrics in vc.items():
            a = corpus.author_of(v)
            for name, val in metrics.items():
                author_video_metric.setdefault(a, {}).setdefault(name, []).append(val)

        conn_parts = []
        for metric in ("productivity", "a_degree", "a_closeness", "a_betweenness",
                       "v_degree", "v_closeness", "v_betweenness"):
            vals = []
            for a in window_authors:
                if metric == "productivity":
                    vals.append(float(corpus.authors[a].productivity))
                elif metric.startswith("a_"):
                    vals.append(ac.get(a, {}).get(metric[2:], 0.0))
                else:
                    per_video = author_video_metric.get(a, {}).get(metric[2:], [])
                    vals.append(float(np.mean(per_video)) if per_video else 0.0)
            conn_parts.append(_aggregate(vals))
        connectivity = np.concatenate(conn_parts)

        infl_parts = []
        for table in (inf.chi_hat, inf.chi_bar, inf.author_in_degree, inf.author_out_degree):
            infl_parts.append(_aggregate([float(table.get(a, 0.0)) for a in window_authors]))
        influence = np.concatenate(infl_parts)

        txt = np.zeros(max(n_text, 1))
        vmeme = np.zeros(max(n_meme, 1))
        txt_present = 0.0
        vmeme_present = 0.0
        if vocab is not None and window:
            window_counts: dict[int, float] = {}
            for v in window:
                b = bags_by_doc.get(v)
                if b is None:
                    continue
                for i, cnt in b.counts.items():
                    window_counts[i] = window_counts.get(i, 0.0) + cnt
            for i, cnt in window_counts.items():
                if i < n_text:
                    txt[i] = cnt / len(window)
                else:
                    vmeme[i - n_text] = cnt / len(window)
            txt_present = 1.0 if any(i < n_text for i in window_counts) else 0.0
            vmeme_present = 1.0 if any(i >= n_text for i in window_counts) else 0.0
            topic = (infer_theta(model, {i: int(c) for i, c in window_counts.items()})
                     if model is not None else np.array([]))
        else:
            topic = np.array([])

        rows.append(MemeFeatureRow(
            meme_id=c.meme_id,
            blocks={
                "volume_d1": np.array([float(len(window))]),
                "connectivity": connectivity,
                "influence": influence,
                "txt": txt,
                "vmeme": vmeme,
                "topic": topic,
            },
            presence={"txt": txt_present, "vmeme": vmeme_present},
            log_volume=math.log10(len(videos)),
            log_lifespan_days=math.log10(1.0 + (last - onset) / SECONDS_PER_DAY),
        ))
    return rows


def _matrix(rows: Sequence[MemeFeatureRow], blocks: Sequence[str]) -> np.ndarray:
    parts = []
    for name in blocks:
        parts.append(np.stack([r.blocks[name] for r in rows]))
        if name in ("txt", "vmeme"):
            parts.append(np.array([[r.presence.get(name, 0.0)] for r in rows]))
    return np.concatenate(parts, axis=1)


def filter_features(
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_test: Optional[np.ndarray] = None,
    min_corr: float = 0.03,
) -> tuple[np.ndarray, Optional[np.ndarray], np.ndarray]:
    """Drop columns whose |Pearson correlation| with the training target is
    below ``min_corr``. Returns (train, test, kept-column indices)."""
    if x_train.shape[0] < 2:
        raise ValueError("need at least 2 rows to correlate")
    y = y_train - y_train.mean()
    xc = x_train - x_train.mean(axis=0)
    denom = np.sqrt((xc ** 2).sum(axis=0) * (y ** 2).sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(denom > 0, (xc * y[:, None]).sum(axis=0) / denom, 0.0)
    keep = np.where(np.abs(corr) >= min_corr)[0]
    if keep.size == 0:
        raise ValueError("correlation filter dropped every feature column")
    return x_train[:, keep], (x_test[:, keep] if x_test is not None else None), keep


_DEFAULT_GRID = [
    {"svr__kernel": ["linear"], "svr__C": [0.1, 1.0, 10.0]},
    {"svr__kernel": ["poly"], "svr__degree": [2, 3], "svr__C": [0.1, 1.0, 10.0]},
    {"svr__kernel": ["rbf"], "svr__gamma": ["scale", 0.01, 0.1, 1.0],
     "svr__C": [0.1, 1.0, 10.0]},
]


def train_regressor(
    x: np.ndarray,
    y: np.ndarray,
    grid: Optional[list[dict]] = None,
    folds: int = 3,
    epsilon: float = 0.05,
    seed: int = 0,
) -> Pipeline:
    """Epsilon-insensitive kernel regressor with standardized inputs,
    tuned by inner cross-validated grid search over C and kernel type."""
    if x.shape[0] < 20:
        raise ValueError("need at least 20 training rows")
    pipe = Pipeline([
        ("scale", StandardScaler()),
        ("svr", SVR(epsilon=epsilon)),
    ])
    search = GridSearchCV(
        pipe,
        grid if grid is not None else _DEFAULT_GRID,
        scoring="neg_mean_squared_error",
        cv=KFold(n_splits=folds, shuffle=True, random_state=seed),
        n_jobs=1,
        error_score="raise",
    )
    search.fit(x, y)
    return search.best_estimator_


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Kendall's tau-b; 0 by convention when either ranking is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.all(x == x[0]) or np.all(y == y[0]):
        return 0.0
    tau = stats.kendalltau(x, y).statistic
    return float(tau) if math.isfinite(tau) else 0.0


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    if np.all(x == x[0]) or np.all(y == y[0]):
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


@dataclass
class RegressionReport:
    target: str
    per_feature_set: dict[str, dict[str, tuple[float, float]]]  # metric -> (mean, std)
    split_seeds: tuple[int, ...]
    raw: dict[str, dict[str, list[float]]] = field(default_factory=dict)

    def mean(self, feature_set: str, metric: str) -> float:
        return self.per_feature_set[feature_set][metric][0]


def evaluate_regressor(
    rows: Sequence[MemeFeatureRow],
    target: str = "volume",
    feature_sets: Optional[Mapping[str, Sequence[str]]] = None,
    n_splits: int = 5,
    min_corr: float = 0.03,
    seed: int = 0,
    grid: Optional[list[dict]] = None,
) -> RegressionReport:
    """Mean +- std of mse / Pearson corr / Kendall tau over random half/half
    splits, per feature-set configuration."""
    configs = dict(feature_sets) if feature_sets is not None else dict(FEATURE_SETS)
    y_all = np.array([r.target(target) for r in rows])
    n = len(rows)
    raw: dict[str, dict[str, list[float]]] = {
        name: {"mse": [], "corr": [], "tau": []} for name in configs
    }
    split_seeds = tuple(seed + s for s in range(n_splits))
    for s in split_seeds:
        rng = np.random.default_rng(s)
        perm = rng.permutation(n)
        train_idx, test_idx = perm[: n // 2], perm[n // 2:]
        if test_idx.size < 5:
            raise ValueError("test split smaller than 5 rows")
        for name, blocks in configs.items():
            x = _matrix(rows, blocks)
            x_tr, x_te = x[train_idx], x[test_idx]
            y_tr, y_te = y_all[train_idx], y_all[test_idx]
            try:
                x_tr, x_te, _ = filter_features(x_tr, y_tr, x_te, min_corr=min_corr)
                model = train_regressor(x_tr, y_tr, grid=grid, seed=s)
            except ValueError as exc:
                logger.warning("skipping %s on split %d: %s", name, s, exc)
                continue
            pred = model.predict(x_te)
            raw[name]["mse"].append(float(np.mean((pred - y_te) ** 2)))
            raw[name]["corr"].append(_pearson(pred, y_te))
            raw[name]["tau"].append(kendall_tau(pred, y_te))
    summary = {
        name: {
            metric: (float(np.mean(vals)), float(np.std(vals))) if vals else (math.nan, math.nan)
            for metric, vals in metrics.items()
        }
        for name, metrics in raw.items()
    }
    return RegressionReport(target=target, per_feature_set=summary,
                            split_seeds=split_seeds, raw=raw)
