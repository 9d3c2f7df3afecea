"""Joint text+meme topic model and cross-modal annotation.

Videos are documents over a single vocabulary mixing normalized text terms
and meme terms. An LDA model fit by variational EM embeds documents in
topic space; cross-modal scores are kernel-weighted soft co-occurrence in
that space, with plain co-occurrence counting as the baseline.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.special import digamma, gammaln

from .corpus import BagOfWords, Corpus, TextVocabulary
from .memedetect import MemeCluster

logger = logging.getLogger(__name__)

__all__ = [
    "JointVocabulary",
    "TopicModel",
    "build_joint_vocabulary",
    "build_joint_bags",
    "fit_lda",
    "infer_theta",
    "corpus_theta",
    "cm2_score",
    "cooccur_score",
    "tag_likelihood",
    "annotate_crossval",
]

DEFAULT_K = 50
_BETA_SMOOTH = 1e-12
_ESTEP_TOL = 1e-5
_ESTEP_MAX = 100


@dataclass(frozen=True)
class JointVocabulary:
    """Text terms and meme terms in one indexed space.

    Text terms occupy [0, n_text); meme terms occupy [n_text, size).
    """

    text_terms: tuple[str, ...]
    meme_terms: tuple[str, ...]

    @property
    def n_text(self) -> int:
        return len(self.text_terms)

    @property
    def size(self) -> int:
        return len(self.text_terms) + len(self.meme_terms)

    @property
    def terms(self) -> tuple[str, ...]:
        return self.text_terms + self.meme_terms

    def modality(self, index: int) -> str:
        return "text" if index < self.n_text else "meme"

    def text_indices(self) -> np.ndarray:
        return np.arange(self.n_text)

    def meme_indices(self) -> np.ndarray:
        return np.arange(self.n_text, self.size)

    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.terms)}


def build_joint_vocabulary(
    text_vocab: TextVocabulary,
    clusters: Sequence[MemeCluster],
    meme_cap: int = 2000,
) -> JointVocabulary:
    """Meme terms are the top ``meme_cap`` memes by video frequency."""
    freq = sorted(
        ((len(c.videos()), c.meme_id) for c in clusters),
        key=lambda t: (-t[0], t[1]),
    )
    meme_terms = tuple(f"meme:{mid}" for _, mid in freq[:meme_cap])
    return JointVocabulary(tuple(text_vocab.terms), meme_terms)


def build_joint_bags(
    corpus: Corpus,
    vocab: JointVocabulary,
    clusters: Sequence[MemeCluster],
    text_bags: Sequence[BagOfWords],
) -> list[BagOfWords]:
    """Merge per-video text counts with meme occurrences (one count per
    member shot) into joint-vocabulary bags, sorted by video id."""
    index = vocab.index()
    meme_counts: dict[str, dict[int, int]] = {}
    for c in clusters:
        term = f"meme:{c.meme_id}"
        if term not in index:
            continue
        ti = index[term]
        for vid, _shot in c.members:
            per_doc = meme_counts.setdefault(vid, {})
            per_doc[ti] = per_doc.get(ti, 0) + 1
    text_by_doc = {b.doc_id: b for b in text_bags}
    out = []
    for vid in sorted(corpus.videos):
        counts: dict[int, int] = {}
        tb = text_by_doc.get(vid)
        if tb is not None:
            counts.update(tb.counts)  # text indices are shared
        counts.update({i: c for i, c in meme_counts.get(vid, {}).items()})
        out.append(BagOfWords(vid, counts))
    return out


@dataclass
class TopicModel:
    k: int
    alpha: float
    phi: np.ndarray        # K x V, row-stochastic word-given-topic matrix
    theta: np.ndarray      # M x K per-document topic estimates
    doc_ids: tuple[str, ...]
    vocab_size: int
    bound_trace: tuple[float, ...] = ()

    def __post_init__(self):
        rows = self.phi.sum(axis=1)
        if not np.allclose(rows, 1.0, atol=1e-8):
            raise ValueError("phi rows must sum to 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


def _doc_arrays(bags: Sequence[BagOfWords], vocab_size: int):
    docs = []
    for b in bags:
        ids = np.fromiter(b.counts.keys(), dtype=np.int64, count=len(b.counts))
        cts = np.fromiter(b.counts.values(), dtype=np.float64, count=len(b.counts))
        if ids.size and ids.max() >= vocab_size:
            raise ValueError("bag-of-words index outside vocabulary")
        docs.append((b.doc_id, ids, cts))
    return docs


def _estep_doc(ids, cts, log_phi, alpha, k):
    """Variational E-step for one document: returns (gamma, phi_n, ss)."""
    gamma = np.full(k, alpha + cts.sum() / k)
    lp = log_phi[:, ids]  # K x n
    for _ in range(_ESTEP_MAX):
        elog = digamma(gamma) - digamma(gamma.sum())
        log_pn = lp + elog[:, None]
        log_pn -= log_pn.max(axis=0)
        pn = np.exp(log_pn)
        pn /= pn.sum(axis=0)
        new_gamma = alpha + pn @ cts
        if np.abs(new_gamma - gamma).sum() < _ESTEP_TOL * k:
            gamma = new_gamma
            break
        gamma = new_gamma
    elog = digamma(gamma) - digamma(gamma.sum())
    log_pn = lp + elog[:, None]
    log_pn -= log_pn.max(axis=0)
    pn = np.exp(log_pn)
    pn /= pn.sum(axis=0)
    return gamma, pn


def _doc_bound(ids, cts, log_phi, alpha, gamma, pn, k):
    elog = digamma(gamma) - digamma(gamma.sum())
    bound = gammaln(k * alpha) - k * gammaln(alpha) + (alpha - 1.0) * elog.sum()
    bound += float((pn * (elog[:, None] + log_phi[:, ids]) @ cts).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        log_pn = np.where(pn > 0, np.log(np.where(pn > 0, pn, 1.0)), 0.0)
    bound -= float((pn * log_pn @ cts).sum())
    bound -= float(gammaln(gamma.sum()) - gammaln(gamma).sum()
                   + ((gamma - 1.0) * elog).sum())
    return bound


def fit_lda(
    bags: Sequence[BagOfWords],
    vocab_size: int,
    k: int = DEFAULT_K,
    alpha: Optional[float] = None,
    tol: float = 1e-4,
    max_iters: int = 100,
    seed: int = 0,
) -> TopicModel:
    """Fit LDA by variational EM; the variational bound is non-decreasing
    across iterations (asserted to 1e-6 relative slack).

    Documents with no in-vocabulary words are skipped with a warning.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    docs = [(d, i, c) for d, i, c in _doc_arrays(bags, vocab_size) if i.size > 0]
    skipped = len(bags) - len(docs)
    if skipped:
        logger.warning("skipping %d documents with no in-vocabulary words", skipped)
    if not docs:
        raise ValueError("no usable documents")
    if alpha is None:
        alpha = 50.0 / k
    rng = np.random.default_rng(seed)
    unigram = np.zeros(vocab_size)
    for _, ids, cts in docs:
        unigram[ids] += cts
    unigram = (unigram + 1.0) / (unigram.sum() + vocab_size)
    phi = unigram[None, :] * (1.0 + 0.5 * rng.random((k, vocab_size)))
    phi /= phi.sum(axis=1, keepdims=True)
    prev_bound = -np.inf
    trace = []
    gammas = np.empty((len(docs), k))
    for iteration in range(max_iters):
        log_phi = np.log(phi)
        ss = np.zeros((k, vocab_size))
        bound = 0.0
        for di, (_, ids, cts) in enumerate(docs):
            gamma, pn = _estep_doc(ids, cts, log_phi, alpha, k)
            gammas[di] = gamma
            bound += _doc_bound(ids, cts, log_phi, alpha, gamma, pn, k)
            np.add.at(ss.T, ids, (pn * cts).T)
        trace.append(bound)
        assert bound >= prev_bound - 1e-6 * max(1.0, abs(prev_bound)), (
            f"variational bound decreased at iteration {iteration}")
        if prev_bound > -np.inf and abs(bound - prev_bound) < tol * abs(prev_bound):
            prev_bound = bound
            break
        prev_bound = bound
        phi = ss + _BETA_SMOOTH
        phi /= phi.sum(axis=1, keepdims=True)
    theta = gammas / gammas.sum(axis=1, keepdims=True)
    return TopicModel(
        k=k, alpha=float(alpha), phi=phi, theta=theta,
        doc_ids=tuple(d for d, _, _ in docs), vocab_size=vocab_size,
        bound_trace=tuple(trace),
    )


def infer_theta(model: TopicModel, counts: Mapping[int, int]) -> np.ndarray:
    """Topic posterior estimate for a word multiset under a fitted model.

    Out-of-vocabulary indices are dropped; with nothing left, the prior
    (uniform for symmetric alpha) is returned with a warning.
    """
    items = [(i, c) for i, c in counts.items() if 0 <= i < model.vocab_size]
    if not items:
        logger.warning("no in-vocabulary words; returning the prior")
        return np.full(model.k, 1.0 / model.k)
    ids = np.array([i for i, _ in items], dtype=np.int64)
    cts = np.array([c for _, c in items], dtype=np.float64)
    gamma, _ = _estep_doc(ids, cts, np.log(model.phi), model.alpha, model.k)
    return gamma / gamma.sum()


def corpus_theta(
    model: TopicModel,
    bags: Sequence[BagOfWords],
    vocab: JointVocabulary,
    modality: str = "meme",
) -> np.ndarray:
    """Per-document topic estimates using only one modality's words."""
    lo, hi = (0, vocab.n_text) if modality == "text" else (vocab.n_text, vocab.size)
    thetas = []
    for b in bags:
        counts = {i: c for i, c in b.counts.items() if lo <= i < hi}
        thetas.append(infer_theta(model, counts))
    return np.stack(thetas)


def median_kernel_bandwidth(theta: np.ndarray, seed: int = 0,
                            max_rows: int = 2000) -> float:
    """Median pairwise squared distance among training topic vectors."""
    t = theta
    if t.shape[0] > max_rows:
        rng = np.random.default_rng(seed)
        t = t[rng.choice(t.shape[0], size=max_rows, replace=False)]
    d2 = ((t[:, None, :] - t[None, :, :]) ** 2).sum(axis=-1)
    upper = d2[np.triu_indices(t.shape[0], k=1)]
    med = float(np.median(upper)) if upper.size else 1.0
    return med if med > 0 else 1.0


def _candidate_counts(bags: Sequence[BagOfWords], candidates: np.ndarray,
                      vocab_size: int) -> np.ndarray:
    """M x C dense matrix of candidate-term counts per document."""
    pos = -np.ones(vocab_size, dtype=np.int64)
    pos[candidates] = np.arange(candidates.size)
    out = np.zeros((len(bags), candidates.size))
    for m, b in enumerate(bags):
        for i, c in b.counts.items():
            p = pos[i]
            if p >= 0:
                out[m, p] = c
    return out


def cm2_score(
    model: TopicModel,
    theta_corpus: np.ndarray,
    bags: Sequence[BagOfWords],
    vocab: JointVocabulary,
    query_counts: Mapping[int, int],
    candidate_modality: str = "text",
    sigma_theta: Optional[float] = None,
) -> list[tuple[int, float]]:
    """Kernel-weighted soft co-occurrence scores over the candidate modality.

    score(w_r) = sum_m count(w_r in d_m) * exp(-|theta_q - theta_m|^2 / sigma),
    sorted descending with ties broken by term index.
    """
    if not query_counts:
        raise ValueError("empty query")
    candidates = (vocab.text_indices() if candidate_modality == "text"
                  else vocab.meme_indices())
    if candidates.size == 0:
        raise ValueError(f"no candidate terms in modality {candidate_modality!r}")
    if sigma_theta is None:
        sigma_theta = median_kernel_bandwidth(theta_corpus)
    if sigma_theta <= 0:
        raise ValueError("sigma_theta must be positive")
    theta_q = infer_theta(model, dict(query_counts))
    d2 = ((theta_corpus - theta_q[None, :]) ** 2).sum(axis=1)
    weights = np.exp(-d2 / sigma_theta)
    counts = _candidate_counts(bags, candidates, vocab.size)
    scores = weights @ counts
    order = sorted(range(candidates.size), key=lambda i: (-scores[i], candidates[i]))
    return [(int(candidates[i]), float(scores[i])) for i in order]


def cooccur_score(
    bags: Sequence[BagOfWords],
    vocab: JointVocabulary,
    query_counts: Mapping[int, int],
    candidate_modality: str = "text",
) -> list[tuple[int, float]]:
    """Co-occurrence baseline: candidate counts summed over documents that
    contain every query term."""
    candidates = (vocab.text_indices() if candidate_modality == "text"
                  else vocab.meme_indices())
    query = set(query_counts)
    counts = _candidate_counts(bags, candidates, vocab.size)
    mask = np.array([query <= set(b.counts) for b in bags], dtype=np.float64)
    scores = mask @ counts
    order = sorted(range(candidates.size), key=lambda i: (-scores[i], candidates[i]))
    return [(int(candidates[i]), float(scores[i])) for i in order]


def tag_likelihood(
    scores: Sequence[tuple[int, float]],
    heldout: Iterable[int],
    smoothing: float = 1e-9,
) -> tuple[float, int]:
    """Mean log-probability of held-out tags under the normalized scores.

    Returns (average log-probability, number of skipped out-of-candidate
    tags). Natural log.
    """
    idx = {i: s for i, s in scores}
    total = sum(idx.values()) + smoothing * len(idx)
    if total <= 0:
        raise ValueError("scores are not normalizable")
    logps = []
    skipped = 0
    for tag in heldout:
        if tag not in idx:
            skipped += 1
            continue
        logps.append(math.log((idx[tag] + smoothing) / total))
    if not logps:
        return float("nan"), skipped
    return float(np.mean(logps)), skipped


def annotate_crossval(
    bags: Sequence[BagOfWords],
    vocab: JointVocabulary,
    k: int = DEFAULT_K,
    folds: int = 5,
    seed: int = 0,
    alpha: Optional[float] = None,
    max_iters: int = 60,
) -> dict[str, list[float]]:
    """Five-fold protocol comparing cross-modal scores against the
    co-occurrence baseline on held-out text tags given each video's memes."""
    eligible = [
        b for b in bags
        if any(i >= vocab.n_text for i in b.counts) and any(i < vocab.n_text for i in b.counts)
    ]
    if len(eligible) < folds:
        raise ValueError("not enough documents with both modalities")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(eligible))
    results: dict[str, list[float]] = {"cm2": [], "cooccur": []}
    for fold in range(folds):
        test_ids = set(order[fold::folds].tolist())
        train = [eligible[i] for i in range(len(eligible)) if i not in test_ids]
        test = [eligible[i] for i in sorted(test_ids)]
        model = fit_lda(train, vocab.size, k=k, alpha=alpha, seed=seed + fold,
                        max_iters=max_iters)
        theta_train = corpus_theta(model, train, vocab, modality="meme")
        sigma = median_kernel_bandwidth(theta_train, seed=seed)
        cm2_lls, co_lls = [], []
        for b in test:
            query = {i: c for i, c in b.counts.items() if i >= vocab.n_text}
            tags = [i for i in b.counts if i < vocab.n_text]
            cm2 = cm2_score(model, theta_train, train, vocab, query,
                            candidate_modality="text", sigma_theta=sigma)
            co = cooccur_score(train, vocab, query, candidate_modality="text")
            ll_cm2, _ = tag_likelihood(cm2, tags)
            ll_co, _ = tag_likelihood(co, tags)
            if not (math.isnan(ll_cm2) or math.isnan(ll_co)):
                cm2_lls.append(ll_cm2)
                co_lls.append(ll_co)
        results["cm2"].append(float(np.mean(cm2_lls)))
        results["cooccur"].append(float(np.mean(co_lls)))
    return results
