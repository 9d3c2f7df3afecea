import math

import numpy as np
import pytest

from vmeme import topics as tp
from vmeme.corpus import BagOfWords, TextVocabulary
from vmeme.memedetect import MemeCluster

from conftest import make_corpus


def _vocab(n_text=4, n_meme=3):
    return tp.JointVocabulary(
        tuple(f"w{i}" for i in range(n_text)),
        tuple(f"meme:{i}" for i in range(n_meme)),
    )


def test_joint_vocabulary_layout():
    v = _vocab()
    assert v.size == 7
    assert v.n_text == 4
    assert v.modality(0) == "text" and v.modality(4) == "meme"
    assert list(v.meme_indices()) == [4, 5, 6]
    assert v.index()["meme:2"] == 6


def test_build_joint_vocabulary_ranks_by_video_frequency():
    clusters = [MemeCluster(7, frozenset({("a", 0), ("b", 0)})),
                MemeCluster(3, frozenset({("a", 0), ("b", 0), ("c", 0)})),
                MemeCluster(5, frozenset({("a", 0), ("d", 0)}))]
    tv = TextVocabulary(("w0",), (1.0,))
    jv = tp.build_joint_vocabulary(tv, clusters, meme_cap=2)
    assert jv.meme_terms == ("meme:3", "meme:5")  # freq desc, id asc on ties


def test_build_joint_bags_counts_member_shots():
    corpus = make_corpus([("a", "u1", 0, 2), ("b", "u2", 10)])
    clusters = [MemeCluster(0, frozenset({("a", 0), ("a", 1), ("b", 0)}))]
    tv = TextVocabulary(("title",), (1.0,))
    jv = tp.build_joint_vocabulary(tv, clusters)
    text_bags = [BagOfWords("a", {0: 1}), BagOfWords("b", {0: 2})]
    bags = tp.build_joint_bags(corpus, jv, clusters, text_bags)
    by_id = {b.doc_id: b.counts for b in bags}
    meme_idx = jv.index()["meme:0"]
    assert by_id["a"][meme_idx] == 2  # two member shots in video a
    assert by_id["b"][meme_idx] == 1
    assert by_id["b"][0] == 2


def _planted_corpus(rng, n_topics=5, words_per_topic=20, n_docs=300, doc_len=40):
    v = n_topics * words_per_topic
    bags = []
    for d in range(n_docs):
        z = d % n_topics
        lo = z * words_per_topic
        words = rng.integers(lo, lo + words_per_topic, doc_len)
        counts = {}
        for w in words:
            counts[int(w)] = counts.get(int(w), 0) + 1
        bags.append(BagOfWords(f"d{d}", counts))
    return bags, v


def test_lda_bound_monotone(rng):
    bags, v = _planted_corpus(rng, n_docs=60)
    model = tp.fit_lda(bags, v, k=5, seed=0, max_iters=15)
    trace = model.bound_trace
    assert len(trace) >= 2
    for prev, cur in zip(trace, trace[1:]):
        assert cur >= prev - 1e-6 * abs(prev)


def test_lda_recovers_planted_topics(rng):
    from scipy.optimize import linear_sum_assignment

    bags, v = _planted_corpus(rng)
    model = tp.fit_lda(bags, v, k=5, seed=0, max_iters=40)
    truth = np.zeros((5, v))
    for z in range(5):
        truth[z, z * 20:(z + 1) * 20] = 1.0 / 20
    phi_n = model.phi / np.linalg.norm(model.phi, axis=1, keepdims=True)
    truth_n = truth / np.linalg.norm(truth, axis=1, keepdims=True)
    cos = phi_n @ truth_n.T
    rows, cols = linear_sum_assignment(-cos)
    assert cos[rows, cols].min() >= 0.95


def test_lda_skips_empty_docs(rng):
    bags = [BagOfWords("a", {0: 3, 1: 1}), BagOfWords("empty", {}),
            BagOfWords("b", {1: 2, 2: 2})]
    model = tp.fit_lda(bags, 3, k=2, seed=0, max_iters=5)
    assert model.doc_ids == ("a", "b")


def test_infer_theta_normalized_and_deterministic(rng):
    bags, v = _planted_corpus(rng, n_docs=60)
    model = tp.fit_lda(bags, v, k=5, seed=0, max_iters=10)
    t1 = tp.infer_theta(model, {0: 3, 1: 2})
    t2 = tp.infer_theta(model, {0: 3, 1: 2})
    assert np.array_equal(t1, t2)
    assert t1.sum() == pytest.approx(1.0)
    assert np.all(t1 >= 0)
    uniform = tp.infer_theta(model, {})
    assert np.allclose(uniform, 1 / 5)


def test_cm2_score_hand_oracle():
    """Four docs, known thetas: scores must equal the direct kernel sum."""
    v = _vocab(n_text=3, n_meme=2)
    model = tp.TopicModel(
        k=2, alpha=0.5,
        phi=np.full((2, 5), 0.2), theta=np.zeros((4, 2)),
        doc_ids=("d0", "d1", "d2", "d3"), vocab_size=5,
    )
    theta_corpus = np.array([[1.0, 0.0], [0.9, 0.1], [0.1, 0.9], [0.0, 1.0]])
    bags = [BagOfWords("d0", {0: 2, 3: 1}), BagOfWords("d1", {1: 1, 3: 2}),
            BagOfWords("d2", {2: 5, 4: 1}), BagOfWords("d3", {0: 1, 4: 2})]
    sigma = 0.5
    query = {3: 1}
    scores = dict(tp.cm2_score(model, theta_corpus, bags, v, query,
                               candidate_modality="text", sigma_theta=sigma))
    # theta_q for flat phi and symmetric alpha is uniform
    theta_q = np.array([0.5, 0.5])
    w = np.exp(-((theta_corpus - theta_q) ** 2).sum(axis=1) / sigma)
    counts = np.array([[2, 0, 0], [0, 1, 0], [0, 0, 5], [1, 0, 0]], dtype=float)
    want = w @ counts
    for term in range(3):
        assert scores[term] == pytest.approx(want[term], abs=1e-12)


def test_cm2_ranking_ties_break_by_index():
    v = _vocab(n_text=3, n_meme=1)
    model = tp.TopicModel(k=2, alpha=0.5, phi=np.full((2, 4), 0.25),
                          theta=np.zeros((1, 2)), doc_ids=("d0",), vocab_size=4)
    theta_corpus = np.array([[0.5, 0.5]])
    bags = [BagOfWords("d0", {0: 1, 1: 1, 3: 1})]
    ranked = tp.cm2_score(model, theta_corpus, bags, v, {3: 1},
                          candidate_modality="text", sigma_theta=1.0)
    assert [i for i, _ in ranked] == [0, 1, 2]


def test_cooccur_requires_all_query_terms():
    v = _vocab(n_text=3, n_meme=2)
    bags = [BagOfWords("d0", {0: 4, 3: 1, 4: 1}),  # has both memes
            BagOfWords("d1", {1: 2, 3: 1}),        # only meme 0
            BagOfWords("d2", {2: 7, 4: 1})]        # only meme 1
    scores = dict(tp.cooccur_score(bags, v, {3: 1, 4: 1}))
    assert scores == {0: 4.0, 1: 0.0, 2: 0.0}


def test_tag_likelihood_hand_value():
    scores = [(0, 3.0), (1, 1.0)]
    ll, skipped = tp.tag_likelihood(scores, [0, 1, 99], smoothing=0.0)
    assert skipped == 1
    assert ll == pytest.approx((math.log(0.75) + math.log(0.25)) / 2)
    nan_ll, skipped = tp.tag_likelihood(scores, [99])
    assert math.isnan(nan_ll) and skipped == 1


def test_corpus_theta_uses_single_modality(rng):
    bags, v = _planted_corpus(rng, n_docs=30)
    jv = tp.JointVocabulary(tuple(f"w{i}" for i in range(v - 10)),
                            tuple(f"meme:{i}" for i in range(10)))
    model = tp.fit_lda(bags, v, k=3, seed=0, max_iters=5)
    theta_text = tp.corpus_theta(model, bags[:5], jv, modality="text")
    assert theta_text.shape == (5, 3)
    assert np.allclose(theta_text.sum(axis=1), 1.0)
