import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vmeme import corpus as cm

from conftest import make_corpus, write_manifest

GOOD_RECORD = {
    "video_id": "v1", "author_id": "a1",
    "upload_time": "2009-06-13T08:00:00Z",
    "title": "street protests", "description": "crowds marching",
    "view_count": 120,
    "frames": [{"shot": 0, "path": "v1_0.png", "t_offset_s": 0.0}],
}


def test_ingest_good_record(tmp_path):
    path = write_manifest(tmp_path / "m.jsonl", [GOOD_RECORD])
    c = cm.ingest_manifest(path)
    assert len(c) == 1
    v = c.video("v1")
    assert v.author_id == "a1"
    assert v.view_count == 120
    assert v.frames[0].path == "v1_0.png"
    # 2009-06-13T08:00:00Z in UTC seconds
    assert v.upload_time == 1244880000.0
    assert v.upload_day == math.floor(v.upload_time / 86400)


def test_ingest_rejects_bad_records(tmp_path):
    bad_time = dict(GOOD_RECORD, video_id="v2", upload_time="not-a-time")
    missing = {k: v for k, v in GOOD_RECORD.items() if k != "author_id"}
    missing["video_id"] = "v3"
    path = write_manifest(tmp_path / "m.jsonl", [GOOD_RECORD, bad_time, missing])
    c = cm.ingest_manifest(path)
    assert len(c) == 1
    assert {r["line"] for r in c.rejects} == {2, 3}


def test_ingest_duplicate_video_id_aborts(tmp_path):
    path = write_manifest(tmp_path / "m.jsonl", [GOOD_RECORD, GOOD_RECORD])
    with pytest.raises(cm.ManifestError):
        cm.ingest_manifest(path)


def test_ingest_malformed_json_aborts(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text(json.dumps(GOOD_RECORD) + "\n{not json\n")
    with pytest.raises(cm.ManifestError):
        cm.ingest_manifest(path)


def test_author_records_and_productivity():
    c = make_corpus([("v1", "a1", 0), ("v2", "a1", 10), ("v3", "a2", 20)])
    assert c.authors["a1"].productivity == 2
    assert c.authors["a2"].productivity == 1
    assert c.author_of("v3") == "a2"


def test_normalize_text_stopwords_and_lemmas():
    toks = cm.normalize_text("The Protests and the RIOTS of today!!")
    assert "the" not in toks and "and" not in toks and "of" not in toks
    assert "protest" in toks  # plural folded to its lemma
    assert "riot" in toks


def test_normalize_text_keeps_oov_verbatim():
    assert cm.normalize_text("zzyzx qwrk") == ["zzyzx", "qwrk"]


@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=80))
def test_normalize_text_idempotent(raw):
    once = cm.normalize_text(raw)
    again = cm.normalize_text(" ".join(once))
    assert once == again


def _tfidf_oracle(corpus):
    """Brute-force per-term raw count and smoothed idf over all videos."""
    docs = [cm.normalize_text(v.text()) for _, v in sorted(corpus.videos.items())]
    n = len(docs)
    tf, df = {}, {}
    for toks in docs:
        for t in toks:
            tf[t] = tf.get(t, 0) + 1
        for t in set(toks):
            df[t] = df.get(t, 0) + 1
    return {t: tf[t] * (math.log((1 + n) / (1 + df[t])) + 1) for t in tf}


def test_build_vocabulary_matches_brute_force_ranking():
    videos = {}
    rng = np.random.default_rng(7)
    words = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf"]
    for i in range(12):
        text = " ".join(rng.choice(words, size=rng.integers(2, 7)))
        videos[f"v{i}"] = cm.VideoDoc(f"v{i}", f"a{i % 3}", float(i), title=text)
    c = cm.Corpus(videos)
    scores = _tfidf_oracle(c)
    expected = sorted(scores, key=lambda t: (-scores[t], t))[:5]
    vocab = cm.build_vocabulary(c, cap=5)
    assert list(vocab.terms) == expected


def test_bags_of_words_counts():
    c = make_corpus([("v1", "a1", 0)])
    videos = dict(c.videos)
    videos["v1"] = cm.VideoDoc("v1", "a1", 0.0, title="riot riot protest")
    c = cm.Corpus(videos)
    vocab = cm.build_vocabulary(c, cap=10)
    bags = cm.bags_of_words(c, vocab)
    idx = vocab.index()
    assert bags[0].counts[idx["riot"]] == 2
    assert bags[0].counts[idx["protest"]] == 1


def test_save_load_roundtrip(tmp_path):
    c = make_corpus([("v1", "a1", 1000.5), ("v2", "a2", 2000.0, 2)])
    vocab = cm.TextVocabulary(("riot", "protest"), (1.0, 2.0))
    c.save(tmp_path, vocab)
    c2 = cm.Corpus.load(tmp_path)
    assert sorted(c2.videos) == sorted(c.videos)
    assert c2.video("v1").upload_time == 1000.5
    assert len(c2.video("v2").frames) == 2
    v2 = cm.load_vocabulary(tmp_path / "vocab.tsv")
    assert v2.terms == vocab.terms
    assert v2.idf == vocab.idf
