"""Event corpus ingestion, text normalization, and vocabulary construction.

The corpus is fed by a JSON Lines manifest, one video record per line:

    {"video_id": ..., "author_id": ..., "upload_time": "2009-06-20T14:00:00Z",
     "title": ..., "description": ..., "view_count": 0,
     "frames": [{"shot": 0, "path": "frames/v0_s0.png", "t_offset_s": 0.0}]}

After ingestion the corpus handle is immutable and safe for concurrent
readers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

__all__ = [
    "FrameRef",
    "VideoDoc",
    "AuthorRecord",
    "TextVocabulary",
    "BagOfWords",
    "Corpus",
    "ManifestError",
    "ingest_manifest",
    "normalize_text",
    "build_vocabulary",
    "load_stopwords",
    "load_normalization_map",
]

SECONDS_PER_DAY = 86400.0


class ManifestError(ValueError):
    """Raised for malformed manifests or corpus-level conflicts."""


@dataclass(frozen=True)
class FrameRef:
    """One keyframe reference inside a video record."""

    shot: int
    path: str
    t_offset_s: float = 0.0


@dataclass(frozen=True)
class VideoDoc:
    video_id: str
    author_id: str
    upload_time: float  # UTC seconds
    title: str = ""
    description: str = ""
    view_count: int = 0
    frames: tuple[FrameRef, ...] = ()

    @property
    def has_frames(self) -> bool:
        return len(self.frames) > 0

    @property
    def upload_day(self) -> float:
        """Upload time at day granularity (floored)."""
        return math.floor(self.upload_time / SECONDS_PER_DAY)

    def text(self) -> str:
        return f"{self.title} {self.description}"


@dataclass(frozen=True)
class AuthorRecord:
    author_id: str
    video_ids: frozenset[str]

    @property
    def productivity(self) -> int:
        return len(self.video_ids)


@dataclass(frozen=True)
class TextVocabulary:
    """Top tf-idf terms of a corpus, with per-term idf weights."""

    terms: tuple[str, ...]
    idf: tuple[float, ...]

    def __post_init__(self):
        if len(self.terms) != len(set(self.terms)):
            raise ValueError("vocabulary terms must be unique")

    @property
    def size(self) -> int:
        return len(self.terms)

    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.terms)}


@dataclass(frozen=True)
class BagOfWords:
    doc_id: str
    counts: Mapping[int, int]

    def __post_init__(self):
        for idx, c in self.counts.items():
            if idx < 0 or c < 1:
                raise ValueError("bag-of-words entries must have index >= 0, count >= 1")


@dataclass
class Corpus:
    """Immutable ingested corpus: videos, authors, and the rejects report."""

    videos: dict[str, VideoDoc]
    rejects: list[dict] = field(default_factory=list)

    def __post_init__(self):
        by_author: dict[str, set[str]] = {}
        for v in self.videos.values():
            by_author.setdefault(v.author_id, set()).add(v.video_id)
        self.authors: dict[str, AuthorRecord] = {
            a: AuthorRecord(a, frozenset(ids)) for a, ids in sorted(by_author.items())
        }

    def __len__(self) -> int:
        return len(self.videos)

    def video(self, video_id: str) -> VideoDoc:
        return self.videos[video_id]

    def author_of(self, video_id: str) -> str:
        return self.videos[video_id].author_id

    def frame_video(self, frame_ref: tuple[str, int]) -> VideoDoc:
        """Resolve a (video_id, shot) reference to its video."""
        vid, _shot = frame_ref
        if vid not in self.videos:
            raise KeyError(f"frame reference to unknown video {vid!r}")
        return self.videos[vid]

    def save(self, directory: str | Path, vocab: Optional[TextVocabulary] = None) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "videos.jsonl", "w") as fh:
            for vid in sorted(self.videos):
                v = self.videos[vid]
                rec = {
                    "video_id": v.video_id,
                    "author_id": v.author_id,
                    "upload_time": v.upload_time,
                    "title": v.title,
                    "description": v.description,
                    "view_count": v.view_count,
                    "frames": [
                        {"shot": f.shot, "path": f.path, "t_offset_s": f.t_offset_s}
                        for f in v.frames
                    ],
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        with open(directory / "authors.jsonl", "w") as fh:
            for aid in sorted(self.authors):
                a = self.authors[aid]
                rec = {"author_id": aid, "video_ids": sorted(a.video_ids),
                       "productivity": a.productivity}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        if vocab is not None:
            save_vocabulary(vocab, directory / "vocab.tsv")

    @classmethod
    def load(cls, directory: str | Path) -> "Corpus":
        directory = Path(directory)
        videos: dict[str, VideoDoc] = {}
        with open(directory / "videos.jsonl") as fh:
            for line in fh:
                rec = json.loads(line)
                frames = tuple(
                    FrameRef(f["shot"], f["path"], f["t_offset_s"]) for f in rec["frames"]
                )
                videos[rec["video_id"]] = VideoDoc(
                    video_id=rec["video_id"],
                    author_id=rec["author_id"],
                    upload_time=rec["upload_time"],
                    title=rec["title"],
                    description=rec["description"],
                    view_count=rec["view_count"],
                    frames=frames,
                )
        return cls(videos)


def save_vocabulary(vocab: TextVocabulary, path: str | Path) -> None:
    with open(path, "w") as fh:
        for term, idf in zip(vocab.terms, vocab.idf):
            fh.write(f"{term}\t{idf!r}\n")


def load_vocabulary(path: str | Path) -> TextVocabulary:
    terms, idfs = [], []
    with open(path) as fh:
        for line in fh:
            term, idf = line.rstrip("\n").split("\t")
            terms.append(term)
            idfs.append(float(idf))
    return TextVocabulary(tuple(terms), tuple(idfs))


def _parse_time(value) -> float:
    """Parse an ISO-8601 timestamp (or epoch number) into UTC seconds."""
    if isinstance(value, (int, float)):
        if not math.isfinite(value):
            raise ValueError(f"non-finite timestamp {value!r}")
        return float(value)
    text = str(value).strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def ingest_manifest(path: str | Path, rejects_path: Optional[str | Path] = None) -> Corpus:
    """Ingest a JSON Lines manifest into a corpus handle.

    Record-level problems (bad timestamps, missing fields on one record) are
    collected into the rejects report; structural problems (unreadable JSON,
    duplicate video ids) raise :class:`ManifestError`.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    videos: dict[str, VideoDoc] = {}
    rejects: list[dict] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise ManifestError(f"line {lineno}: record is not an object")
            missing = [k for k in ("video_id", "author_id", "upload_time") if k not in rec]
            if missing:
                rejects.append({"line": lineno, "reason": f"missing fields: {', '.join(missing)}"})
                continue
            vid = str(rec["video_id"])
            if vid in videos:
                raise ManifestError(f"line {lineno}: duplicate video_id {vid!r}")
            try:
                t = _parse_time(rec["upload_time"])
            except (ValueError, TypeError):
                rejects.append({"line": lineno,
                                "reason": f"unparseable upload_time {rec['upload_time']!r}"})
                continue
            frames = []
            ok = True
            for f in rec.get("frames", []):
                try:
                    frames.append(FrameRef(int(f["shot"]), str(f["path"]),
                                           float(f.get("t_offset_s", 0.0))))
                except (KeyError, TypeError, ValueError):
                    rejects.append({"line": lineno, "reason": "malformed frame entry"})
                    ok = False
                    break
            if not ok:
                continue
            frames.sort(key=lambda f: f.shot)
            shots = [f.shot for f in frames]
            if any(b <= a for a, b in zip(shots, shots[1:])):
                rejects.append({"line": lineno, "reason": "duplicate shot index"})
                continue
            videos[vid] = VideoDoc(
                video_id=vid,
                author_id=str(rec["author_id"]),
                upload_time=t,
                title=str(rec.get("title", "")),
                description=str(rec.get("description", "")),
                view_count=max(0, int(rec.get("view_count", 0))),
                frames=tuple(frames),
            )
    if rejects_path is not None:
        with open(rejects_path, "w") as fh:
            for r in rejects:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
    return Corpus(videos, rejects)


def _load_data_lines(name: str) -> list[str]:
    text = resources.files("vmeme.data").joinpath(name).read_text()
    return [line for line in text.splitlines() if line.strip()]


def load_stopwords() -> frozenset[str]:
    return frozenset(_load_data_lines("stopwords.txt"))


def load_normalization_map() -> dict[str, str]:
    out = {}
    for line in _load_data_lines("normalize_map.txt"):
        form, lemma = line.split("\t")
        out[form] = lemma
    return out


_DEFAULT_STOPWORDS: Optional[frozenset[str]] = None
_DEFAULT_NORM_MAP: Optional[dict[str, str]] = None


def _defaults() -> tuple[frozenset[str], dict[str, str]]:
    global _DEFAULT_STOPWORDS, _DEFAULT_NORM_MAP
    if _DEFAULT_STOPWORDS is None:
        _DEFAULT_STOPWORDS = load_stopwords()
        _DEFAULT_NORM_MAP = load_normalization_map()
    return _DEFAULT_STOPWORDS, _DEFAULT_NORM_MAP


def normalize_text(
    raw: str,
    dictionary: Optional[Mapping[str, str]] = None,
    stopwords: Optional[Iterable[str]] = None,
) -> list[str]:
    """Lowercase, tokenize, drop stopwords, and collapse known inflections.

    Tokens absent from the normalization dictionary (proper names, foreign
    words, things like "h1n1") are preserved verbatim.
    """
    default_stop, default_map = _defaults()
    if dictionary is None:
        dictionary = default_map
    stop = default_stop if stopwords is None else frozenset(stopwords)
    tokens: list[str] = []
    word: list[str] = []
    for ch in raw.lower():
        if ch.isalnum():
            word.append(ch)
        elif word:
            tokens.append("".join(word))
            word = []
    if word:
        tokens.append("".join(word))
    out = []
    for tok in tokens:
        if tok in stop:
            continue
        tok = dictionary.get(tok, tok)
        if tok and tok not in stop:
            out.append(tok)
    return out


def tokenize_corpus(corpus: Corpus) -> dict[str, list[str]]:
    """Normalized token lists per video, in sorted video-id order."""
    return {vid: normalize_text(corpus.videos[vid].text()) for vid in sorted(corpus.videos)}


def build_vocabulary(
    corpus: Corpus,
    cap: int = 2000,
    background: Optional[Mapping[str, int]] = None,
    background_docs: Optional[int] = None,
) -> TextVocabulary:
    """Rank terms by tf-idf and keep the top ``cap``.

    tf is the total raw count across the corpus; idf = ln((1+N)/(1+df)) + 1.
    When a background document-frequency table is supplied (cross-topic
    reweighting), df and N come from it; terms absent from the table get
    df = 0. Ties break lexicographically.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if len(corpus) == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    tokens = tokenize_corpus(corpus)
    tf: dict[str, int] = {}
    df: dict[str, int] = {}
    for toks in tokens.values():
        seen = set()
        for t in toks:
            tf[t] = tf.get(t, 0) + 1
            if t not in seen:
                seen.add(t)
                df[t] = df.get(t, 0) + 1
    if background is not None:
        n_docs = background_docs if background_docs is not None else max(
            background.values(), default=1)
        df_of = lambda term: background.get(term, 0)
    else:
        n_docs = len(corpus)
        df_of = df.__getitem__
    idf = {t: math.log((1 + n_docs) / (1 + df_of(t))) + 1.0 for t in tf}
    ranked = sorted(tf, key=lambda t: (-tf[t] * idf[t], t))[:cap]
    return TextVocabulary(tuple(ranked), tuple(idf[t] for t in ranked))


def bags_of_words(corpus: Corpus, vocab: TextVocabulary) -> list[BagOfWords]:
    """Per-video sparse term counts over the vocabulary, sorted by video id."""
    index = vocab.index()
    bags = []
    for vid in sorted(corpus.videos):
        counts: dict[int, int] = {}
        for tok in normalize_text(corpus.videos[vid].text()):
            if tok in index:
                i = index[tok]
                counts[i] = counts.get(i, 0) + 1
        bags.append(BagOfWords(vid, counts))
    return bags
