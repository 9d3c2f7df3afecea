import json

import numpy as np
import pytest

from vmeme.corpus import Corpus, FrameRef, VideoDoc

DAY = 86400.0


def make_corpus(specs):
    """Corpus from (video_id, author_id, upload_time_s[, n_shots]) tuples."""
    videos = {}
    for spec in specs:
        vid, author, t = spec[:3]
        n_shots = spec[3] if len(spec) > 3 else 1
        frames = tuple(FrameRef(shot=s, path=f"{vid}_{s}.png") for s in range(n_shots))
        videos[vid] = VideoDoc(video_id=vid, author_id=author, upload_time=float(t),
                               title=f"title {vid}", frames=frames)
    return Corpus(videos)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def write_manifest(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return path


@pytest.fixture(scope="session")
def demo_corpus_dir(tmp_path_factory):
    """Synthetic 500-frame corpus with 50 planted duplicate groups."""
    from vmeme.demo import DemoSpec, generate

    out = tmp_path_factory.mktemp("demo")
    generate(out, DemoSpec(seed=0))
    return out


@pytest.fixture(scope="session")
def demo_features(demo_corpus_dir):
    """Prepared + extracted features for every demo keyframe, with the
    planted group id per video."""
    import cv2

    from vmeme import correlogram, imgproc
    from vmeme.corpus import ingest_manifest

    corpus = ingest_manifest(demo_corpus_dir / "manifest.jsonl")
    feats = []
    for vid in sorted(corpus.videos):
        for fr in corpus.videos[vid].frames:
            bgr = cv2.imread(str(demo_corpus_dir / fr.path))
            frame = imgproc.RawFrame(np.ascontiguousarray(bgr[..., ::-1]), vid)
            prepared = imgproc.prepare_frame(frame)
            assert not prepared.blank
            feats.append(correlogram.extract(prepared, frame_ref=(vid, fr.shot)))
    labels = {}
    with open(demo_corpus_dir / "labels.csv") as fh:
        next(fh)
        for line in fh:
            va, sa, vb, sb, lab = line.strip().split(",")
            labels[((va, int(sa)), (vb, int(sb)))] = lab == "1"
    return {"corpus": corpus, "features": feats, "labels": labels}
