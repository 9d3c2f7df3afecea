"""Command-line pipeline orchestration.

Subcommands cover every stage from manifest ingestion through reports; the
``pipeline`` command runs them in order, skipping stages whose config and
input hashes are unchanged since the last run. Reports are deterministic
CSV + SVG files derived from the staged artifacts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import click
import numpy as np

from . import ann, correlogram, corpus as corpus_mod, imgproc, memedetect, memegraph
from . import predict as predict_mod
from . import topics as topics_mod
from .corpus import SECONDS_PER_DAY

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    tomllib = None

logger = logging.getLogger("vmeme")

STAGE_ORDER = ["ingest", "features", "detect", "graph", "topics", "predict", "report"]


# ---------------------------------------------------------------------------
# workspace bookkeeping
# ---------------------------------------------------------------------------

class Workspace:
    """On-disk stage store with config/input fingerprints for staleness."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.state_path = self.root / "stages.json"
        self.state = {}
        if self.state_path.exists():
            self.state = json.loads(self.state_path.read_text())

    def dir(self, stage: str) -> Path:
        d = self.root / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    def fingerprint(self, config: dict, inputs: Sequence[Path]) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(config, sort_keys=True, default=str).encode())
        for p in sorted(str(p) for p in inputs):
            h.update(p.encode())
            path = Path(p)
            if path.exists():
                h.update(path.read_bytes())
        return h.hexdigest()

    def is_fresh(self, stage: str, fp: str) -> bool:
        return self.state.get(stage, {}).get("fingerprint") == fp

    def mark(self, stage: str, fp: str) -> None:
        self.state[stage] = {"fingerprint": fp, "completed_at": time.time()}
        self.state_path.write_text(json.dumps(self.state, indent=2, sort_keys=True))


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    text = Path(path).read_text()
    if tomllib is not None:
        return tomllib.loads(text)
    # minimal key = value fallback
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if "=" in line:
            key, val = (s.strip() for s in line.split("=", 1))
            val = val.strip('"')
            try:
                out[key] = json.loads(val)
            except json.JSONDecodeError:
                out[key] = val
    return out


def _fmt(x: float) -> str:
    return repr(round(float(x), 10))


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def _svg_scatter(path: Path, xs, ys, title: str, width=480, height=320) -> None:
    """Minimal deterministic scatter/line SVG."""
    pad = 40
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    if not xs:
        xs, ys = [0.0], [0.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    sx = (width - 2 * pad) / ((x1 - x0) or 1.0)
    sy = (height - 2 * pad) / ((y1 - y0) or 1.0)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width // 2}" y="16" text-anchor="middle" font-size="12">{title}</text>',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="black"/>',
    ]
    for x, y in zip(xs, ys):
        cx = pad + (x - x0) * sx
        cy = height - pad - (y - y0) * sy
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="2" fill="steelblue"/>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# stage implementations
# ---------------------------------------------------------------------------

def stage_ingest(ws: Workspace, manifest: str, vocab_cap: int) -> None:
    out = ws.dir("corpus")
    c = corpus_mod.ingest_manifest(manifest, rejects_path=out / "rejects.jsonl")
    if len(c) == 0:
        raise click.ClickException("manifest produced an empty corpus")
    vocab = corpus_mod.build_vocabulary(c, cap=vocab_cap)
    c.save(out, vocab)
    logger.info("ingest: %d videos, %d authors, %d rejects",
                len(c), len(c.authors), len(c.rejects))


def _load_corpus(ws: Workspace) -> corpus_mod.Corpus:
    return corpus_mod.Corpus.load(ws.root / "corpus")


def stage_features(ws: Workspace, manifest_dir: Path, seed: int,
                   blank_entropy: float, border_var: float) -> None:
    import cv2

    c = _load_corpus(ws)
    out = ws.dir("features")
    opts = imgproc.PrepOptions(blank_entropy=blank_entropy, border_var=border_var)
    refs, matrix = [], []
    blanks = []
    for vid in sorted(c.videos):
        for fr in c.videos[vid].frames:
            img_path = manifest_dir / fr.path
            bgr = cv2.imread(str(img_path))
            if bgr is None:
                blanks.append({"video_id": vid, "shot": fr.shot, "reason": "unreadable"})
                continue
            frame = imgproc.RawFrame(np.ascontiguousarray(bgr[..., ::-1]), vid, fr.t_offset_s)
            prepared = imgproc.prepare_frame(frame, opts)
            if prepared.blank:
                blanks.append({"video_id": vid, "shot": fr.shot, "reason": "blank"})
                continue
            feat = correlogram.extract(prepared, frame_ref=(vid, fr.shot))
            refs.append({"video_id": vid, "shot": fr.shot})
            matrix.append(feat.values)
    if not matrix:
        raise click.ClickException("no usable frames; nothing to index")
    mat = np.stack(matrix)
    correlogram.write_features(out / "features.bin", mat)
    with open(out / "frames.jsonl", "w") as fh:
        for r in refs:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    with open(out / "skipped.jsonl", "w") as fh:
        for r in blanks:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    logger.info("features: %d frames, %d skipped", len(refs), len(blanks))


def _load_features(ws: Workspace):
    out = ws.dir("features")
    mat = correlogram.read_features(out / "features.bin").astype(np.float64)
    refs = []
    with open(out / "frames.jsonl") as fh:
        for line in fh:
            r = json.loads(line)
            refs.append((r["video_id"], r["shot"]))
    feats = [correlogram.CorrelogramFeature(mat[i], refs[i]) for i in range(len(refs))]
    return feats, mat


def stage_detect(ws: Workspace, tau: float, knn: int, budget: Optional[int],
                 seed: int) -> None:
    c = _load_corpus(ws)
    feats, mat = _load_features(ws)
    out = ws.dir("detect")
    index = ann.build_index(mat, m=budget, seed=seed)
    fmax = correlogram.collection_max(feats)
    pairs = memedetect.match_all(index, feats, fmax, tau=tau, k=knn, budget=budget)
    clusters = memedetect.filter_clusters(memedetect.close_clusters(pairs), c)
    _write_csv(out / "pairs.csv",
               ["video_a", "shot_a", "video_b", "shot_b", "distance"],
               [[p.frame_a[0], p.frame_a[1], p.frame_b[0], p.frame_b[1], p.distance]
                for p in pairs])
    with open(out / "clusters.jsonl", "w") as fh:
        for cl in clusters:
            rec = {
                "meme_id": cl.meme_id,
                "members": [{"video_id": v, "shot": s} for v, s in sorted(cl.members)],
                "onset_time": cl.onset_time(c),
                "last_time": cl.last_time(c),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    logger.info("detect: %d pairs, %d clusters", len(pairs), len(clusters))


def _load_clusters(ws: Workspace) -> list[memedetect.MemeCluster]:
    clusters = []
    with open(ws.root / "detect" / "clusters.jsonl") as fh:
        for line in fh:
            rec = json.loads(line)
            members = frozenset((m["video_id"], m["shot"]) for m in rec["members"])
            clusters.append(memedetect.MemeCluster(rec["meme_id"], members))
    return clusters


def stage_graph(ws: Workspace, eta: float, weight_variant: str) -> None:
    c = _load_corpus(ws)
    clusters = _load_clusters(ws)
    out = ws.dir("graph")
    vg = memegraph.build_video_graph(clusters, c, eta=eta)
    ag = memegraph.build_author_graph(vg, c, weight_variant=weight_variant)
    _write_csv(out / "video_edges.csv",
               ["src", "dst", "nu", "omega_star", "omega_prime", "dt_days"],
               [[e.src, e.dst, e.nu, e.omega_star, e.omega_prime, e.dt_days]
                for _, e in sorted(vg.edges.items())])
    _write_csv(out / "author_edges.csv", ["a", "b", "theta"],
               [[a, b, w] for (a, b), w in sorted(ag.weights.items())])
    inf = memegraph.influence_indices(clusters, c)
    _write_csv(out / "influence.csv",
               ["author", "chi_hat", "chi_bar", "in_degree", "out_degree", "productivity"],
               [[a, inf.chi_hat[a], inf.chi_bar[a],
                 inf.author_in_degree.get(a, 0), inf.author_out_degree.get(a, 0),
                 c.authors[a].productivity]
                for a in sorted(inf.chi_hat)])
    orig = memegraph.originality_index(clusters, c)
    _write_csv(out / "originality.csv", ["author", "originality"],
               [[a, v] for a, v in sorted(orig.items())])
    logger.info("graph: %d video edges, %d author edges", len(vg.edges), len(ag.weights))


def _build_topic_inputs(ws: Workspace, meme_cap: int):
    c = _load_corpus(ws)
    clusters = _load_clusters(ws)
    text_vocab = corpus_mod.load_vocabulary(ws.root / "corpus" / "vocab.tsv")
    text_bags = corpus_mod.bags_of_words(c, text_vocab)
    vocab = topics_mod.build_joint_vocabulary(text_vocab, clusters, meme_cap=meme_cap)
    bags = topics_mod.build_joint_bags(c, vocab, clusters, text_bags)
    return c, clusters, vocab, bags


def stage_topics(ws: Workspace, k: int, seed: int, meme_cap: int, max_iters: int) -> None:
    _, _, vocab, bags = _build_topic_inputs(ws, meme_cap)
    out = ws.dir("topics")
    model = topics_mod.fit_lda(bags, vocab.size, k=k, seed=seed, max_iters=max_iters)
    correlogram.write_features(out / "phi.bin", model.phi)
    correlogram.write_features(out / "theta.bin", model.theta)
    vocab_hash = hashlib.sha256("\n".join(vocab.terms).encode()).hexdigest()
    meta = {
        "k": model.k, "alpha": model.alpha, "vocab_hash": vocab_hash,
        "n_text": vocab.n_text, "meme_terms": list(vocab.meme_terms),
        "doc_ids": list(model.doc_ids),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    logger.info("topics: K=%d fit over %d docs, bound %.2f",
                model.k, len(model.doc_ids), model.bound_trace[-1])


def _load_topic_model(ws: Workspace, meme_cap: int):
    out = ws.root / "topics"
    meta = json.loads((out / "meta.json").read_text())
    phi = correlogram.read_features(out / "phi.bin").astype(np.float64)
    phi /= phi.sum(axis=1, keepdims=True)  # undo f32 rounding
    theta = correlogram.read_features(out / "theta.bin").astype(np.float64)
    model = topics_mod.TopicModel(
        k=meta["k"], alpha=meta["alpha"], phi=phi,
        theta=theta / theta.sum(axis=1, keepdims=True),
        doc_ids=tuple(meta["doc_ids"]), vocab_size=phi.shape[1],
    )
    return model, meta


def stage_predict(ws: Workspace, target: str, feature_sets: Sequence[str],
                  splits: int, seed: int, meme_cap: int) -> None:
    c, clusters, vocab, bags = _build_topic_inputs(ws, meme_cap)
    model, _ = _load_topic_model(ws, meme_cap)
    out = ws.dir("predict")
    rows = predict_mod.assemble_features(clusters, c, model, vocab, bags)
    if len(rows) < 10:
        logger.warning("predict: only %d memes after pruning; skipping regression",
                       len(rows))
        (out / f"report_{target}.json").write_text(json.dumps(
            {"target": target, "skipped": f"only {len(rows)} memes"}, indent=2))
        return
    configs = {name: predict_mod.FEATURE_SETS[name] for name in feature_sets}
    report = predict_mod.evaluate_regressor(rows, target=target, feature_sets=configs,
                                            n_splits=splits, seed=seed)
    payload = {
        "target": target,
        "split_seeds": list(report.split_seeds),
        "results": {
            name: {m: {"mean": v[0], "std": v[1]} for m, v in metrics.items()}
            for name, metrics in report.per_feature_set.items()
        },
    }
    (out / f"report_{target}.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    _write_csv(out / f"report_{target}.csv",
               ["feature_set", "mse_mean", "mse_std", "corr_mean", "corr_std",
                "tau_mean", "tau_std"],
               [[name,
                 metrics["mse"][0], metrics["mse"][1],
                 metrics["corr"][0], metrics["corr"][1],
                 metrics["tau"][0], metrics["tau"][1]]
                for name, metrics in sorted(report.per_feature_set.items())])
    logger.info("predict: %d memes, target=%s", len(rows), target)


def stage_report(ws: Workspace) -> None:
    c = _load_corpus(ws)
    clusters = _load_clusters(ws)
    out = ws.dir("report")
    # meme timeline: volume per (meme, day)
    timeline = []
    for cl in clusters:
        per_day: dict[int, int] = {}
        for vid in cl.videos():
            day = int(c.video(vid).upload_day)
            per_day[day] = per_day.get(day, 0) + 1
        for day in sorted(per_day):
            timeline.append([cl.meme_id, day, per_day[day]])
    _write_csv(out / "meme_timeline.csv", ["meme_id", "day", "volume"], timeline)
    _svg_scatter(out / "meme_timeline.svg",
                 [r[1] for r in timeline], [r[2] for r in timeline],
                 "meme volume per day")
    # remix fraction and per-view-rank table
    meme_videos = set()
    for cl in clusters:
        meme_videos |= cl.videos()
    frac = len(meme_videos) / len(c) if len(c) else 0.0
    meme_authors = {c.author_of(v) for v in meme_videos}
    _write_csv(out / "remix_fraction.csv",
               ["videos_total", "videos_with_memes", "fraction",
                "authors_total", "authors_with_memes", "author_fraction"],
               [[len(c), len(meme_videos), frac,
                 len(c.authors), len(meme_authors),
                 len(meme_authors) / len(c.authors) if c.authors else 0.0]])
    ranked = sorted(c.videos.values(), key=lambda v: (-v.view_count, v.video_id))
    _write_csv(out / "remix_by_view_rank.csv",
               ["view_rank", "video_id", "view_count", "has_meme"],
               [[i + 1, v.video_id, v.view_count, int(v.video_id in meme_videos)]
                for i, v in enumerate(ranked)])
    # zipf scatter for words and memes
    text_vocab = corpus_mod.load_vocabulary(ws.root / "corpus" / "vocab.tsv")
    bags = corpus_mod.bags_of_words(c, text_vocab)
    word_freq: dict[int, int] = {}
    for b in bags:
        for i, cnt in b.counts.items():
            word_freq[i] = word_freq.get(i, 0) + cnt
    wf = sorted(word_freq.values(), reverse=True)
    mf = sorted((len(cl.videos()) for cl in clusters), reverse=True)
    zipf_rows = [["word", r + 1, f] for r, f in enumerate(wf)]
    zipf_rows += [["meme", r + 1, f] for r, f in enumerate(mf)]
    _write_csv(out / "zipf.csv", ["kind", "rank", "frequency"], zipf_rows)
    if len(wf) >= 10:
        _svg_scatter(out / "zipf.svg",
                     [math.log10(r + 1) for r in range(len(wf))],
                     [math.log10(f) for f in wf], "rank vs frequency (words)")
    # influence vs productivity scatter
    inf = memegraph.influence_indices(clusters, c)
    rows = [[a, c.authors[a].productivity, inf.chi_hat[a], inf.chi_bar[a]]
            for a in sorted(inf.chi_hat)]
    _write_csv(out / "influence_scatter.csv",
               ["author", "productivity", "chi_hat", "chi_bar"], rows)
    _svg_scatter(out / "influence_scatter.svg",
                 [r[1] for r in rows], [r[2] for r in rows],
                 "influence vs productivity")
    logger.info("report: bundle written to %s", out)


# ---------------------------------------------------------------------------
# click commands
# ---------------------------------------------------------------------------

@click.group()
@click.option("--workspace", envvar="VMEME_WORKSPACE", default="workspace",
              show_default=True, help="Workspace root directory.")
@click.option("--config", default=None, help="TOML config file; flags win.")
@click.option("--verbose", is_flag=True)
@click.pass_context
def main(ctx, workspace, config, verbose):
    """Visual meme detection and diffusion analytics."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    ctx.obj = {"ws": Workspace(workspace), "config": _load_config(config)}


def _cfg(ctx, key, flag_value, default):
    if flag_value is not None:
        return flag_value
    return ctx.obj["config"].get(key, default)


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--vocab-cap", type=int, default=None)
@click.pass_context
def ingest(ctx, manifest, vocab_cap):
    """Ingest a JSON Lines manifest into the workspace."""
    cap = _cfg(ctx, "vocab_cap", vocab_cap, 2000)
    stage_ingest(ctx.obj["ws"], manifest, cap)


@main.command()
@click.argument("frame_dir", type=click.Path(exists=True))
@click.option("--shot-threshold", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", default=None, help="Output JSONL (default stdout).")
def shots(frame_dir, shot_threshold, seed, out_path):
    """Segment an ordered directory of frames into shots."""
    import cv2

    paths = sorted(Path(frame_dir).glob("*.png")) + sorted(Path(frame_dir).glob("*.ppm"))
    frames = []
    for p in paths:
        bgr = cv2.imread(str(p))
        if bgr is not None:
            frames.append(imgproc.RawFrame(np.ascontiguousarray(bgr[..., ::-1]),
                                           Path(frame_dir).name))
    records = imgproc.segment_shots(frames, threshold=shot_threshold, seed=seed)
    lines = [json.dumps({"shot_index": s.shot_index, "start_s": s.start_s,
                         "end_s": s.end_s}, sort_keys=True) for s in records]
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--manifest-dir", type=click.Path(exists=True), required=True,
              help="Directory frame paths in the manifest are relative to.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--blank-entropy", type=float, default=1.0, show_default=True)
@click.option("--border-var", type=float, default=25.0, show_default=True)
@click.pass_context
def features(ctx, manifest_dir, seed, blank_entropy, border_var):
    """Prepare keyframes and extract correlogram features."""
    stage_features(ctx.obj["ws"], Path(manifest_dir), seed, blank_entropy, border_var)


@main.command()
@click.option("--tau", type=float, default=None)
@click.option("--knn", type=int, default=None)
@click.option("--budget", type=int, default=None, help="Candidate budget (default sqrt(N)).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def detect(ctx, tau, knn, budget, seed):
    """Index features, match near-duplicates, and emit meme clusters."""
    tau = _cfg(ctx, "tau", tau, memedetect.DEFAULT_TAU)
    knn = _cfg(ctx, "knn", knn, memedetect.DEFAULT_KNN)
    stage_detect(ctx.obj["ws"], tau, knn, budget, seed)


@main.command("eval-detect")
@click.argument("labels_csv", type=click.Path(exists=True))
@click.option("--taus", default="2,4,6,8,10,11.5,13,16,20", show_default=True)
@click.option("--knn", type=int, default=50, show_default=True)
@click.option("--budget", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def eval_detect(ctx, labels_csv, taus, knn, budget, seed):
    """Sweep tau against labeled duplicate / non-duplicate pairs."""
    ws = ctx.obj["ws"]
    feats, mat = _load_features(ws)
    labels = {}
    with open(labels_csv) as fh:
        for row in csv.DictReader(fh):
            key = ((row["video_a"], int(row["shot_a"])),
                   (row["video_b"], int(row["shot_b"])))
            labels[key] = row["label"].strip() in ("1", "true", "dup")
    index = ann.build_index(mat, m=budget, seed=seed)
    fmax = correlogram.collection_max(feats)
    grid = [float(t) for t in taus.split(",")]
    curve = memedetect.sweep_tau(index, feats, fmax, labels, grid, k=knn, budget=budget)
    out = ws.dir("detect")
    _write_csv(out / "operating_curve.csv",
               ["tau", "precision", "recall", "f1"],
               [[r["tau"], r["precision"], r["recall"], r["f1"]] for r in curve])
    click.echo(json.dumps(curve, indent=2))


@main.command()
@click.option("--eta", type=float, default=None)
@click.option("--weight-variant", type=click.Choice(["omega_star", "omega_prime"]),
              default="omega_star", show_default=True)
@click.pass_context
def graph(ctx, eta, weight_variant):
    """Build diffusion graphs and influence/originality tables."""
    eta = _cfg(ctx, "eta", eta, memegraph.DEFAULT_ETA)
    stage_graph(ctx.obj["ws"], eta, weight_variant)


@main.command()
@click.pass_context
def influence(ctx):
    """Print the author influence table (built by `graph`)."""
    path = ctx.obj["ws"].root / "graph" / "influence.csv"
    if not path.exists():
        raise click.ClickException("run `vmeme graph` first")
    click.echo(path.read_text(), nl=False)


@main.command()
@click.option("--k", type=int, default=None, help="Topic count (default 50).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--meme-cap", type=int, default=2000, show_default=True)
@click.option("--max-iters", type=int, default=60, show_default=True)
@click.pass_context
def topics(ctx, k, seed, meme_cap, max_iters):
    """Fit the joint text+meme topic model."""
    k = _cfg(ctx, "k", k, topics_mod.DEFAULT_K)
    stage_topics(ctx.obj["ws"], k, seed, meme_cap, max_iters)


@main.command()
@click.option("--meme", "meme_id", type=int, default=None, help="Meme id to annotate.")
@click.option("--word", default=None, help="Text term to illustrate with memes.")
@click.option("--top", type=int, default=10, show_default=True)
@click.option("--meme-cap", type=int, default=2000, show_default=True)
@click.pass_context
def annotate(ctx, meme_id, word, top, meme_cap):
    """Explain a meme with words (or a word with memes) via topic voting."""
    if (meme_id is None) == (word is None):
        raise click.ClickException("pass exactly one of --meme or --word")
    ws = ctx.obj["ws"]
    _, _, vocab, bags = _build_topic_inputs(ws, meme_cap)
    model, _ = _load_topic_model(ws, meme_cap)
    index = vocab.index()
    if meme_id is not None:
        term = f"meme:{meme_id}"
        if term not in index:
            raise click.ClickException(f"meme {meme_id} not in the meme vocabulary")
        query = {index[term]: 1}
        modality, candidate = "meme", "text"
    else:
        if word not in index:
            raise click.ClickException(f"word {word!r} not in the text vocabulary")
        query = {index[word]: 1}
        modality, candidate = "text", "meme"
    theta = topics_mod.corpus_theta(model, bags, vocab, modality=modality)
    scores = topics_mod.cm2_score(model, theta, bags, vocab, query,
                                  candidate_modality=candidate)
    terms = vocab.terms
    for i, s in scores[:top]:
        click.echo(f"{terms[i]}\t{_fmt(s)}")


@main.command()
@click.option("--target", type=click.Choice(["volume", "life"]), default="volume",
              show_default=True)
@click.option("--features", "feature_sets", default="volume_d1,net_all,net_txt_vmeme",
              show_default=True)
@click.option("--splits", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--meme-cap", type=int, default=2000, show_default=True)
@click.pass_context
def predict(ctx, target, feature_sets, splits, seed, meme_cap):
    """Train and evaluate the meme popularity regressor."""
    names = [n.strip() for n in feature_sets.split(",")]
    unknown = [n for n in names if n not in predict_mod.FEATURE_SETS]
    if unknown:
        raise click.ClickException(f"unknown feature sets: {unknown}")
    stage_predict(ctx.obj["ws"], target, names, splits, seed, meme_cap)


@main.command()
@click.pass_context
def report(ctx):
    """Emit the analyst report bundle (CSV + SVG)."""
    stage_report(ctx.obj["ws"])


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--manifest-dir", type=click.Path(exists=True), default=None,
              help="Frame path root (default: manifest's directory).")
@click.option("--tau", type=float, default=None)
@click.option("--knn", type=int, default=None)
@click.option("--budget", type=int, default=None)
@click.option("--k", type=int, default=None, help="Topic count.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--vocab-cap", type=int, default=None)
@click.option("--meme-cap", type=int, default=200, show_default=True)
@click.option("--splits", type=int, default=5, show_default=True)
@click.option("--force", is_flag=True, help="Rebuild every stage.")
@click.option("--skip-predict", is_flag=True)
@click.pass_context
def pipeline(ctx, manifest, manifest_dir, tau, knn, budget, k, seed, vocab_cap,
             meme_cap, splits, force, skip_predict):
    """Run ingest -> features -> detect -> graph -> topics -> predict -> report,
    skipping stages that are up to date."""
    ws: Workspace = ctx.obj["ws"]
    cfg = ctx.obj["config"]
    tau = _cfg(ctx, "tau", tau, memedetect.DEFAULT_TAU)
    knn = _cfg(ctx, "knn", knn, memedetect.DEFAULT_KNN)
    k = _cfg(ctx, "k", k, min(topics_mod.DEFAULT_K, 10))
    vocab_cap = _cfg(ctx, "vocab_cap", vocab_cap, 2000)
    mdir = Path(manifest_dir) if manifest_dir else Path(manifest).parent

    common = {"seed": seed, "manifest": str(manifest)}
    stage_plan = [
        ("ingest", {**common, "vocab_cap": vocab_cap}, [Path(manifest)],
         lambda: stage_ingest(ws, manifest, vocab_cap)),
        ("features", {**common}, [ws.root / "corpus" / "videos.jsonl"],
         lambda: stage_features(ws, mdir, seed, 1.0, 25.0)),
        ("detect", {**common, "tau": tau, "knn": knn, "budget": budget},
         [ws.root / "features" / "features.bin"],
         lambda: stage_detect(ws, tau, knn, budget, seed)),
        ("graph", {**common, "eta": memegraph.DEFAULT_ETA},
         [ws.root / "detect" / "clusters.jsonl"],
         lambda: stage_graph(ws, memegraph.DEFAULT_ETA, "omega_star")),
        ("topics", {**common, "k": k, "meme_cap": meme_cap},
         [ws.root / "detect" / "clusters.jsonl"],
         lambda: stage_topics(ws, k, seed, meme_cap, 40)),
        ("predict", {**common, "splits": splits, "meme_cap": meme_cap},
         [ws.root / "detect" / "clusters.jsonl", ws.root / "topics" / "meta.json"],
         (lambda: None) if skip_predict else
         (lambda: stage_predict(ws, "volume",
                                ["volume_d1", "net_all", "net_txt_vmeme"],
                                splits, seed, meme_cap))),
        ("report", {**common}, [ws.root / "detect" / "clusters.jsonl"],
         lambda: stage_report(ws)),
    ]
    upstream_rebuilt = False
    for name, config, inputs, fn in stage_plan:
        fp = ws.fingerprint(config, inputs)
        if not force and not upstream_rebuilt and ws.is_fresh(name, fp):
            click.echo(f"[{name}] up-to-date")
            continue
        click.echo(f"[{name}] running")
        t0 = time.time()
        try:
            fn()
        except Exception as exc:
            raise click.ClickException(f"stage {name} failed: {exc}") from exc
        ws.mark(name, ws.fingerprint(config, inputs))
        upstream_rebuilt = True
        click.echo(f"[{name}] done in {time.time() - t0:.1f}s")


@main.command()
@click.argument("out_dir", type=click.Path())
@click.option("--frames", "n_frames", type=int, default=500, show_default=True)
@click.option("--groups", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def demo(out_dir, n_frames, groups, seed):
    """Generate a synthetic demo corpus (frames, manifest, pair labels)."""
    from .demo import DemoSpec, generate

    summary = generate(out_dir, DemoSpec(n_frames=n_frames, n_groups=groups, seed=seed))
    click.echo(json.dumps({"n_frames": summary["n_frames"],
                           "n_groups": summary["n_groups"],
                           "out": str(out_dir)}))


@main.command()
@click.argument("feature_file", type=click.Path(exists=True))
@click.option("--budget", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
def index(feature_file, budget, seed):
    """Build an ANN index over a feature file and print its summary."""
    mat = correlogram.read_features(feature_file)
    idx = ann.build_index(mat, m=budget, seed=seed)
    click.echo(json.dumps({"n": idx.n, "m": idx.m, "structure": idx.structure}))


if __name__ == "__main__":
    main()
