"""Synthetic corpus generation for end-to-end runs and integration tests.

Renders a small collection of synthetic keyframes with planted near-duplicate
groups (re-encoded with mild border / contrast / overlay jitter), plus a
manifest, themed title text, and a pair-label file. Everything is
deterministic under the seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EPOCH_ISO = "2009-01-01T00:00:00+00:00"
EPOCH_S = 1230768000.0

THEMES = {
    "protest": ["protest", "street", "march", "crowd", "freedom", "rally", "police"],
    "election": ["election", "vote", "ballot", "result", "fraud", "count", "poll"],
    "speech": ["speech", "leader", "address", "statement", "response", "nation"],
    "clash": ["clash", "riot", "tear", "gas", "basij", "militia", "violence"],
    "memorial": ["memorial", "candle", "song", "tribute", "martyr", "mourning"],
}
NOISE_WORDS = ["video", "new", "exclusive", "full", "part", "watch", "today",
               "june", "tehran", "city", "live", "raw"]


@dataclass(frozen=True)
class DemoSpec:
    n_frames: int = 500
    n_groups: int = 50
    n_authors: int = 80
    height: int = 120
    width: int = 160
    span_days: float = 90.0
    seed: int = 0


def _base_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Random gradient background with a handful of saturated shapes."""
    c0 = rng.integers(0, 120, 3).astype(np.float64)
    c1 = rng.integers(136, 256, 3).astype(np.float64)
    ramp = np.linspace(0.0, 1.0, h)[:, None, None]
    img = np.broadcast_to((1 - ramp) * c0 + ramp * c1, (h, w, 3)).copy()
    img += rng.normal(0.0, 4.0, img.shape)
    for _ in range(int(rng.integers(3, 7))):
        color = rng.integers(0, 256, 3).astype(np.float64)
        if rng.random() < 0.5:
            y0 = int(rng.integers(0, h - 8))
            x0 = int(rng.integers(0, w - 8))
            y1 = int(rng.integers(y0 + 4, min(h, y0 + h // 2) + 1))
            x1 = int(rng.integers(x0 + 4, min(w, x0 + w // 2) + 1))
            img[y0:y1, x0:x1] = color
        else:
            cy, cx = rng.integers(0, h), rng.integers(0, w)
            r = int(rng.integers(6, max(7, min(h, w) // 4)))
            yy, xx = np.ogrid[:h, :w]
            img[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = color
    return np.clip(img, 0, 255).astype(np.uint8)


def _jitter(rng: np.random.Generator, img: np.ndarray) -> np.ndarray:
    """A mild re-encode: contrast/brightness drift, optional dark border,
    a small overlay patch, and light sensor noise."""
    out = img.astype(np.float64)
    gain = 1.0 + rng.uniform(-0.06, 0.06)
    bias = rng.uniform(-8, 8)
    out = out * gain + bias
    out += rng.normal(0.0, 2.0, out.shape)
    out = np.clip(out, 0, 255).astype(np.uint8)
    if rng.random() < 0.4:
        b = int(rng.integers(2, 7))
        out[:b] = 0
        out[-b:] = 0
        out[:, :b] = 0
        out[:, -b:] = 0
    if rng.random() < 0.5:
        h, w = out.shape[:2]
        ph, pw = h // 10, w // 6
        y0 = int(rng.integers(0, h - ph))
        x0 = int(rng.integers(0, w - pw))
        out[y0:y0 + ph, x0:x0 + pw] = rng.integers(0, 256, 3)
    return out


def _title(rng: np.random.Generator, theme: str) -> str:
    pool = THEMES[theme]
    words = list(rng.choice(pool, size=3, replace=False))
    words += list(rng.choice(NOISE_WORDS, size=2, replace=False))
    rng.shuffle(words)
    return " ".join(words)


def generate(out_dir: str | Path, spec: DemoSpec = DemoSpec()) -> dict:
    """Write frames/, manifest.jsonl, and labels.csv; return a summary with
    the planted group assignment per frame."""
    import cv2

    out = Path(out_dir)
    frames_dir = out / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    theme_names = sorted(THEMES)

    # plan group sizes: popularity is roughly geometric so volumes vary
    sizes = []
    remaining = spec.n_frames
    for g in range(spec.n_groups):
        s = int(3 + rng.geometric(0.3))
        s = min(s, 12)
        sizes.append(s)
        remaining -= s
    if remaining < 0:
        raise ValueError("frame budget too small for the requested groups")

    authors = [f"author{idx:03d}" for idx in range(spec.n_authors)]
    records = []
    group_of: dict[str, int] = {}
    frame_idx = 0

    def emit(img: np.ndarray, group: int, theme: str, t_s: float) -> None:
        nonlocal frame_idx
        vid = f"video{frame_idx:04d}"
        fname = f"{vid}.png"
        cv2.imwrite(str(frames_dir / fname), img[..., ::-1])
        if group >= 0:
            # distinct authors inside a group, so groups survive the
            # two-author cluster filter
            author = authors[(group * 7 + sum(1 for g in group_of.values()
                                              if g == group)) % spec.n_authors]
        else:
            author = authors[int(rng.integers(0, spec.n_authors))]
        records.append({
            "video_id": vid,
            "author_id": author,
            "upload_time": _iso(EPOCH_S + t_s),
            "title": _title(rng, theme),
            "description": _title(rng, theme),
            "view_count": int(10 ** rng.uniform(1.5, 4.5)),
            "frames": [{"shot": 0, "path": f"frames/{fname}", "t_offset_s": 0.0}],
        })
        group_of[vid] = group
        frame_idx += 1

    for g, size in enumerate(sizes):
        base = _base_image(rng, spec.height, spec.width)
        theme = theme_names[g % len(theme_names)]
        onset = rng.uniform(0, spec.span_days * 0.5) * 86400.0
        # bigger groups spread further in time: lifespan tracks volume
        gaps = rng.exponential(scale=1.5 * size, size=size - 1) * 86400.0
        times = onset + np.concatenate([[0.0], np.cumsum(gaps)])
        emit(base.copy(), g, theme, float(times[0]))
        for v in range(1, size):
            emit(_jitter(rng, base), g, theme, float(times[v]))

    for _ in range(remaining):
        img = _base_image(rng, spec.height, spec.width)
        theme = theme_names[int(rng.integers(0, len(theme_names)))]
        t_s = rng.uniform(0, spec.span_days) * 86400.0
        emit(img, -1, theme, t_s)

    with open(out / "manifest.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    _write_labels(out / "labels.csv", group_of, rng)
    return {"n_frames": frame_idx, "n_groups": spec.n_groups, "group_of": group_of}


def _iso(t: float) -> str:
    days, rem = divmod(t - EPOCH_S, 86400.0)
    hours, rem = divmod(rem, 3600.0)
    mins, secs = divmod(rem, 60.0)
    base = np.datetime64("2009-01-01") + np.timedelta64(int(days), "D")
    return f"{base}T{int(hours):02d}:{int(mins):02d}:{int(secs):02d}+00:00"


def _write_labels(path: Path, group_of: dict[str, int],
                  rng: np.random.Generator, neg_per_pos: int = 3) -> None:
    """All within-group pairs as positives plus sampled cross-group negatives."""
    by_group: dict[int, list[str]] = {}
    for vid, g in group_of.items():
        if g >= 0:
            by_group.setdefault(g, []).append(vid)
    lines = ["video_a,shot_a,video_b,shot_b,label"]
    n_pos = 0
    for g in sorted(by_group):
        vids = sorted(by_group[g])
        for i in range(len(vids)):
            for j in range(i + 1, len(vids)):
                lines.append(f"{vids[i]},0,{vids[j]},0,1")
                n_pos += 1
    all_vids = sorted(group_of)
    seen = set()
    while len(seen) < neg_per_pos * n_pos:
        a, b = (all_vids[int(i)] for i in rng.integers(0, len(all_vids), 2))
        if a == b or group_of[a] == group_of[b] and group_of[a] >= 0:
            continue
        key = (a, b) if a < b else (b, a)
        if key in seen:
            continue
        seen.add(key)
    for a, b in sorted(seen):
        lines.append(f"{a},0,{b},0,0")
    path.write_text("\n".join(lines) + "\n")
