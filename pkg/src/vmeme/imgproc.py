"""Shot segmentation and keyframe preprocessing.

Works on pre-decoded RGB frames (PNG/PPM on disk, referenced by the corpus
manifest). Both operations are pure per-video and safe to run across videos
in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import cv2
import numpy as np

__all__ = [
    "RawFrame",
    "ShotRecord",
    "PreparedFrame",
    "PrepOptions",
    "DegenerateFrameError",
    "segment_shots",
    "prepare_frame",
    "color_histogram",
    "grayscale_entropy",
]

MIN_FRAME_SIDE = 16


class DegenerateFrameError(ValueError):
    """Frame too small to process after border removal."""


@dataclass(frozen=True)
class RawFrame:
    pixels: np.ndarray  # H x W x 3 uint8, RGB
    video_id: str = ""
    t_offset_s: float = 0.0

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ValueError("expected an H x W x 3 uint8 raster")
        if p.shape[0] < MIN_FRAME_SIDE or p.shape[1] < MIN_FRAME_SIDE:
            raise ValueError(f"frame smaller than {MIN_FRAME_SIDE}px per side")


@dataclass(frozen=True)
class ShotRecord:
    video_id: str
    shot_index: int
    keyframe: RawFrame
    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise ValueError("shot start must precede its end")


@dataclass(frozen=True)
class PreparedFrame:
    pixels: np.ndarray
    blank: bool = False
    border_removed: bool = False


@dataclass(frozen=True)
class PrepOptions:
    blank_entropy: float = 1.0  # bits, 8-bin grayscale histogram
    border_var: float = 25.0    # 8-bit variance cutoff for border rows/cols
    clip_limit: float = 2.0
    tile_grid: int = 8
    target_aspect: float = 4.0 / 3.0


def color_histogram(pixels: np.ndarray, bins: int = 8) -> np.ndarray:
    """Normalized joint RGB histogram with ``bins`` levels per channel."""
    q = (pixels.astype(np.int32) >> 5) if bins == 8 else (
        pixels.astype(np.int32) * bins // 256
    )
    flat = (q[..., 0] * bins + q[..., 1]) * bins + q[..., 2]
    hist = np.bincount(flat.ravel(), minlength=bins ** 3).astype(np.float64)
    return hist / hist.sum()


def grayscale_entropy(pixels: np.ndarray, bins: int = 8) -> float:
    """Shannon entropy (bits) of the grayscale intensity histogram."""
    gray = cv2.cvtColor(pixels, cv2.COLOR_RGB2GRAY)
    hist = np.bincount(gray.ravel().astype(np.int64) * bins // 256,
                       minlength=bins).astype(np.float64)
    p = hist / hist.sum()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def segment_shots(
    frames: Sequence[RawFrame],
    threshold: float,
    seed: int = 0,
    fps: float = 1.0,
) -> list[ShotRecord]:
    """Split a frame sequence into shots by thresholded histogram differences.

    A boundary is placed wherever the L1 distance between consecutive frames'
    normalized color histograms exceeds ``threshold``. One keyframe per shot
    is sampled uniformly at random under ``seed``.
    """
    if len(frames) == 0:
        raise ValueError("cannot segment an empty frame sequence")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    hists = [color_histogram(f.pixels) for f in frames]
    boundaries = [0]
    for i in range(1, len(frames)):
        if float(np.abs(hists[i] - hists[i - 1]).sum()) > threshold:
            boundaries.append(i)
    boundaries.append(len(frames))
    rng = np.random.default_rng(seed)
    shots = []
    video_id = frames[0].video_id
    for shot_index, (a, b) in enumerate(zip(boundaries, boundaries[1:])):
        key = frames[int(rng.integers(a, b))]
        shots.append(ShotRecord(
            video_id=video_id,
            shot_index=shot_index,
            keyframe=key,
            start_s=a / fps,
            end_s=b / fps,
        ))
    return shots


def _strip_uniform_borders(pixels: np.ndarray, var_cutoff: float) -> tuple[np.ndarray, bool]:
    h, w = pixels.shape[:2]
    as_f = pixels.astype(np.float64)
    row_var = as_f.reshape(h, -1).var(axis=1)
    col_var = as_f.transpose(1, 0, 2).reshape(w, -1).var(axis=1)

    def edge_extent(var: np.ndarray) -> tuple[int, int]:
        lo = 0
        while lo < len(var) and var[lo] < var_cutoff:
            lo += 1
        hi = len(var)
        while hi > lo and var[hi - 1] < var_cutoff:
            hi -= 1
        return lo, hi

    top, bottom = edge_extent(row_var)
    left, right = edge_extent(col_var)
    if top == 0 and bottom == h and left == 0 and right == w:
        return pixels, False
    if bottom - top < MIN_FRAME_SIDE or right - left < MIN_FRAME_SIDE:
        raise DegenerateFrameError(
            f"frame degenerates to {bottom - top}x{right - left} after border crop"
        )
    return pixels[top:bottom, left:right], True


def prepare_frame(frame: RawFrame, options: Optional[PrepOptions] = None) -> PreparedFrame:
    """Run the preprocessing chain ahead of feature extraction.

    Order: blank test, uniform-border crop, aspect normalization, 3x3 median
    filter, contrast-limited equalization on the luminance channel. Blank
    frames are flagged and passed through untouched; downstream stages skip
    them.
    """
    opts = options or PrepOptions()
    pixels = frame.pixels
    if grayscale_entropy(pixels) < opts.blank_entropy:
        return PreparedFrame(pixels=pixels.copy(), blank=True)
    pixels, border_removed = _strip_uniform_borders(pixels, opts.border_var)
    h, w = pixels.shape[:2]
    target_w = int(round(h * opts.target_aspect))
    if w != target_w:
        pixels = cv2.resize(pixels, (target_w, h), interpolation=cv2.INTER_AREA)
    pixels = cv2.medianBlur(np.ascontiguousarray(pixels), 3)
    ycc = cv2.cvtColor(pixels, cv2.COLOR_RGB2YCrCb)
    clahe = cv2.createCLAHE(
        clipLimit=opts.clip_limit, tileGridSize=(opts.tile_grid, opts.tile_grid)
    )
    ycc[..., 0] = clahe.apply(ycc[..., 0])
    pixels = cv2.cvtColor(ycc, cv2.COLOR_YCrCb2RGB)
    return PreparedFrame(pixels=pixels, blank=False, border_removed=border_removed)
