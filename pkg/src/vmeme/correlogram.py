"""Cross-layout HSV auto-correlogram descriptor (332 dimensions).

The descriptor quantizes pixels into a 166-bin perceptual HSV space and, for
each color, measures the probability that a pixel at L-infinity distance d
from a pixel of that color shares the color, averaged over a small distance
set. It is computed separately on the central horizontal and vertical image
stripes ("cross" layout) and the two 166-d blocks are concatenated.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .imgproc import PreparedFrame

__all__ = [
    "NUM_COLORS",
    "FEATURE_DIM",
    "DEFAULT_DISTANCES",
    "CorrelogramFeature",
    "CollectionMaxFeature",
    "quantize_hsv",
    "quantize_frame",
    "extract",
    "collection_max",
    "write_features",
    "read_features",
]

NUM_COLORS = 166           # 18 hue x 3 sat x 3 value chromatic + 4 gray bins
FEATURE_DIM = 2 * NUM_COLORS
DEFAULT_DISTANCES = (1, 3, 5, 7)

_HUE_BINS = 18
_GRAY_BASE = _HUE_BINS * 9  # chromatic bins occupy [0, 162)
_SAT_ACHROMATIC = 0.1
_SAT_CUTS = (0.25, 0.7)
_VAL_CUTS = (0.25, 0.7)
_GRAY_CUTS = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class CorrelogramFeature:
    values: np.ndarray  # (332,) float64
    frame_ref: tuple[str, int] = ("", 0)

    def __post_init__(self):
        if self.values.shape != (FEATURE_DIM,):
            raise ValueError(f"expected a {FEATURE_DIM}-d feature vector")

    @property
    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class CollectionMaxFeature:
    values: np.ndarray

    @property
    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.values))


def _rgb_to_hsv(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rgb = pixels.astype(np.float64) / 255.0
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    v = mx
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    safe = np.where(delta > 0, delta, 1.0)
    h = np.where(
        mx == r, (g - b) / safe,
        np.where(mx == g, 2.0 + (b - r) / safe, 4.0 + (r - g) / safe),
    )
    h = (h * 60.0) % 360.0
    h = np.where(delta > 0, h, 0.0)
    return h, s, v


def _bin_by_cuts(x: np.ndarray, cuts: Sequence[float]) -> np.ndarray:
    return np.searchsorted(np.asarray(cuts), x, side="right").astype(np.int64)


def quantize_frame(pixels: np.ndarray) -> np.ndarray:
    """Map an H x W x 3 uint8 RGB raster to color indices in [0, 166)."""
    h, s, v = _rgb_to_hsv(pixels)
    hue_bin = (h // (360.0 / _HUE_BINS)).astype(np.int64) % _HUE_BINS
    sat_bin = _bin_by_cuts(s, _SAT_CUTS)
    val_bin = _bin_by_cuts(v, _VAL_CUTS)
    chromatic = hue_bin * 9 + sat_bin * 3 + val_bin
    gray = _GRAY_BASE + _bin_by_cuts(v, _GRAY_CUTS)
    return np.where(s < _SAT_ACHROMATIC, gray, chromatic)


def quantize_hsv(pixel: Sequence[int]) -> int:
    """Color index for a single 8-bit RGB triple."""
    arr = np.asarray(pixel, dtype=np.uint8).reshape(1, 1, 3)
    return int(quantize_frame(arr)[0, 0])


def _ring_offsets(d: int) -> list[tuple[int, int]]:
    """All (dy, dx) with max(|dy|, |dx|) == d."""
    offsets = []
    for dy in range(-d, d + 1):
        for dx in range(-d, d + 1):
            if max(abs(dy), abs(dx)) == d:
                offsets.append((dy, dx))
    return offsets


def _stripe_correlogram(colors: np.ndarray, distances: Sequence[int]) -> np.ndarray:
    """Per-color same-color probability averaged over the distance set.

    Pair counting truncates at stripe boundaries; each probability is
    normalized by the actually in-bounds pair count so edges carry no bias.
    """
    h, w = colors.shape
    acc = np.zeros(NUM_COLORS, dtype=np.float64)
    for d in distances:
        num = np.zeros(NUM_COLORS, dtype=np.int64)
        den = np.zeros(NUM_COLORS, dtype=np.int64)
        for dy, dx in _ring_offsets(d):
            y0, y1 = max(0, -dy), min(h, h - dy)
            x0, x1 = max(0, -dx), min(w, w - dx)
            if y0 >= y1 or x0 >= x1:
                continue
            a = colors[y0:y1, x0:x1]
            b = colors[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
            den += np.bincount(a.ravel(), minlength=NUM_COLORS)
            eq = a[a == b]
            if eq.size:
                num += np.bincount(eq, minlength=NUM_COLORS)
        prob = np.zeros(NUM_COLORS, dtype=np.float64)
        nz = den > 0
        prob[nz] = num[nz] / den[nz]
        acc += prob
    return acc / len(distances)


def _centered_extent(total: int) -> tuple[int, int]:
    """Central-third slice, widened by one if needed so it is exactly
    centered (required for bitwise flip invariance)."""
    width = max(1, total // 3)
    if (total - width) % 2 != 0:
        width += 1
    start = (total - width) // 2
    return start, start + width


def extract(
    frame: PreparedFrame,
    distances: Sequence[int] = DEFAULT_DISTANCES,
    frame_ref: tuple[str, int] = ("", 0),
) -> CorrelogramFeature:
    """Extract the 332-d cross-layout auto-correlogram of a prepared frame."""
    if frame.blank:
        raise ValueError("refusing to extract features from a blank frame")
    if not distances:
        raise ValueError("distance set must be non-empty")
    pixels = frame.pixels
    h, w = pixels.shape[:2]
    r0, r1 = _centered_extent(h)
    c0, c1 = _centered_extent(w)
    if r1 - r0 <= 1 or c1 - c0 <= 1 or h <= 1 or w <= 1:
        raise ValueError("stripe degenerate: frame too small for cross layout")
    colors = quantize_frame(pixels)
    horizontal = _stripe_correlogram(colors[r0:r1, :], distances)
    vertical = _stripe_correlogram(colors[:, c0:c1], distances)
    return CorrelogramFeature(np.concatenate([horizontal, vertical]), frame_ref)


def collection_max(features: Iterable[CorrelogramFeature]) -> CollectionMaxFeature:
    """Coordinate-wise maximum over a feature stream (order-independent)."""
    best: Optional[np.ndarray] = None
    for f in features:
        if best is None:
            best = f.values.copy()
        else:
            np.maximum(best, f.values, out=best)
    if best is None:
        raise ValueError("cannot take the max of an empty feature stream")
    return CollectionMaxFeature(best)


_MAGIC = b"VMF1"


def write_features(path: str | Path, matrix: np.ndarray) -> None:
    """Write a feature matrix: magic 'VMF1', u32 count, u32 dim, f32-LE rows."""
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise ValueError("expected a 2-d feature matrix")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.astype("<f4").tobytes(order="C"))


def read_features(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"bad feature file magic {magic!r}")
        count, dim = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(count * dim * 4), dtype="<f4")
    if data.size != count * dim:
        raise ValueError("truncated feature file")
    return data.reshape(count, dim).astype(np.float32)


def feature_matrix(features: Sequence[CorrelogramFeature]) -> np.ndarray:
    return np.stack([f.values for f in features]).astype(np.float64)
