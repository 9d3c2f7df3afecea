import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmeme import correlogram as cg
from vmeme.imgproc import PreparedFrame


def _prep(pixels):
    return PreparedFrame(pixels=np.ascontiguousarray(pixels, dtype=np.uint8))


def test_quantize_achromatic_and_chromatic_pixels():
    # pure gray (s = 0) falls in the 4 achromatic bins at the top of the range
    assert cg.quantize_hsv((0, 0, 0)) == 162       # v < 0.25
    assert cg.quantize_hsv((255, 255, 255)) == 165  # v > 0.75
    red = cg.quantize_hsv((255, 0, 0))  # hue 0, s = 1, v = 1 -> bin 0*9+2*3+2
    assert red == 8
    green = cg.quantize_hsv((0, 255, 0))  # hue 120 -> hue bin 6
    assert green == 6 * 9 + 2 * 3 + 2
    assert 0 <= cg.quantize_hsv((13, 200, 77)) < cg.NUM_COLORS


def test_quantize_frame_range(rng):
    img = rng.integers(0, 256, (20, 30, 3)).astype(np.uint8)
    q = cg.quantize_frame(img)
    assert q.shape == (20, 30)
    assert q.min() >= 0 and q.max() < cg.NUM_COLORS


def _brute_stripe(colors, distances):
    """Direct double loop over every pixel pair at L-inf distance d."""
    h, w = colors.shape
    acc = np.zeros(cg.NUM_COLORS)
    for d in distances:
        num = np.zeros(cg.NUM_COLORS)
        den = np.zeros(cg.NUM_COLORS)
        for y in range(h):
            for x in range(w):
                c = colors[y, x]
                for dy in range(-d, d + 1):
                    for dx in range(-d, d + 1):
                        if max(abs(dy), abs(dx)) != d:
                            continue
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < h and 0 <= xx < w:
                            den[c] += 1
                            if colors[yy, xx] == c:
                                num[c] += 1
        prob = np.where(den > 0, num / np.where(den > 0, den, 1), 0.0)
        acc += prob
    return acc / len(distances)


def test_checkerboard_matches_exhaustive_pair_counting():
    # red / blue checkerboard: two colors with clean alternation structure
    img = np.zeros((12, 12, 3), np.uint8)
    img[(np.indices((12, 12)).sum(axis=0) % 2) == 0] = (255, 0, 0)
    img[(np.indices((12, 12)).sum(axis=0) % 2) == 1] = (0, 0, 255)
    colors = cg.quantize_frame(img)
    got = cg._stripe_correlogram(colors, (1, 3, 5, 7))
    want = _brute_stripe(colors, (1, 3, 5, 7))
    assert np.abs(got - want).max() <= 1e-12


def test_random_frame_matches_exhaustive_pair_counting(rng):
    img = rng.integers(0, 256, (10, 14, 3)).astype(np.uint8)
    colors = cg.quantize_frame(img)
    got = cg._stripe_correlogram(colors, (1, 3))
    want = _brute_stripe(colors, (1, 3))
    assert np.abs(got - want).max() <= 1e-12


def test_feature_dimension_and_range(rng):
    img = rng.integers(0, 256, (40, 52, 3)).astype(np.uint8)
    f = cg.extract(_prep(img))
    assert f.values.shape == (cg.FEATURE_DIM,)
    assert np.all(f.values >= 0.0) and np.all(f.values <= 1.0)
    assert np.all(np.isfinite(f.values))


def test_uniform_frame_is_single_color_indicator():
    img = np.zeros((30, 40, 3), np.uint8)
    img[:] = (255, 0, 0)
    f = cg.extract(_prep(img))
    c = cg.quantize_hsv((255, 0, 0))
    # same-color probability 1 at the uniform color in both stripes, 0 elsewhere
    expect = np.zeros(cg.FEATURE_DIM)
    expect[c] = 1.0
    expect[cg.NUM_COLORS + c] = 1.0
    assert np.array_equal(f.values, expect)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(20, 41), st.integers(20, 41))
def test_flip_invariance(seed, h, w):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (h, w, 3)).astype(np.uint8)
    f = cg.extract(_prep(img)).values
    f_h = cg.extract(_prep(img[:, ::-1])).values   # horizontal mirror
    f_v = cg.extract(_prep(img[::-1, :])).values   # vertical mirror
    assert np.array_equal(f, f_h)
    assert np.array_equal(f, f_v)


def test_blank_and_degenerate_frames_rejected(rng):
    img = rng.integers(0, 256, (30, 40, 3)).astype(np.uint8)
    with pytest.raises(ValueError):
        cg.extract(PreparedFrame(pixels=img, blank=True))
    tiny = rng.integers(0, 256, (1, 40, 3)).astype(np.uint8)
    with pytest.raises(ValueError):
        cg.extract(_prep(tiny))


def test_collection_max_matches_columnwise_oracle(rng):
    feats = [cg.CorrelogramFeature(rng.random(cg.FEATURE_DIM)) for _ in range(9)]
    fmax = cg.collection_max(feats)
    want = np.max(np.stack([f.values for f in feats]), axis=0)
    assert np.array_equal(fmax.values, want)
    with pytest.raises(ValueError):
        cg.collection_max([])


def test_feature_io_roundtrip(tmp_path, rng):
    mat = rng.random((7, cg.FEATURE_DIM)).astype(np.float32)
    path = tmp_path / "f.bin"
    cg.write_features(path, mat)
    back = cg.read_features(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, mat)
    assert path.read_bytes()[:4] == b"VMF1"


def test_read_features_rejects_garbage(tmp_path):
    path = tmp_path / "f.bin"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(ValueError):
        cg.read_features(path)
