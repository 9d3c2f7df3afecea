import numpy as np
import pytest

from vmeme import imgproc


def _flat(color, h=32, w=32):
    img = np.zeros((h, w, 3), np.uint8)
    img[:] = color
    return img


def _noisy(rng, h=48, w=64):
    return rng.integers(0, 256, (h, w, 3)).astype(np.uint8)


def test_rawframe_validates_shape_and_size():
    with pytest.raises(ValueError):
        imgproc.RawFrame(np.zeros((8, 8, 3), np.uint8))
    with pytest.raises(ValueError):
        imgproc.RawFrame(np.zeros((32, 32), np.uint8))
    with pytest.raises(ValueError):
        imgproc.RawFrame(np.zeros((32, 32, 3), np.float64))


def test_color_histogram_normalized_and_localized():
    hist = imgproc.color_histogram(_flat((255, 0, 0)))
    assert hist.sum() == pytest.approx(1.0)
    # pure red lands in exactly one joint bin: (7, 0, 0)
    assert hist[(7 * 8 + 0) * 8 + 0] == 1.0


def test_grayscale_entropy_bounds(rng):
    assert imgproc.grayscale_entropy(_flat((128, 128, 128))) == 0.0
    e = imgproc.grayscale_entropy(_noisy(rng))
    assert 0.0 < e <= 3.0  # 8 bins -> at most 3 bits


def _shot_oracle(frames, threshold):
    """Boundary positions by direct pairwise histogram comparison."""
    bounds = []
    for i in range(1, len(frames)):
        d = np.abs(imgproc.color_histogram(frames[i].pixels)
                   - imgproc.color_histogram(frames[i - 1].pixels)).sum()
        if d > threshold:
            bounds.append(i)
    return bounds


def test_segment_shots_matches_pairwise_oracle(rng):
    frames = []
    for scene in range(3):
        base = _noisy(rng)
        for _ in range(4):
            jit = np.clip(base.astype(int) + rng.integers(-3, 4, base.shape), 0, 255)
            frames.append(imgproc.RawFrame(jit.astype(np.uint8), "v"))
    shots = imgproc.segment_shots(frames, threshold=0.5, seed=0)
    bounds = _shot_oracle(frames, 0.5)
    assert len(shots) == len(bounds) + 1
    starts = [int(s.start_s) for s in shots]
    assert starts == [0] + bounds  # fps=1 -> start time == frame index


def test_segment_shots_keyframe_deterministic(rng):
    frames = [imgproc.RawFrame(_noisy(rng), "v") for _ in range(8)]
    a = imgproc.segment_shots(frames, threshold=2.5, seed=3)
    b = imgproc.segment_shots(frames, threshold=2.5, seed=3)
    assert [s.keyframe.pixels.tobytes() for s in a] == \
           [s.keyframe.pixels.tobytes() for s in b]


def test_segment_shots_empty_raises():
    with pytest.raises(ValueError):
        imgproc.segment_shots([], threshold=0.5)


def test_prepare_strips_uniform_border(rng):
    inner = _noisy(rng, 40, 40)
    img = np.zeros((56, 56, 3), np.uint8)
    img[8:48, 8:48] = inner
    prepared = imgproc.prepare_frame(imgproc.RawFrame(img, "v"))
    assert prepared.border_removed
    assert not prepared.blank


def test_prepare_flags_blank_frame():
    prepared = imgproc.prepare_frame(imgproc.RawFrame(_flat((200, 200, 200)), "v"))
    assert prepared.blank


def test_prepare_normalizes_aspect(rng):
    img = _noisy(rng, 60, 200)  # much wider than 4:3
    prepared = imgproc.prepare_frame(imgproc.RawFrame(img, "v"))
    h, w = prepared.pixels.shape[:2]
    assert h == 60
    assert w == round(h * 4 / 3)


def test_prepare_keeps_conforming_frame_size(rng):
    img = _noisy(rng, 60, 80)  # exactly 4:3
    prepared = imgproc.prepare_frame(imgproc.RawFrame(img, "v"))
    assert prepared.pixels.shape[:2] == (60, 80)
