import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmeme import predict as pr
from vmeme.memedetect import MemeCluster

from conftest import DAY, make_corpus


def test_aggregate_order_and_values():
    out = pr._aggregate([1.0, 2.0, 3.0, 10.0])
    assert out[0] == 10.0                       # max
    assert out[1] == pytest.approx(4.0)         # mean
    assert out[2] == pytest.approx(2.5)         # median
    assert out[3] == pytest.approx(np.std([1, 2, 3, 10]))


def _tau_oracle(x, y):
    """O(n^2) concordant/discordant pair counting (tau-b)."""
    n = len(x)
    conc = disc = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            a = np.sign(x[i] - x[j])
            b = np.sign(y[i] - y[j])
            if a == 0 and b == 0:
                continue
            if a == 0:
                tx += 1
            elif b == 0:
                ty += 1
            elif a == b:
                conc += 1
            else:
                disc += 1
    denom = math.sqrt((conc + disc + tx) * (conc + disc + ty))
    return (conc - disc) / denom if denom else 0.0


def test_kendall_tau_matches_pair_counting_oracle(rng):
    for trial in range(5):
        x = rng.integers(0, 8, 40).astype(float)  # ties included
        y = x + rng.normal(0, 2, 40)
        assert pr.kendall_tau(x, y) == pytest.approx(_tau_oracle(x, y), abs=1e-12)


def test_kendall_tau_constant_convention():
    assert pr.kendall_tau([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]) == 0.0
    assert pr.kendall_tau([1.0, 2.0, 3.0], [5.0, 5.0, 5.0]) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=3, max_size=25),
       st.integers(0, 2 ** 31 - 1))
def test_kendall_tau_property(xs, seed)  :
    rng = np.random.default_rng(seed)
    x = np.array(xs, dtype=float)
    y = rng.normal(0, 1, len(x))
    assert pr.kendall_tau(x, y) == pytest.approx(_tau_oracle(x, y), abs=1e-12)


def _toy_rows(rng, n=60, with_signal=True):
    rows = []
    for i in range(n):
        y = rng.uniform(0.5, 3.0)
        strong = y + rng.normal(0, 0.1, 4) if with_signal else rng.normal(0, 1, 4)
        rows.append(pr.MemeFeatureRow(
            meme_id=i,
            blocks={
                "volume_d1": np.array([rng.normal(0, 1)]),
                "connectivity": strong,
                "influence": rng.normal(0, 1, 3),
                "txt": rng.normal(0, 1, 2),
                "vmeme": rng.normal(0, 1, 2),
            },
            presence={"txt": 1.0, "vmeme": 1.0},
            log_volume=y,
            log_lifespan_days=y / 2,
        ))
    return rows


def test_filter_features_matches_columnwise_pearson(rng):
    rows = _toy_rows(rng)
    x = pr._matrix(rows, ("connectivity", "influence"))
    y = np.array([r.log_volume for r in rows])
    x_kept, _, kept = pr.filter_features(x, y, min_corr=0.03)
    want = [j for j in range(x.shape[1])
            if abs(np.corrcoef(x[:, j], y)[0, 1]) >= 0.03]
    assert kept.tolist() == want
    assert np.array_equal(x_kept, x[:, want])
    with pytest.raises(ValueError):
        pr.filter_features(x, y, min_corr=1.1)  # everything dropped


def test_matrix_appends_presence_flags(rng):
    rows = _toy_rows(rng, n=5)
    x = pr._matrix(rows, ("txt",))
    assert x.shape == (5, 3)  # 2 txt dims + presence flag
    assert np.all(x[:, 2] == 1.0)


def test_train_regressor_requires_enough_rows(rng):
    rows = _toy_rows(rng, n=10)
    x = pr._matrix(rows, ("connectivity",))
    y = np.array([r.log_volume for r in rows])
    with pytest.raises(ValueError):
        pr.train_regressor(x, y)


def test_evaluate_regressor_finds_planted_signal(rng):
    rows = _toy_rows(rng, n=80)
    report = pr.evaluate_regressor(
        rows, target="volume",
        feature_sets={"volume_d1": ("volume_d1",), "connectivity": ("connectivity",)},
        n_splits=3, seed=0,
        grid=[{"svr__kernel": ["rbf"], "svr__C": [1.0]}],
    )
    assert report.mean("connectivity", "mse") < report.mean("volume_d1", "mse")
    assert report.mean("connectivity", "corr") > 0.9


def test_assemble_features_prunes_small_memes():
    specs = [(f"v{i}", f"a{i}", i * DAY / 4) for i in range(8)]
    corpus = make_corpus(specs)
    big = MemeCluster(0, frozenset((f"v{i}", 0) for i in range(5)))
    small = MemeCluster(1, frozenset({("v5", 0), ("v6", 0), ("v7", 0)}))
    rows = pr.assemble_features([big, small], corpus)
    assert [r.meme_id for r in rows] == [0]
    r = rows[0]
    assert r.log_volume == pytest.approx(math.log10(5))
    assert r.log_lifespan_days == pytest.approx(math.log10(1 + 1.0))  # 1 day span
    assert r.blocks["volume_d1"].shape == (1,)
    assert r.blocks["connectivity"].shape == (28,)
    assert r.blocks["influence"].shape == (16,)
    # no topic model supplied: text/meme content blocks absent flags zero
    assert r.presence["txt"] == 0.0


def test_assemble_features_early_window_excludes_late_videos():
    # 5 videos: 3 within a day of onset, 2 much later
    specs = [("v0", "a0", 0), ("v1", "a1", DAY / 2), ("v2", "a2", DAY * 0.9),
             ("v3", "a3", 10 * DAY), ("v4", "a4", 20 * DAY)]
    corpus = make_corpus(specs)
    meme = MemeCluster(0, frozenset((f"v{i}", 0) for i in range(5)))
    row = pr.assemble_features([meme], corpus)[0]
    assert row.blocks["volume_d1"][0] == 3.0  # only the first-day videos
    assert row.log_volume == pytest.approx(math.log10(5))  # target uses all
