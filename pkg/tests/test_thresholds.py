import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mastersample.coverage import (
    PairScores,
    ThresholdWarning,
    combined_rates,
    combined_threshold_grid,
    far_frr,
    normalize_scores,
    threshold_at_eer,
    threshold_at_far,
)

distances = st.lists(st.floats(0.0, 10.0), min_size=1, max_size=40)


def test_far_frr_extremes():
    s = PairScores([0.3, 0.4], [0.5, 0.9])
    assert far_frr(s, 0.1) == (0.0, 1.0)
    assert far_frr(s, 1.0) == (1.0, 0.0)


def test_far_frr_by_hand():
    assert far_frr(PairScores([0.1, 0.3], [0.2, 0.8]), 0.25) == (0.5, 0.5)


def test_far_frr_rejects_empty():
    with pytest.raises(ValueError):
        far_frr(PairScores([], [0.1]), 0.5)
    with pytest.raises(ValueError):
        far_frr(PairScores([0.1], []), 0.5)


@settings(max_examples=200, deadline=None)
@given(distances, distances, st.floats(-1.0, 11.0))
def test_far_frr_matches_brute_force(gen, imp, theta):
    far, frr = far_frr(PairScores(gen, imp), theta)
    ofar, ofrr = oracles.far_frr(gen, imp, theta)
    assert abs(far - ofar) <= 1e-12 and abs(frr - ofrr) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(distances, distances, st.lists(st.floats(-1.0, 11.0), min_size=2, max_size=20))
def test_far_and_frr_are_monotone(gen, imp, thetas):
    t = np.sort(thetas)
    far, frr = far_frr(PairScores(gen, imp), t)
    assert np.all(np.diff(far) >= 0)
    assert np.all(np.diff(frr) <= 0)


# ------------------------------------------------------------- FAR target

def test_threshold_at_far_uniform_impostors():
    imp = np.random.default_rng(0).random(1000)
    s = PairScores([0.0], imp)
    theta = threshold_at_far(s, 0.001)
    assert far_frr(s, theta)[0] <= 0.001
    assert theta <= np.sort(imp)[1]  # at most one impostor below it


def test_threshold_at_far_target_one():
    imp = np.linspace(0.1, 1.0, 10)
    theta = threshold_at_far(PairScores([0.0], imp), 1.0)
    assert theta > imp.max()


def test_threshold_at_far_tenths():
    imp = np.array([0.1 * k for k in range(1, 11)])
    s = PairScores([0.0], imp)
    theta = threshold_at_far(s, 0.25)
    assert far_frr(s, theta)[0] == 0.2


def test_threshold_at_far_unattainable_warns():
    imp = np.array([0.5, 0.2, 0.9])
    with pytest.warns(ThresholdWarning):
        theta = threshold_at_far(PairScores([0.0], imp), 0.001)
    assert theta == 0.2


def test_threshold_at_far_rejects_bad_target():
    with pytest.raises(ValueError):
        threshold_at_far(PairScores([0.0], [1.0]), 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=20, max_size=60), st.floats(0.05, 1.0))
def test_threshold_at_far_is_largest_feasible_cut(imp, target):
    s = PairScores([0.0], imp)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ThresholdWarning)
        theta = threshold_at_far(s, target)
    assert far_frr(s, theta)[0] <= target
    u = np.unique(imp)
    bigger = np.concatenate([u, (u[:-1] + u[1:]) / 2, [np.nextafter(u[-1], np.inf)]])
    for t in bigger[bigger > theta]:
        assert far_frr(s, t)[0] > target


# -------------------------------------------------------------------- EER

def test_eer_symmetric_distributions():
    gen = np.random.default_rng(1).normal(0.35, 0.1, 2000)
    imp = 1.0 - gen  # mirror image around 0.5
    s = PairScores(gen, imp)
    theta, eer = threshold_at_eer(s)
    far, frr = far_frr(s, theta)
    assert far == pytest.approx(frr, abs=1e-12)  # 1 - k/n rounds differently from k/n
    below = np.max(np.concatenate([gen, imp])[np.concatenate([gen, imp]) < 0.5])
    above = np.min(np.concatenate([gen, imp])[np.concatenate([gen, imp]) > 0.5])
    assert below <= theta <= above


def test_eer_separable():
    theta, eer = threshold_at_eer(PairScores([0.1, 0.2, 0.3], [0.7, 0.8]))
    assert eer == 0.0
    assert 0.3 < theta <= 0.7


def test_eer_single_pairs():
    theta, eer = threshold_at_eer(PairScores([0.1], [0.9]))
    assert eer == 0.0
    assert 0.1 < theta <= 0.9


@settings(max_examples=150, deadline=None)
@given(distances, distances, st.lists(st.floats(-1.0, 11.0), min_size=1, max_size=30))
def test_eer_gap_is_minimal(gen, imp, probes):
    s = PairScores(gen, imp)
    theta, eer = threshold_at_eer(s)
    far, frr = far_frr(s, theta)
    assert eer == pytest.approx((far + frr) / 2)
    best = abs(far - frr)
    for t in list(probes) + list(gen) + list(imp):
        f, r = far_frr(s, t)
        assert abs(f - r) >= best - 1e-15


# ---------------------------------------------------------- combined grid

def test_normalize_scores():
    s = PairScores([0.5, 1.0], [2.0, 4.0])
    n, scale = normalize_scores(s, "euclidean")
    assert scale == 4.0 and n.impostor.max() == 1.0
    n, scale = normalize_scores(s, "cosine")
    assert scale == 2.0
    np.testing.assert_array_equal(n.genuine, [0.25, 0.5])


def paired_scores(seed, n_gen=300, n_imp=3000):
    rng = np.random.default_rng(seed)

    def model():
        return PairScores(np.clip(rng.normal(0.35, 0.1, n_gen), 0, 1), np.clip(rng.normal(0.6, 0.1, n_imp), 0, 1))

    return model(), model()


def test_grid_with_accept_all_second_model_reduces_to_single_eer():
    a, _ = paired_scores(0)
    b = PairScores(np.zeros_like(a.genuine), np.zeros_like(a.impostor))
    ta, tb, eer = combined_threshold_grid(a, b, 100)
    theta, single = threshold_at_eer(a)
    assert abs(ta - theta) <= 2 / 99
    assert tb > 0
    assert abs(eer - single) <= 0.02


def test_grid_with_identical_models():
    a, _ = paired_scores(1)
    ta, tb, eer = combined_threshold_grid(a, a, 100)
    theta, single = threshold_at_eer(a)
    assert ta == tb
    assert abs(ta - theta) <= 2 / 99


@pytest.mark.parametrize("seed", range(3))
def test_grid_matches_exhaustive_oracle_at_resolution_20(seed):
    a, b = paired_scores(seed, n_gen=60, n_imp=200)
    ta, tb, eer = combined_threshold_grid(a, b, 20)
    gap, ota, otb, oeer = oracles.combined_grid(a.genuine.tolist(), a.impostor.tolist(),
                                                b.genuine.tolist(), b.impostor.tolist(), 20)
    assert (ta, tb) == pytest.approx((ota, otb), abs=1e-12)
    assert eer == pytest.approx(oeer, abs=1e-12)
    far, frr = combined_rates(a, b, ta, tb)
    assert abs(far - frr) == pytest.approx(gap, abs=1e-12)


def test_grid_rejects_misaligned_pairs():
    a, b = paired_scores(0)
    short = PairScores(b.genuine[:-1], b.impostor)
    with pytest.raises(ValueError):
        combined_threshold_grid(a, short, 10)


def test_combined_rates_are_conjunctive():
    a, b = paired_scores(2)
    far, frr = combined_rates(a, b, 0.5, 0.5)
    fa, ra = far_frr(a, 0.5)
    fb, rb = far_frr(b, 0.5)
    assert far <= min(fa, fb)
    assert frr >= max(ra, rb)
