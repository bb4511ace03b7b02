import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpsn import sfa
from dpsn.errors import ConfigError, DataError
from dpsn.sfa import SfaBins, SfaParams, SfaVocabulary, dft_truncate, fit_bins, fit_transform, histogram, word_of
from dpsn.tscore import Dataset, TimeSeries

from oracles import naive_truncate, sorted_quantile


def test_params_validation():
    with pytest.raises(ConfigError):
        SfaParams(window_len=6, num_coeffs=4)
    with pytest.raises(ConfigError):
        SfaParams(window_len=16, num_coeffs=2, alphabet_size=1)
    p = SfaParams(16, 2)
    assert (p.alphabet_size, p.stride, p.mean_norm) == (4, 1, True)


class TestDftTruncate:
    def test_zero_window(self):
        assert not dft_truncate(np.zeros(16), SfaParams(16, 3)).any()

    def test_pure_cosine(self):
        L = 16
        coeffs = dft_truncate(np.cos(2 * np.pi * np.arange(L) / L), SfaParams(L, 1, mean_norm=True))
        assert abs(abs(coeffs[0]) - L / 2) < 1e-9
        assert abs(coeffs[1]) < 1e-9

    def test_layout_without_mean_norm(self):
        x = np.arange(8.0)
        out = dft_truncate(x, SfaParams(8, 2, mean_norm=False))
        assert out[0] == pytest.approx(28.0)
        assert out[1] == 0.0

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            dft_truncate(np.zeros(5), SfaParams(6, 2))

    @settings(max_examples=200)
    @given(st.integers(2, 24).flatmap(lambda n: st.tuples(
        arrays(np.float64, n, elements=st.floats(-100, 100)),
        st.integers(1, n // 2),
        st.booleans())))
    def test_matches_naive_dft(self, case):
        x, w, mean_norm = case
        params = SfaParams(x.size, w, mean_norm=mean_norm)
        np.testing.assert_allclose(dft_truncate(x, params), naive_truncate(list(x), w, mean_norm), atol=1e-9)


class TestFitBins:
    def test_median(self):
        bins = fit_bins([[1.0, 0], [2.0, 0], [3.0, 0], [4.0, 0]], SfaParams(4, 1, alphabet_size=2))
        assert bins.breakpoints[0].tolist() == [2.5]

    def test_constant_column(self):
        params = SfaParams(4, 1, alphabet_size=4)
        bins = fit_bins([[5.0, 5.0]] * 4, params)
        assert bins.breakpoints[0].tolist() == [5.0, 5.0, 5.0]
        assert word_of(np.array([5.0, 5.0]), bins) == "00"

    def test_quantiles_of_1_to_100(self):
        values = np.arange(1.0, 101.0)
        bins = fit_bins(np.c_[values, values], SfaParams(4, 1, alphabet_size=4))
        expected = [sorted_quantile(values, q) for q in (0.25, 0.5, 0.75)]
        assert expected == [25.75, 50.5, 75.25]
        np.testing.assert_allclose(bins.breakpoints[0], expected)

    def test_breakpoints_non_decreasing(self):
        rng = np.random.default_rng(0)
        bins = fit_bins(rng.normal(size=(50, 6)), SfaParams(12, 3, alphabet_size=5))
        assert bins.breakpoints.shape == (6, 4)
        assert np.all(np.diff(bins.breakpoints, axis=1) >= 0)

    def test_empty(self):
        with pytest.raises(DataError):
            fit_bins(np.zeros((0, 2)), SfaParams(4, 1))


class TestWordOf:
    bins = SfaBins(np.array([[2.5], [0.0]]))

    def test_hand_evaluated(self):
        assert word_of(np.array([3.0, -1.0]), self.bins) == "10"

    def test_below_all(self):
        assert word_of(np.array([-10.0, -10.0]), self.bins) == "00"

    def test_boundary_goes_low(self):
        assert word_of(np.array([2.5, 0.0]), self.bins) == "00"


def _dataset(rows, labels):
    return Dataset.from_arrays(rows, labels)


class TestHistogram:
    params = SfaParams(8, 2)

    def test_constant_series(self):
        ts = TimeSeries(0, np.full(30, 2.0), 0)
        bins = SfaBins(np.zeros((4, 3)))
        counts = histogram(ts, bins, self.params)
        assert sum(counts.values()) == 1 and len(counts) == 1

    def test_unseen_words_drop(self):
        ts = TimeSeries(0, np.full(30, 2.0), 0)
        bins = SfaBins(np.zeros((4, 3)))
        vec = histogram(ts, bins, self.params, SfaVocabulary(("3333", "1111")))
        assert vec.tolist() == [0.0, 0.0]

    def test_shorter_than_window(self):
        with pytest.raises(DataError):
            histogram(TimeSeries(0, np.zeros(5), 0), SfaBins(np.zeros((4, 3))), self.params)

    def test_numerosity_reduction_on_constant_tail(self):
        rng = np.random.default_rng(3)
        base = np.r_[rng.normal(size=40), np.zeros(12)]
        ds = _dataset([base, rng.normal(size=52)], [0, 1])
        model, _ = sfa.fit(ds, self.params)
        # the tail windows are already constant; extending it repeats the same word
        longer = np.r_[base, 0.0]
        np.testing.assert_array_equal(model.transform([TimeSeries(0, base, 0)]),
                                      model.transform([TimeSeries(0, longer, 0)]))


def _sine_square(rng, n_each=2, length=96):
    rows, labels = [], []
    t = np.arange(length)
    for _ in range(n_each):
        rows.append(np.sin(2 * np.pi * (t + rng.uniform(0, 16)) / 16) + rng.normal(0, 0.1, length))
        labels.append(0)
    for _ in range(n_each):
        rows.append(np.sign(np.sin(2 * np.pi * (t + rng.uniform(0, 40)) / 40)) + rng.normal(0, 0.1, length))
        labels.append(1)
    return _dataset(rows, labels)


class TestFitTransform:
    params = SfaParams(16, 2)

    def test_single_series(self):
        rng = np.random.default_rng(1)
        ds = _dataset([rng.normal(size=64)], [0])
        bins, vocab, feats = fit_transform(ds, self.params)
        words = sfa.words_of_series(ds.series[0], bins, self.params)
        assert len(vocab) == len(set(words))
        assert feats.shape == (1, len(vocab))

    def test_identical_series(self):
        x = np.random.default_rng(2).normal(size=64)
        _, _, feats = fit_transform(_dataset([x, x], [0, 1]), self.params)
        np.testing.assert_array_equal(feats[0], feats[1])

    def test_pruning_rule(self):
        ds = _sine_square(np.random.default_rng(4), n_each=4)
        _, vocab, feats = fit_transform(ds, self.params)
        assert np.all(feats.max(axis=0) > 0)
        assert np.all(feats >= 0) and np.all(feats == np.round(feats))
        assert list(vocab.words) == sorted(vocab.words)

    def test_same_class_closer(self):
        ds = _sine_square(np.random.default_rng(5))
        _, _, f = fit_transform(ds, SfaParams(24, 2))
        d = lambda i, j: np.linalg.norm(f[i] - f[j])
        assert d(0, 1) < min(d(0, 2), d(0, 3), d(1, 2), d(1, 3))

    def test_deterministic(self):
        ds = _sine_square(np.random.default_rng(6))
        a, b = sfa.fit(ds, self.params), sfa.fit(ds, self.params)
        assert a[0].to_dict() == b[0].to_dict()
        assert a[1].tobytes() == b[1].tobytes()

    def test_transform_reproduces_training_features(self):
        ds = _sine_square(np.random.default_rng(7))
        model, feats = sfa.fit(ds, self.params)
        np.testing.assert_array_equal(model.transform(ds), feats)

    def test_json_round_trip(self, tmp_path):
        ds = _sine_square(np.random.default_rng(8))
        model, feats = sfa.fit(ds, self.params)
        model.save(tmp_path / "sfa.json")
        loaded = sfa.SfaModel.load(tmp_path / "sfa.json")
        assert loaded.params == model.params
        assert loaded.bins.breakpoints.tobytes() == model.bins.breakpoints.tobytes()
        np.testing.assert_array_equal(loaded.transform(ds), feats)

    def test_series_too_short(self):
        ds = _dataset([np.zeros(10), np.zeros(40)], [0, 1])
        with pytest.raises(DataError, match="shrink"):
            sfa.fit(ds, self.params)


def test_select_params_prefers_separating_window():
    ds = _sine_square(np.random.default_rng(9), n_each=4)
    best = sfa.select_params(ds, grid=[(16, 2), (32, 2)])
    acc = sfa.loo_1nn_accuracy(sfa.fit(ds, best)[1], ds.labels)
    for L, w in [(16, 2), (32, 2)]:
        other = sfa.loo_1nn_accuracy(sfa.fit(ds, SfaParams(L, w))[1], ds.labels)
        assert acc >= other


def test_default_grid_respects_constraints():
    grid = sfa.default_grid(60)
    assert grid and all(2 * w <= L <= 60 for L, w in grid)
    assert math.isclose(max(L for L, _ in grid), 60)
