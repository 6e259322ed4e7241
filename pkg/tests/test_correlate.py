import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from photonstat import (
    BinnedCountStream,
    CoherenceModel,
    FormatError,
    GmnCurve,
    SimConfig,
    StreamingCorrelator,
    ThermalParams,
    TimeTagStream,
    bin_timetags,
    correlate_ptag,
    counts_to_timetags,
    estimate_gmn,
    g_m0,
    g_mn,
    gmn_tallies,
    peak_background_normalize,
    sample_joint_counts,
    simulate,
    spatial_scan,
    spatial_scans,
)
from photonstat.correlate import iter_ptag_bins, worker_count
from photonstat.formats import write_ptag


def brute_force(c1, c2, m, n, max_lag):
    """Literal per-lag estimator, one lag at a time."""
    N = len(c1)
    out = {}
    for k in range(-max_lag, max_lag + 1):
        idx = [t for t in range(N) if 0 <= t + k < N]
        a = sum(1 for t in idx if c1[t] == m)
        b = sum(1 for t in idx if c2[t + k] == n)
        co = sum(1 for t in idx if c1[t] == m and c2[t + k] == n)
        out[k] = (co, a, b, len(idx))
    return out


def stream(c1, c2, bw=1e-6):
    return BinnedCountStream(bw, np.asarray(c1, dtype=np.int64), np.asarray(c2, dtype=np.int64))


count_arrays = hnp.arrays(np.int64, st.integers(30, 120), elements=st.integers(0, 3))


class TestBinning:
    def test_empty(self):
        out = bin_timetags(TimeTagStream(1e-12, np.zeros(0), np.zeros(0)), 5e-12)
        assert out.n_bins == 0

    def test_direct_counting(self):
        tags = TimeTagStream(1e-12, [0, 3, 7], [1, 1, 1])
        out = bin_timetags(tags, 5e-12)
        assert out.counts_ch1.tolist() == [2, 1]
        assert out.counts_ch2.tolist() == [0, 0]

    def test_span_from_first_to_last(self):
        tags = TimeTagStream(1e-12, [12, 13, 31], [2, 1, 2])
        out = bin_timetags(tags, 5e-12)
        # bins [10,15), [15,20), ..., [30,35)
        assert out.counts_ch1.tolist() == [1, 0, 0, 0, 0]
        assert out.counts_ch2.tolist() == [1, 0, 0, 0, 1]

    def test_conserves_counts(self):
        rng = np.random.default_rng(0)
        t = np.sort(rng.integers(0, 10**6, 5000)).astype(np.uint64)
        c = rng.integers(1, 3, 5000).astype(np.uint8)
        out = bin_timetags(TimeTagStream(1e-12, t, c), 1e-9)
        assert out.counts_ch1.sum() == (c == 1).sum()
        assert out.counts_ch2.sum() == (c == 2).sum()

    def test_unsorted_rejected(self):
        with pytest.raises(FormatError, match="not sorted"):
            bin_timetags(TimeTagStream(1e-12, [5, 3], [1, 1]), 5e-12)

    def test_bin_width_must_be_multiple(self):
        with pytest.raises(ValueError):
            bin_timetags(TimeTagStream(1e-12, [1], [1]), 2.5e-12)

    def test_round_trip(self):
        s = simulate(SimConfig(nbar=2.0, n_bins=5000, seed=3))
        back = bin_timetags(counts_to_timetags(s, 1e-12, seed=4), 1e-6)
        assert np.array_equal(back.counts_ch1, s.counts_ch1)
        assert np.array_equal(back.counts_ch2, s.counts_ch2)


class TestEstimator:
    def test_matches_literal_definition(self):
        rng = np.random.default_rng(1)
        c1 = rng.integers(0, 3, 60)
        c2 = rng.integers(0, 3, 60)
        curve = estimate_gmn(stream(c1, c2), 1, 0, 5)
        ref = brute_force(c1.tolist(), c2.tolist(), 1, 0, 5)
        for k, g, se, co in curve.rows():
            c, a, b, npairs = ref[k]
            assert co == c
            assert g == pytest.approx(npairs * c / (a * b), rel=1e-14)
            assert se == pytest.approx(g * math.sqrt(1 / c + 1 / a + 1 / b), rel=1e-14)

    def test_lag_orientation(self):
        # channel 2 repeats channel 1 two bins later: coincidences peak at lag +2
        c1 = np.array([1, 0, 0, 0, 1, 0, 0, 1, 0, 0] * 10)
        c2 = np.roll(c1, 2)
        curve = estimate_gmn(stream(c1, c2), 1, 1, 4)
        assert int(curve.lags[np.argmax(curve.event_counts)]) == 2

    def test_undefined_lags_are_nan(self):
        c1 = np.zeros(50, dtype=np.int64)
        c1[0] = 1
        curve = estimate_gmn(stream(c1, np.zeros(50)), 1, 0, 3)
        g, se = curve.at(0)
        assert g == 1.0 and se > 0
        # only bin 0 has m = 1, so lags k < 0 drop it from the window
        assert np.isnan(curve.at(-1)[0]) and not curve.defined[curve.lags == -1][0]

    def test_zero_coincidence_error_bar(self):
        c1 = np.array([1, 0] * 20)
        c2 = np.array([0, 1] * 20)
        g, se = estimate_gmn(stream(c1, c2), 1, 1, 0).at(0)
        assert g == 0 and se == pytest.approx(40 / (20 * 20))

    def test_too_short(self):
        with pytest.raises(ValueError):
            estimate_gmn(stream([0, 1], [1, 0]), 0, 0, 2)
        with pytest.raises(ValueError):
            estimate_gmn(stream([0, 1], [1, 0]), 0, 0, -1)

    @settings(max_examples=60, deadline=None)
    @given(count_arrays, st.integers(0, 2), st.integers(0, 2), st.integers(0, 25))
    def test_fft_equals_direct(self, c, m, n, lag):
        s = stream(c, c[::-1].copy())
        assert gmn_tallies(s, m, n, lag, "fft") == gmn_tallies(s, m, n, lag, "direct")

    @settings(max_examples=60, deadline=None)
    @given(count_arrays, st.integers(0, 2), st.integers(0, 2), st.integers(0, 12), st.data())
    def test_streaming_equals_batch(self, c, m, n, lag, data):
        s = stream(c, np.roll(c, 3))
        cuts = sorted(data.draw(st.lists(st.integers(0, c.size), max_size=6)))
        corr = StreamingCorrelator(m, n, lag)
        for lo, hi in zip([0] + cuts, cuts + [c.size]):
            corr.update(s.counts_ch1[lo:hi], s.counts_ch2[lo:hi])
        assert corr.tallies() == gmn_tallies(s, m, n, lag, "direct")

    def test_values_nonnegative(self):
        s = simulate(SimConfig(n_bins=20_000, seed=2))
        curve = estimate_gmn(s, 2, 1, 30)
        ok = curve.defined
        assert np.all(curve.values[ok] >= 0) and np.all(curve.stderr[ok] >= 0)
        assert curve.values.size == curve.stderr.size == curve.event_counts.size == 61

    def test_laser_flat(self):
        s = simulate(SimConfig(source="laser", nbar=0.8, n_bins=1_000_000, seed=4))
        curve = estimate_gmn(s, 1, 2, 20)
        z = (curve.values - 1) / curve.stderr
        assert np.all(np.abs(z) < 3.5)  # 41 lags; 3.5 sigma keeps the family-wise rate < 2 %

    def test_thermal_dip(self):
        s = simulate(SimConfig(nbar=0.66, n_bins=1_000_000, seed=5))
        g, se = estimate_gmn(s, 1, 0, 0).at(0)
        assert abs(g - 0.8499) < 3 * se

    def test_lag_symmetry(self):
        s = simulate(SimConfig(nbar=1.0, n_bins=1_000_000, seed=6))
        a = estimate_gmn(s, 2, 1, 10)
        b = estimate_gmn(s, 1, 2, 10)
        for k in range(-10, 11):
            ga, sa = a.at(k)
            gb, sb = b.at(-k)
            assert abs(ga - gb) < 3 * math.hypot(sa, sb)

    @pytest.mark.slow
    def test_error_scales_as_inverse_sqrt(self):
        p = ThermalParams(0.66, 1.0)
        exact = g_mn(p, (1, 0))
        rms = []
        for i, n_bins in enumerate((10**5, 10**6, 10**7)):
            errs = []
            for r in range(8):
                s = sample_joint_counts(0.66, 1.0, n_bins, seed=1000 * i + r)
                g, _ = estimate_gmn(stream(s[:, 0], s[:, 1]), 1, 0, 0).at(0)
                errs.append(g - exact)
            rms.append(math.sqrt(np.mean(np.square(errs))))
        for big, small in zip(rms, rms[1:]):
            assert 0.2 * math.sqrt(10) <= big / small <= 5 * math.sqrt(10)


class TestPtagStreaming:
    def test_matches_batch(self, tmp_path):
        s = simulate(SimConfig(nbar=0.9, n_bins=300_000, seed=7))
        tags = counts_to_timetags(s, 1e-12, seed=7)
        path = tmp_path / "s.ptag"
        write_ptag(path, tags)
        streamed = correlate_ptag(path, 1e-6, 1, 0, 40)
        binned = bin_timetags(TimeTagStream(1e-12, tags.timestamps, tags.channels), 1e-6)
        assert streamed == gmn_tallies(binned, 1, 0, 40, "direct")

    def test_small_blocks(self, tmp_path, monkeypatch):
        import photonstat.formats as fm

        s = simulate(SimConfig(nbar=0.5, n_bins=3000, seed=1))
        tags = counts_to_timetags(s, 1e-12, seed=1)
        path = tmp_path / "s.ptag"
        write_ptag(path, tags)
        monkeypatch.setattr(fm, "READ_BLOCK", 7)
        chunks = list(iter_ptag_bins(path, 1e-6))
        c1 = np.concatenate([a for a, _ in chunks])
        ref = bin_timetags(TimeTagStream(1e-12, tags.timestamps, tags.channels), 1e-6)
        assert np.array_equal(c1, ref.counts_ch1)

    def test_coarser_bins(self, tmp_path):
        s = simulate(SimConfig(nbar=0.3, n_bins=30_000, seed=2))
        tags = counts_to_timetags(s, 1e-12, seed=2)
        path = tmp_path / "s.ptag"
        write_ptag(path, tags)
        streamed = correlate_ptag(path, 3e-6, 1, 1, 5)
        ref = bin_timetags(TimeTagStream(1e-12, tags.timestamps, tags.channels), 3e-6)
        assert streamed == gmn_tallies(ref, 1, 1, 5)


class TestNormalize:
    def curve(self, values, lags=None):
        values = np.asarray(values, dtype=float)
        lags = np.arange(-(values.size // 2), values.size // 2 + 1) if lags is None else lags
        return GmnCurve(1, 0, lags, values, np.full(values.size, 0.01), np.ones(values.size, dtype=np.int64))

    def test_flat(self):
        ratio, se = peak_background_normalize(self.curve(np.ones(401)))
        assert ratio == 1.0 and se > 0

    def test_dip(self):
        v = np.ones(401)
        v[200] = 0.85
        assert peak_background_normalize(self.curve(v))[0] == pytest.approx(0.85)

    def test_explicit_lags(self):
        v = np.ones(21)
        v[10] = 2.0
        v[0] = 0.5
        ratio, _ = peak_background_normalize(self.curve(v), [-9, 9, 10])
        assert ratio == pytest.approx(2.0 / ((1 + 1 + 1) / 3))

    def test_empty_window(self):
        with pytest.raises(ValueError, match="no defined lags"):
            peak_background_normalize(self.curve(np.ones(21)), (50, 200))

    def test_window_excludes_zero(self):
        with pytest.raises(ValueError, match="exclude lag 0"):
            peak_background_normalize(self.curve(np.ones(21)), (0, 5))


class TestSpatialScan:
    def test_dip_peak_and_incoherent_limit(self):
        base = SimConfig(nbar=0.66, n_bins=400_000, seed=5)
        curve = spatial_scan(base, [0.0, 5.0], 1, 0)
        g0, s0 = curve.values[0], curve.stderr[0]
        assert g0 < 1 and abs(g0 - 0.8499) < 3 * s0
        assert abs(curve.values[1] - 1) < 3 * curve.stderr[1]

    def test_bunching_at_higher_intensity(self):
        base = SimConfig(nbar=1.98, bin_width=3e-6, n_bins=400_000, seed=6)
        g, se = spatial_scan(base, [0.0], 1, 0).at(0.0)
        assert g > 1 and abs(g - 1.0756) < 3 * se

    def test_pool_matches_serial(self):
        base = SimConfig(nbar=0.66, n_bins=20_000, seed=3, coherence=CoherenceModel(tau_c=1e-6))
        a = spatial_scans(base, [0.0, 0.5, 1.0], [(1, 0), (0, 0)], max_lag=60, background_lags=(20, 60), workers=1)
        b = spatial_scans(base, [0.0, 0.5, 1.0], [(1, 0), (0, 0)], max_lag=60, background_lags=(20, 60), workers=2)
        for key in a:
            assert np.array_equal(a[key].values, b[key].values)

    def test_thermal_only(self):
        with pytest.raises(ValueError):
            spatial_scan(SimConfig(source="laser"), [0.0], 1, 0)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("PHOTONSTAT_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("PHOTONSTAT_THREADS", "zero")
    assert worker_count() == 1
    monkeypatch.delenv("PHOTONSTAT_THREADS")
    assert worker_count(2) == 2
