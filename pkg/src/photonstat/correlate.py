"""
Estimation of photon-number-projection correlations g_mn from count data.

For photon numbers (m, n) and an integer bin lag k the estimator is

    g(k) = N_k * C_k / (A_k * B_k)

with N_k = n_bins - |k| overlapping bin pairs, C_k the number of pairs with
m photons on channel 1 at bin t and n photons on channel 2 at bin t + k, and
A_k, B_k the channel-1 and channel-2 single-event tallies over the same
N_k-bin window.  Using the overlapping window for the marginals removes an
O(k/N) bias at large lags.  Error bars follow from counting statistics,

    stderr = g * sqrt(1/C_k + 1/A_k + 1/B_k),

which ignores the positive covariance between C_k and the marginals and so
errs on the large side for independent bins.

Two evaluation paths produce identical integer tallies:

* :func:`estimate_gmn` works on an in-memory :class:`BinnedCountStream`
  with one dot product per lag (or one FFT cross-correlation for wide lag
  windows);
* :class:`StreamingCorrelator` consumes bins in chunks with a ring buffer of
  the last ``max_lag`` bins and FFT cross-correlation per chunk, so a PTAG
  file of any length is processed in a single pass with bounded memory
  (:func:`correlate_ptag`).
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sfft

from .errors import FormatError
from .simulate import BinnedCountStream, SimConfig, TimeTagStream, simulate_temporal, ticks_per

DEFAULT_BACKGROUND = (50, 200)


def worker_count(default: int = 1) -> int:
    """Worker cap from the PHOTONSTAT_THREADS environment variable."""
    raw = os.environ.get("PHOTONSTAT_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


@dataclass
class GmnTallies:
    """Integer tallies behind a g_mn curve; lags run from -max_lag to max_lag."""

    m: int
    n: int
    max_lag: int
    n_bins: int
    coincidences: np.ndarray
    count_m: np.ndarray
    count_n: np.ndarray

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.max_lag, self.max_lag + 1)

    @property
    def n_pairs(self) -> np.ndarray:
        return self.n_bins - np.abs(self.lags)

    def __eq__(self, other):
        if not isinstance(other, GmnTallies):
            return NotImplemented
        return (
            (self.m, self.n, self.max_lag, self.n_bins) == (other.m, other.n, other.max_lag, other.n_bins)
            and np.array_equal(self.coincidences, other.coincidences)
            and np.array_equal(self.count_m, other.count_m)
            and np.array_equal(self.count_n, other.count_n)
        )

    def to_curve(self) -> "GmnCurve":
        co = self.coincidences.astype(float)
        a = self.count_m.astype(float)
        b = self.count_n.astype(float)
        npairs = self.n_pairs.astype(float)
        defined = (a > 0) & (b > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(defined, npairs / (a * b), np.nan)
            g = co * unit
            # a lag with no coincidences gets the one-event value as its error bar
            se = np.where(co > 0, g * np.sqrt(1.0 / co + 1.0 / a + 1.0 / b), unit)
        return GmnCurve(
            m=self.m,
            n=self.n,
            lags=self.lags,
            values=g,
            stderr=se,
            event_counts=self.coincidences.copy(),
            count_m=self.count_m.copy(),
            count_n=self.count_n.copy(),
        )


@dataclass
class GmnCurve:
    """Estimated g_mn against lag (integer bins) or detector offset.

    Lags where a marginal tally is zero are undefined: their value and
    stderr are NaN and ``defined`` is False there.
    """

    m: int
    n: int
    lags: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    event_counts: np.ndarray
    count_m: Optional[np.ndarray] = None
    count_n: Optional[np.ndarray] = None

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.values)

    def at(self, lag) -> Tuple[float, float]:
        i = int(np.flatnonzero(self.lags == lag)[0])
        return float(self.values[i]), float(self.stderr[i])

    def rows(self):
        for x, g, s, c in zip(self.lags.tolist(), self.values.tolist(), self.stderr.tolist(), self.event_counts.tolist()):
            yield x, g, s, c


# -- batch path -------------------------------------------------------------

def _indicators(stream: BinnedCountStream, m: int, n: int):
    a = (stream.counts_ch1 == m).astype(np.float64)
    b = (stream.counts_ch2 == n).astype(np.float64)
    return a, b


def _direct_coincidences(a: np.ndarray, b: np.ndarray, max_lag: int) -> np.ndarray:
    """sum_t a[t] b[t+k] for k = -max_lag..max_lag by explicit dot products."""
    n = a.size
    out = np.zeros(2 * max_lag + 1, dtype=np.int64)
    for i, k in enumerate(range(-max_lag, max_lag + 1)):
        if abs(k) >= n:
            continue
        if k >= 0:
            v = a[: n - k] @ b[k:]
        else:
            v = a[-k:] @ b[: n + k]
        out[i] = int(round(v))
    return out


def _window_marginals(a_head, a_tail, b_head, b_tail, total_a, total_b, max_lag):
    """Single-event tallies over the overlapping window of each lag.

    ``*_head`` / ``*_tail`` hold the first / last max_lag indicator values.
    """
    ca_head = np.concatenate([[0], np.cumsum(a_head)])
    cb_head = np.concatenate([[0], np.cumsum(b_head)])
    ca_tail = np.concatenate([[0], np.cumsum(a_tail[::-1])])
    cb_tail = np.concatenate([[0], np.cumsum(b_tail[::-1])])
    lags = np.arange(-max_lag, max_lag + 1)
    pos = np.maximum(lags, 0)
    neg = np.maximum(-lags, 0)
    # channel 1 at t: drop first `neg` and last `pos` bins; channel 2 at t + k: drop first `pos`, last `neg`
    count_m = total_a - ca_head[neg] - ca_tail[pos]
    count_n = total_b - cb_head[pos] - cb_tail[neg]
    return count_m.astype(np.int64), count_n.astype(np.int64)


DIRECT_MAX_LAG = 16


def gmn_tallies(stream: BinnedCountStream, m: int, n: int, max_lag: int, method: str = "auto") -> GmnTallies:
    """Batch (in-memory) tallies for g_mn at lags -max_lag..max_lag.

    ``method`` is "direct" (one dot product per lag), "fft" (exact after
    rounding) or "auto" (direct up to DIRECT_MAX_LAG lags, FFT beyond).
    """
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    if stream.n_bins <= max_lag:
        raise ValueError(f"stream of {stream.n_bins} bins is too short for max_lag={max_lag}")
    if method not in ("auto", "direct", "fft"):
        raise ValueError(f"unknown method {method!r}")
    a, b = _indicators(stream, m, n)
    if method == "fft" or (method == "auto" and max_lag > DIRECT_MAX_LAG):
        co = _fft_coincidences(a, b, max_lag)
    else:
        co = _direct_coincidences(a, b, max_lag)
    L = max_lag
    cm, cn = _window_marginals(
        a[:L].astype(np.int64), a[a.size - L :].astype(np.int64),
        b[:L].astype(np.int64), b[b.size - L :].astype(np.int64),
        int(a.sum()), int(b.sum()), L,
    )
    return GmnTallies(m, n, max_lag, stream.n_bins, co, cm, cn)


def estimate_gmn(stream: BinnedCountStream, m: int, n: int, max_lag: int, method: str = "auto") -> GmnCurve:
    """Estimated g_mn(k) for k = -max_lag..max_lag."""
    return gmn_tallies(stream, m, n, max_lag, method).to_curve()


# -- streaming path ---------------------------------------------------------

def _fft_coincidences(a: np.ndarray, b: np.ndarray, max_lag: int) -> np.ndarray:
    """Same as _direct_coincidences via zero-padded FFT, rounded to exact integers."""
    size = a.size + max_lag
    nfft = sfft.next_fast_len(size, real=True)
    fa = sfft.rfft(a, nfft)
    fb = sfft.rfft(b, nfft)
    r = sfft.irfft(np.conj(fa) * fb, nfft)
    idx = np.arange(-max_lag, max_lag + 1) % nfft
    return np.rint(r[idx]).astype(np.int64)


class StreamingCorrelator:
    """Single-pass g_mn tallies over a stream of count chunks.

    Each coincidence pair is credited to the chunk holding its later bin;
    the last ``max_lag`` bins are kept to pair with the next chunk.
    """

    def __init__(self, m: int, n: int, max_lag: int):
        if max_lag < 0:
            raise ValueError("max_lag must be >= 0")
        self.m, self.n, self.max_lag = m, n, max_lag
        self.n_bins = 0
        self.coincidences = np.zeros(2 * max_lag + 1, dtype=np.int64)
        self._total_a = 0
        self._total_b = 0
        self._head_a = np.zeros(0)
        self._head_b = np.zeros(0)
        self._hist_a = np.zeros(0)
        self._hist_b = np.zeros(0)

    def update(self, counts_ch1: np.ndarray, counts_ch2: np.ndarray):
        a = (np.asarray(counts_ch1) == self.m).astype(np.float64)
        b = (np.asarray(counts_ch2) == self.n).astype(np.float64)
        if a.size == 0:
            return
        L = self.max_lag
        ext_a = np.concatenate([self._hist_a, a])
        ext_b = np.concatenate([self._hist_b, b])
        co = _fft_coincidences(ext_a, ext_b, L)
        if self._hist_a.size:
            co -= _direct_coincidences(self._hist_a, self._hist_b, L)
        self.coincidences += co
        self._total_a += int(a.sum())
        self._total_b += int(b.sum())
        if self._head_a.size < L:
            need = L - self._head_a.size
            self._head_a = np.concatenate([self._head_a, a[:need]])
            self._head_b = np.concatenate([self._head_b, b[:need]])
        self._hist_a = ext_a[-L:] if L else ext_a[:0]
        self._hist_b = ext_b[-L:] if L else ext_b[:0]
        self.n_bins += a.size

    def tallies(self) -> GmnTallies:
        L = self.max_lag
        if self.n_bins <= L:
            raise ValueError(f"stream of {self.n_bins} bins is too short for max_lag={L}")
        cm, cn = _window_marginals(
            self._head_a.astype(np.int64), self._hist_a.astype(np.int64),
            self._head_b.astype(np.int64), self._hist_b.astype(np.int64),
            self._total_a, self._total_b, L,
        )
        return GmnTallies(self.m, self.n, L, self.n_bins, self.coincidences.copy(), cm, cn)


# -- time tags --------------------------------------------------------------

def _check_sorted(timestamps: np.ndarray, offset: int = 0):
    if timestamps.size > 1:
        bad = np.flatnonzero(timestamps[1:] < timestamps[:-1])
        if bad.size:
            raise FormatError(f"time tags are not sorted (record {offset + int(bad[0]) + 1})", offset=offset + int(bad[0]) + 1)


def bin_timetags(tags: TimeTagStream, bin_width: float) -> BinnedCountStream:
    """Per-channel counts in bins of ``bin_width`` seconds aligned to tick 0.

    Bins run from the one holding the first tag to the one holding the last,
    or over [0, span_ticks) when the stream records its acquisition span.
    """
    tpb = ticks_per(bin_width, tags.resolution)
    t = tags.timestamps
    _check_sorted(t)
    if tags.span_ticks is not None:
        first, nb = 0, -(-int(tags.span_ticks) // tpb)
        if t.size and int(t[-1]) // tpb >= nb:
            nb = int(t[-1]) // tpb + 1
    elif t.size == 0:
        return BinnedCountStream(bin_width, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    else:
        first = int(t[0]) // tpb
        nb = int(t[-1]) // tpb - first + 1
    idx = (t // np.uint64(tpb)).astype(np.int64) - first
    ch = tags.channels
    c1 = np.bincount(idx[ch == 1], minlength=nb)
    c2 = np.bincount(idx[ch == 2], minlength=nb)
    return BinnedCountStream(bin_width, c1, c2)


def iter_ptag_bins(path, bin_width: float) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Stream (counts_ch1, counts_ch2) chunks of complete bins from a PTAG file."""
    from .formats import iter_ptag

    tpb = None
    first = None
    pending1 = pending2 = 0
    cur = None  # absolute index of the pending (incomplete) bin
    for resolution, t, ch in iter_ptag(path):
        if tpb is None:
            tpb = np.uint64(ticks_per(bin_width, resolution))
        idx = (t // tpb).astype(np.int64)
        if cur is None:
            cur = first = int(idx[0])
        base = cur
        last = int(idx[-1])
        c1 = np.bincount(idx[ch == 1] - base, minlength=last - base + 1)
        c2 = np.bincount(idx[ch == 2] - base, minlength=last - base + 1)
        c1[0] += pending1
        c2[0] += pending2
        pending1, pending2 = int(c1[-1]), int(c2[-1])
        cur = last
        if c1.size > 1:
            yield c1[:-1], c2[:-1]
    if cur is not None:
        yield np.array([pending1]), np.array([pending2])


def correlate_ptag(path, bin_width: float, m: int, n: int, max_lag: int) -> GmnTallies:
    """Single-pass streaming g_mn tallies straight from a PTAG file."""
    corr = StreamingCorrelator(m, n, max_lag)
    for c1, c2 in iter_ptag_bins(path, bin_width):
        corr.update(c1, c2)
    return corr.tallies()


# -- normalization and scans ------------------------------------------------

def _background_mask(lags: np.ndarray, background_lags) -> np.ndarray:
    if isinstance(background_lags, tuple) and len(background_lags) == 2:
        lo, hi = background_lags
        mask = (np.abs(lags) >= lo) & (np.abs(lags) <= hi)
    else:
        mask = np.isin(lags, np.asarray(list(background_lags)))
    return mask


def peak_background_normalize(curve: GmnCurve, background_lags=DEFAULT_BACKGROUND) -> Tuple[float, float]:
    """Ratio of the lag-0 value to the mean background value, with its stderr.

    ``background_lags`` is either a (lo, hi) pair selecting lo <= |lag| <= hi
    or an explicit collection of lags.
    """
    mask = _background_mask(curve.lags, background_lags)
    if np.any(mask & (curve.lags == 0)):
        raise ValueError("background window must exclude lag 0")
    mask &= curve.defined
    if not mask.any():
        raise ValueError(f"background window {background_lags!r} selects no defined lags")
    g0, s0 = curve.at(0)
    bg = curve.values[mask].mean()
    s_bg = np.sqrt(np.sum(curve.stderr[mask] ** 2)) / mask.sum()
    ratio = g0 / bg
    se = np.hypot(s0 / bg, ratio * s_bg / bg)
    return float(ratio), float(se)


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=keys).generate_state(1, np.uint64)[0])


def _scan_point(args):
    config, pairs, max_lag, background = args
    stream = simulate_temporal(config)
    out = []
    for m, n in pairs:
        curve = estimate_gmn(stream, m, n, max_lag)
        ratio, se = peak_background_normalize(curve, background)
        out.append((ratio, se, int(curve.event_counts[curve.lags == 0][0])))
    return out


def spatial_scans(
    base: SimConfig,
    dx_grid: Sequence[float],
    pairs: Sequence[Tuple[int, int]],
    max_lag: Optional[int] = None,
    background_lags=DEFAULT_BACKGROUND,
    workers: Optional[int] = None,
) -> dict:
    """Peak-over-background g_mn against detector offset dx for several pairs.

    Point i simulates ``base`` with ``dx = dx_grid[i]`` and seed
    ``derive_seed(base.seed, i)``; every pair is estimated from that one
    stream.  Points run in a process pool when ``workers`` (default:
    PHOTONSTAT_THREADS) exceeds 1.  Returns {(m, n): GmnCurve} with the dx
    values in ``lags``.
    """
    if base.source != "thermal":
        raise ValueError("spatial scans need a thermal source")
    pairs = [(int(m), int(n)) for m, n in pairs]
    if max_lag is None:
        max_lag = background_lags[1] if isinstance(background_lags, tuple) else int(max(np.abs(background_lags)))
    jobs = [
        (base.with_(dx=float(dx), seed=derive_seed(base.seed, i)), pairs, max_lag, background_lags)
        for i, dx in enumerate(dx_grid)
    ]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            results = list(ex.map(_scan_point, jobs))
    else:
        results = [_scan_point(j) for j in jobs]
    curves = {}
    for j, (m, n) in enumerate(pairs):
        vals = [r[j][0] for r in results]
        ses = [r[j][1] for r in results]
        cos = [r[j][2] for r in results]
        curves[(m, n)] = GmnCurve(
            m=m,
            n=n,
            lags=np.asarray(dx_grid, dtype=float),
            values=np.asarray(vals, dtype=float),
            stderr=np.asarray(ses, dtype=float),
            event_counts=np.asarray(cos, dtype=np.int64),
        )
    return curves


def spatial_scan(
    base: SimConfig,
    dx_grid: Sequence[float],
    m: int,
    n: int,
    max_lag: Optional[int] = None,
    background_lags=DEFAULT_BACKGROUND,
    workers: Optional[int] = None,
) -> GmnCurve:
    """Single-pair form of :func:`spatial_scans`."""
    return spatial_scans(base, dx_grid, [(m, n)], max_lag, background_lags, workers)[(m, n)]
