"""
Photon-count and time-tag generators for thermal and laser light.

Thermal light is modelled at the field level.  Each detector field E_j is a
circular complex Gaussian with E|E_j|^2 = nbar, the two fields have
cross-correlation E[E_1 E_2^*] = nbar sqrt(mu), and the count in a bin is
Poisson with mean |E_j|^2.  For such a pair the joint count PGF is

    E[x^m y^n] = E[exp((x-1)|E_1|^2 + (y-1)|E_2|^2)]
               = 1 / det(I - diag(x-1, y-1) Sigma),
    Sigma      = nbar [[1, sqrt(mu)], [sqrt(mu), 1]],

and expanding the 2x2 determinant gives

    1 - nbar (x-1) - nbar (y-1) + (1-mu) nbar^2 (x-1)(y-1),

which is exactly the thermal joint PGF in :mod:`photonstat.analytic`.  The
simulator therefore realizes the closed-form statistics without
approximation and serves as an independent check of them.

Temporal streams use an AR(1) (discrete Ornstein-Uhlenbeck) complex Gaussian
process per field,

    F[t+1] = rho F[t] + sqrt(1 - rho^2) xi[t],

with rho^2 = mu(0, bin_width) / mu_peak from the coherence model.  The lag-k
squared coherence is then exactly rho^(2|k|) (exponential, not the Gaussian
profile of the model), so the pair (E_1[t], E_2[t+k]) is still jointly
Gaussian with squared coherence

    mu_k = mu(dx, 0) * rho^(2|k|),

and the closed forms hold lag by lag with mu -> mu_k (:meth:`SimConfig.mu_at_lag`).

Reproducibility
---------------
Streams are produced in chunks of ``CHUNK_BINS`` bins.  Chunk ``i`` of a run
with seed ``s`` draws its counts from
``default_rng(SeedSequence(s, spawn_key=(0, i)))`` and its tag offsets from
``spawn_key=(2, i)``; the initial AR(1) state comes from ``spawn_key=(1, 0)``.
The AR(1) state is carried from one chunk to the next, so there is no
burn-in and the output depends only on the config.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy.signal import lfilter

from .coherence import CoherenceModel, mu_at

CHUNK_BINS = 1 << 20
SOURCES = ("thermal", "laser")


def chunk_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Generator for chunk ``index`` of sub-stream ``stream`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))


def ticks_per(duration: float, resolution: float) -> int:
    """Integer number of ``resolution`` ticks in ``duration``; raises if not a multiple."""
    ratio = duration / resolution
    ticks = int(round(ratio))
    # only float rounding of the quotient is tolerated, not a fraction of a tick
    if ticks < 1 or abs(ratio - ticks) > 1e-9 + 1e-13 * ratio:
        raise ValueError(f"resolution {resolution} does not divide {duration}")
    return ticks


@dataclass(frozen=True)
class SimConfig:
    """One simulated run.

    Times are in seconds: ``bin_width`` (1 us by default, as in the
    measurements being modelled) and ``tag_resolution`` (1 ps).
    ``nbar`` is the mean number of detected photons per bin per detector.
    """

    source: str = "thermal"
    nbar: float = 0.66
    coherence: CoherenceModel = field(default_factory=CoherenceModel)
    bin_width: float = 1e-6
    n_bins: int = 1_000_000
    dx: float = 0.0
    seed: int = 0
    tag_resolution: float = 1e-12

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        if not self.nbar >= 0:
            raise ValueError(f"nbar must be >= 0, got {self.nbar}")
        if int(self.n_bins) != self.n_bins or self.n_bins < 1:
            raise ValueError(f"n_bins must be a positive integer, got {self.n_bins}")
        if not self.bin_width > 0:
            raise ValueError(f"bin_width must be > 0, got {self.bin_width}")
        ticks_per(self.bin_width, self.tag_resolution)
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def ticks_per_bin(self) -> int:
        return ticks_per(self.bin_width, self.tag_resolution)

    @property
    def rho(self) -> float:
        """AR(1) coefficient of the field process per bin."""
        return math.exp(-0.5 * (self.bin_width / self.coherence.tau_c) ** 2)

    @property
    def mu_zero_lag(self) -> float:
        """Squared coherence between the detectors at equal times."""
        return mu_at(self.coherence, self.dx, 0.0)

    def mu_at_lag(self, lag):
        """Squared coherence between E_1[t] and E_2[t + lag] realized by the simulator."""
        if self.source == "laser":
            return np.zeros(np.shape(lag)) if np.ndim(lag) else 0.0
        lag = np.abs(np.asarray(lag, dtype=float))
        out = self.mu_zero_lag * self.rho ** (2.0 * lag)
        return float(out) if np.ndim(out) == 0 else out

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        coh = d.pop("coherence", None)
        if isinstance(coh, dict):
            coh = CoherenceModel(**coh)
        return cls(coherence=coh or CoherenceModel(), **d)


@dataclass
class BinnedCountStream:
    """Per-bin photon counts on two channels; ``bin_width`` in seconds."""

    bin_width: float
    counts_ch1: np.ndarray
    counts_ch2: np.ndarray

    def __post_init__(self):
        self.counts_ch1 = np.asarray(self.counts_ch1)
        self.counts_ch2 = np.asarray(self.counts_ch2)
        if self.counts_ch1.shape != self.counts_ch2.shape or self.counts_ch1.ndim != 1:
            raise ValueError("channel count arrays must be 1-D with equal length")
        for c in (self.counts_ch1, self.counts_ch2):
            if c.size and (not np.issubdtype(c.dtype, np.integer) or c.min() < 0):
                raise ValueError("counts must be non-negative integers")

    def __len__(self):
        return self.counts_ch1.size

    @property
    def n_bins(self) -> int:
        return self.counts_ch1.size

    def mean_counts(self) -> Tuple[float, float]:
        return float(self.counts_ch1.mean()), float(self.counts_ch2.mean())


@dataclass
class TimeTagStream:
    """Detection events as integer tick timestamps and channel numbers (1 or 2).

    ``resolution`` is the tick length in seconds.  ``span_ticks`` optionally
    records the length of the acquisition window starting at tick 0, which
    lets binning restore trailing empty bins.
    """

    resolution: float
    timestamps: np.ndarray
    channels: np.ndarray
    span_ticks: Optional[int] = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.uint64)
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        if self.timestamps.shape != self.channels.shape:
            raise ValueError("timestamps and channels must have equal length")

    def __len__(self):
        return self.timestamps.size


# -- joint count samples ----------------------------------------------------

def _complex_normal(rng: np.random.Generator, size: int) -> np.ndarray:
    """Circular complex Gaussian with E|z|^2 = 1."""
    z = rng.standard_normal((size, 2))
    return (z[:, 0] + 1j * z[:, 1]) * math.sqrt(0.5)


def sample_joint_counts(nbar: float, mu: float, n_samples: int, seed: int) -> np.ndarray:
    """Independent (m, n) count pairs whose joint law is the thermal P_mn.

    Returns an integer array of shape (n_samples, 2).
    """
    if nbar < 0 or not 0 <= mu <= 1:
        raise ValueError("need nbar >= 0 and 0 <= mu <= 1")
    out = np.empty((n_samples, 2), dtype=np.int64)
    a, b = math.sqrt(mu), math.sqrt(1.0 - mu)
    scale = math.sqrt(nbar)
    for i, start in enumerate(range(0, n_samples, CHUNK_BINS)):
        size = min(CHUNK_BINS, n_samples - start)
        rng = chunk_rng(seed, i)
        e1 = scale * _complex_normal(rng, size)
        e2 = a * e1 + b * scale * _complex_normal(rng, size)
        out[start : start + size, 0] = rng.poisson(np.abs(e1) ** 2)
        out[start : start + size, 1] = rng.poisson(np.abs(e2) ** 2)
    return out


# -- streams ----------------------------------------------------------------

def _ar1_chunk(rng, size, rho, state):
    """Advance a unit-power AR(1) complex process ``size`` steps from ``state``."""
    xi = _complex_normal(rng, size)
    y, zf = lfilter([math.sqrt(1.0 - rho * rho)], [1.0, -rho], xi, zi=[rho * state])
    return y, y[-1]


def _thermal_chunks(config: SimConfig) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    n = config.n_bins
    rho = config.rho
    mu_s = config.mu_zero_lag
    a, b = math.sqrt(mu_s), math.sqrt(1.0 - mu_s)
    scale = math.sqrt(config.nbar)
    init = chunk_rng(config.seed, 0, stream=1)
    f_state, g_state = _complex_normal(init, 2)
    for i, start in enumerate(range(0, n, CHUNK_BINS)):
        size = min(CHUNK_BINS, n - start)
        rng = chunk_rng(config.seed, i)
        f, f_state = _ar1_chunk(rng, size, rho, f_state)
        g, g_state = _ar1_chunk(rng, size, rho, g_state)
        e1 = scale * f
        e2 = scale * (a * f + b * g)
        yield rng.poisson(np.abs(e1) ** 2).astype(np.int32), rng.poisson(np.abs(e2) ** 2).astype(np.int32)


def _laser_chunks(config: SimConfig) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    n = config.n_bins
    for i, start in enumerate(range(0, n, CHUNK_BINS)):
        size = min(CHUNK_BINS, n - start)
        rng = chunk_rng(config.seed, i)
        yield rng.poisson(config.nbar, size).astype(np.int32), rng.poisson(config.nbar, size).astype(np.int32)


def iter_count_chunks(config: SimConfig) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield (counts_ch1, counts_ch2) blocks of CHUNK_BINS bins for ``config``."""
    return _laser_chunks(config) if config.source == "laser" else _thermal_chunks(config)


def _collect(config: SimConfig) -> BinnedCountStream:
    c1 = np.empty(config.n_bins, dtype=np.int32)
    c2 = np.empty(config.n_bins, dtype=np.int32)
    pos = 0
    for a, b in iter_count_chunks(config):
        c1[pos : pos + a.size] = a
        c2[pos : pos + b.size] = b
        pos += a.size
    return BinnedCountStream(config.bin_width, c1, c2)


def simulate_temporal(config: SimConfig) -> BinnedCountStream:
    """Binned thermal counts with temporal (AR(1)) and spatial (dx) coherence."""
    if config.source != "thermal":
        raise ValueError("simulate_temporal needs a thermal source; use simulate_laser for laser light")
    return _collect(config)


def simulate_laser(config: SimConfig) -> BinnedCountStream:
    """Independent Poisson counts with constant mean ``nbar`` on both channels."""
    if config.source != "laser":
        raise ValueError("simulate_laser needs a laser source; use simulate_temporal for thermal light")
    return _collect(config)


def simulate(config: SimConfig) -> BinnedCountStream:
    return _collect(config)


# -- time tags --------------------------------------------------------------

def _tags_for_block(c1, c2, start_bin: int, tpb: int, rng: np.random.Generator):
    parts_t, parts_c = [], []
    for ch, block in ((1, c1), (2, c2)):
        bins = np.repeat(np.arange(start_bin, start_bin + block.size, dtype=np.uint64), block)
        offs = rng.integers(0, tpb, size=bins.size, dtype=np.uint64)
        parts_t.append(bins * np.uint64(tpb) + offs)
        parts_c.append(np.full(bins.size, ch, dtype=np.uint8))
    t = np.concatenate(parts_t)
    c = np.concatenate(parts_c)
    order = np.argsort(t, kind="stable")
    return t[order], c[order]


def iter_timetag_chunks(
    stream: BinnedCountStream, resolution: float, seed: int, chunk_bins: int = CHUNK_BINS
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield (timestamps, channels) for consecutive blocks of bins, globally sorted.

    Each count in bin b becomes a tag at a tick drawn uniformly from
    [b * T, (b + 1) * T) with T = bin_width / resolution.  Within a tick the
    channel-1 tags precede channel-2 tags.
    """
    tpb = ticks_per(stream.bin_width, resolution)
    for i, start in enumerate(range(0, stream.n_bins, chunk_bins)):
        stop = min(start + chunk_bins, stream.n_bins)
        yield _tags_for_block(
            stream.counts_ch1[start:stop], stream.counts_ch2[start:stop], start, tpb, chunk_rng(seed, i, stream=2)
        )


def counts_to_timetags(stream: BinnedCountStream, resolution: float, seed: int) -> TimeTagStream:
    """Expand binned counts into a sorted time-tag stream (inverse of binning)."""
    tpb = ticks_per(stream.bin_width, resolution)
    ts, cs = [], []
    for t, c in iter_timetag_chunks(stream, resolution, seed):
        ts.append(t)
        cs.append(c)
    t = np.concatenate(ts) if ts else np.empty(0, dtype=np.uint64)
    c = np.concatenate(cs) if cs else np.empty(0, dtype=np.uint8)
    return TimeTagStream(resolution, t, c, span_ticks=stream.n_bins * tpb)


def simulate_to_ptag(config: SimConfig, path) -> int:
    """Simulate ``config`` and write its time tags to a PTAG file chunk by chunk.

    Produces the same records as ``counts_to_timetags(simulate(config),
    config.tag_resolution, config.seed)`` without holding the stream in
    memory.  Returns the number of records written.
    """
    from .formats import PtagWriter

    tpb = config.ticks_per_bin
    with PtagWriter(path, config.tag_resolution) as w:
        start = 0
        for i, (c1, c2) in enumerate(iter_count_chunks(config)):
            t, c = _tags_for_block(c1, c2, start, tpb, chunk_rng(config.seed, i, stream=2))
            w.write(t, c)
            start += c1.size
        return w.count
