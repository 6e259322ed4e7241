"""
Closed-form photon-number-projection statistics of thermal light.

Two detectors behind a 50:50 splitter each see a mean of ``nbar`` detected
photons per time bin; ``mu`` is the squared modulus of the first-order
coherence between the two detection points.  The joint count distribution
has generating function

    M(x, y) = 1 / (1 - nbar (x-1) - nbar (y-1) + (1-mu) nbar^2 (x-1)(y-1))

and everything here (joint probabilities P_mn, Bose-Einstein marginals,
normalized correlations g_mn = P_mn / (P_m P_n)) follows from it.

The functions that have a closed form (``joint_pgf``, ``marginal_pq``,
``g_m0``, ``p11``, ``g11``, ``reference_g2``) broadcast over array-valued
``ThermalParams`` so whole parameter surfaces can be evaluated at once.
``joint_pmn`` and ``g_mn`` are scalar.

Numerics
--------
The general P_mn is a finite sum whose terms alternate in sign through a
factor (-(1-mu) nbar^2)^k.  For small but non-zero ``mu`` and large ``m+n``
the cancellation is catastrophic (largest term / result ~ 1e13 at
nbar=5, mu=0.01, m=n=20).  The sum is evaluated as t_0 * sum_k r_k, with
the leading term t_0 formed in log space and r_k = t_k / t_0 built by the
exact ratio recurrence between consecutive terms.  Rounding in t_0 is a
common factor that cancellation cannot amplify; r_k carries about 4k + 2
ulps, so the rounding error of the sum is bounded by

    err ~ eps * sum_k |r_k| (4k + 2).

When ``err`` exceeds ``PRECISION_RTOL`` times the sum (or the largest
term exceeds ``CANCELLATION_LIMIT`` times it), a
:class:`~photonstat.errors.PrecisionWarning` is issued and the value is
recomputed from an all-positive mixture representation:

    P_mn = integral_0^inf e^{-t} p_m(t) p_n(t) dt,

where p_q(t) is the count distribution of a coherent amplitude sqrt(lam t)
plus thermal noise of mean s, with lam = sqrt(mu) nbar and
s = (1 - sqrt(mu)) nbar.  The integrand is exp(-beta t) times a polynomial
of degree m+n with non-negative coefficients, so Gauss-Laguerre quadrature
with (m+n)//2 + 2 nodes is exact up to rounding and involves no
cancellation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import gammaln, logsumexp, roots_laguerre, xlogy

from .errors import DomainError, PrecisionWarning, UndefinedCorrelationError

ArrayLike = Union[float, np.ndarray]

CANCELLATION_LIMIT = 1e12
PRECISION_RTOL = 1e-10
_EPS = np.finfo(float).eps
TAIL_EPS = 1e-12


@dataclass(frozen=True)
class ThermalParams:
    """Mean detected photons per bin ``nbar`` and squared coherence ``mu``.

    Either field may be an array; the two broadcast against each other.
    """

    nbar: ArrayLike
    mu: ArrayLike

    def __post_init__(self):
        nbar = np.asarray(self.nbar, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if not np.all(np.isfinite(nbar)) or np.any(nbar < 0):
            raise ValueError(f"nbar must be finite and >= 0, got {self.nbar!r}")
        if not np.all(np.isfinite(mu)) or np.any((mu < 0) | (mu > 1)):
            raise ValueError(f"mu must lie in [0, 1], got {self.mu!r}")
        if nbar.ndim == 0:
            object.__setattr__(self, "nbar", float(nbar))
        else:
            object.__setattr__(self, "nbar", nbar)
        if mu.ndim == 0:
            object.__setattr__(self, "mu", float(mu))
        else:
            object.__setattr__(self, "mu", mu)

    @property
    def is_scalar(self) -> bool:
        return np.ndim(self.nbar) == 0 and np.ndim(self.mu) == 0

    @property
    def constants(self) -> "PgfConstants":
        return PgfConstants.from_params(self)


@dataclass(frozen=True)
class PgfConstants:
    """Coefficients of M in the shifted variables u = x, v = y:

    M(u, v) = 1 / (c - d (u + v) + e u v)
    """

    c: ArrayLike
    d: ArrayLike
    e: ArrayLike

    @classmethod
    def from_params(cls, params: ThermalParams) -> "PgfConstants":
        nbar, mu = params.nbar, params.mu
        e = (1.0 - mu) * nbar * nbar
        return cls(c=1.0 + 2.0 * nbar + e, d=nbar + e, e=e)


@dataclass(frozen=True)
class CountPair:
    """Photon counts ``m`` at detector 1 and ``n`` at detector 2 in one bin."""

    m: int
    n: int

    def __post_init__(self):
        for name in ("m", "n"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, name, int(v))


def _pair(pair) -> CountPair:
    return pair if isinstance(pair, CountPair) else CountPair(*pair)


def _require_scalar(params: ThermalParams, what: str):
    if not params.is_scalar:
        raise TypeError(f"{what} needs scalar ThermalParams")


@dataclass
class JointPmnTable:
    """P_mn for 0 <= m <= mmax, 0 <= n <= nmax.

    ``tail_mass`` is 1 minus the table sum, i.e. the probability of
    m > mmax or n > nmax (up to rounding).
    """

    params: ThermalParams
    mmax: int
    nmax: int
    values: np.ndarray
    tail_mass: float

    @property
    def tail_bound(self) -> float:
        """Upper bound on the excluded mass from the geometric marginal tails."""
        r = _tail_ratio(self.params.nbar)
        return r ** (self.mmax + 1) + r ** (self.nmax + 1)

    def row_sums(self) -> np.ndarray:
        return self.values.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.values.sum(axis=0)


def _tail_ratio(nbar):
    return nbar / (1.0 + nbar)


def truncation_order(nbar: float, eps: float = TAIL_EPS) -> int:
    """Smallest K with (nbar/(1+nbar))^(K+1) < eps."""
    if nbar == 0:
        return 0
    r = _tail_ratio(nbar)
    k = max(int(math.ceil(math.log(eps) / math.log(r))) - 1, 0)
    while r ** (k + 1) >= eps:
        k += 1
    while k > 0 and r**k < eps:
        k -= 1
    return k


def joint_pgf(params: ThermalParams, x: ArrayLike, y: ArrayLike) -> ArrayLike:
    """Joint probability generating function M(x, y).

    Raises DomainError when (x, y) is on or beyond the pole of M, i.e.
    the denominator is not positive.
    """
    nbar, mu = params.nbar, params.mu
    X = np.asarray(x, dtype=float) - 1.0
    Y = np.asarray(y, dtype=float) - 1.0
    den = 1.0 - nbar * X - nbar * Y + (1.0 - mu) * nbar * nbar * X * Y
    if np.any(den <= 0):
        raise DomainError(
            "joint PGF denominator 1 - nbar(x-1) - nbar(y-1) + (1-mu) nbar^2 (x-1)(y-1) "
            f"is not positive at x={x!r}, y={y!r} (pole of M)"
        )
    out = 1.0 / den
    return float(out) if np.ndim(out) == 0 else out


def marginal_pq(params: ThermalParams, q) -> ArrayLike:
    """Bose-Einstein probability of detecting ``q`` photons at one detector."""
    q = np.asarray(q)
    if np.any(q < 0):
        raise ValueError("q must be >= 0")
    nbar = np.asarray(params.nbar, dtype=float)
    out = np.power(nbar, q) / np.power(1.0 + nbar, q + 1)
    return float(out) if np.ndim(out) == 0 else out


# -- general P_mn ----------------------------------------------------------

def _log_lead(c: float, d: float, m, n):
    """log of the k = 0 term, binom(m+n, m) D^(m+n) / C^(m+n+1)."""
    return gammaln(m + n + 1) - gammaln(m + 1) - gammaln(n + 1) + (m + n) * math.log(d) - (m + n + 1) * math.log(c)


def _scaled_terms(c: float, d: float, e: float, m: int, n: int):
    """Terms of the sum over k divided by the k = 0 term (m >= n), and their rounding bound.

    Consecutive terms differ by the exact factor
    -(m-k+1)(n-k+1) / (k (m+n-k+1)) * C E / D^2, so term k carries about
    4k+2 ulps of relative error however large it is.
    """
    q = c * (e / d) / d if e > 0 else 0.0
    r = [1.0]
    for k in range(1, (n if e > 0 else 0) + 1):
        r.append(-r[-1] * ((m - k + 1) * (n - k + 1)) / (k * (m + n - k + 1)) * q)
    err = _EPS * math.fsum(abs(v) * (4 * k + 2) for k, v in enumerate(r))
    return r, err


def _mixture_table(nbar: float, mu: float, mmax: int, nmax: int) -> np.ndarray:
    """P_mn table from the positive mixture integral (Gauss-Laguerre, exact degree)."""
    lam = math.sqrt(mu) * nbar
    s = (1.0 - math.sqrt(mu)) * nbar
    beta = 1.0 + 2.0 * lam / (1.0 + s)
    n_nodes = (mmax + nmax) // 2 + 2
    x, w = roots_laguerre(n_nodes)
    t = x / beta
    qmax = max(mmax, nmax)

    # log poly_q(t_k) for q = 0..qmax; j indexes the coherent-photon count.
    q = np.arange(qmax + 1)[:, None, None]
    j = np.arange(qmax + 1)[None, :, None]
    tk = t[None, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        logterm = (
            gammaln(q + 1) - gammaln(j + 1) - gammaln(q - j + 1)
            + xlogy(q - j, s)
            + xlogy(j, lam * tk)
            - (q + 1 + j) * math.log1p(s)
            - gammaln(j + 1)
        )
    logterm = np.where(j <= q, logterm, -np.inf)
    logpoly = logsumexp(logterm, axis=1)  # (qmax+1, nodes)

    with np.errstate(divide="ignore"):
        logw = np.log(w) - math.log(beta)
    a = logpoly[: mmax + 1, None, :]
    b = logpoly[None, : nmax + 1, :]
    return np.exp(logsumexp(a + b + logw[None, None, :], axis=2))


def _pmn_scalar(nbar: float, mu: float, m: int, n: int, warn: bool = True) -> float:
    if n > m:
        m, n = n, m
    if nbar == 0.0:
        return 1.0 if m == n == 0 else 0.0
    if mu == 0.0:
        return (nbar**m / (1.0 + nbar) ** (m + 1)) * (nbar**n / (1.0 + nbar) ** (n + 1))
    e = (1.0 - mu) * nbar * nbar
    c = 1.0 + 2.0 * nbar + e
    d = nbar + e
    terms, err = _scaled_terms(c, d, e, m, n)
    total = math.fsum(terms)
    biggest = max(abs(t) for t in terms)
    ok = math.isfinite(total) and total > 0
    result = math.exp(float(_log_lead(c, d, m, n)) + math.log(total)) if ok else math.nan
    if not ok or result > 1 or err > PRECISION_RTOL * total or biggest > CANCELLATION_LIMIT * total:
        ratio = biggest / total if ok else math.inf
        if warn:
            warnings.warn(
                f"P_mn cancellation at nbar={nbar}, mu={mu}, m={m}, n={n} "
                f"(largest term / result = {ratio:.3g}); "
                "using mixture evaluation",
                PrecisionWarning,
                stacklevel=3,
            )
        result = float(_mixture_table(nbar, mu, m, n)[m, n])
    return result


def joint_pmn(params: ThermalParams, pair) -> float:
    """Probability that detector 1 sees ``m`` and detector 2 sees ``n`` photons."""
    _require_scalar(params, "joint_pmn")
    pair = _pair(pair)
    return _pmn_scalar(params.nbar, params.mu, pair.m, pair.n)


def pmn_table(params: ThermalParams, mmax: int, nmax: int) -> JointPmnTable:
    """Materialize P_mn on the grid 0..mmax x 0..nmax.

    Entries whose closed-form sum loses precision are replaced by the
    mixture evaluation; one PrecisionWarning is issued per table if so.
    """
    _require_scalar(params, "pmn_table")
    if mmax < 0 or nmax < 0:
        raise ValueError("mmax and nmax must be >= 0")
    nbar, mu = params.nbar, params.mu
    size = max(mmax, nmax)
    full = np.zeros((size + 1, size + 1))
    if nbar == 0.0:
        full[0, 0] = 1.0
    elif mu == 0.0:
        p = marginal_pq(params, np.arange(size + 1))
        full = np.outer(p, p)
    else:
        e = (1.0 - mu) * nbar * nbar
        c = 1.0 + 2.0 * nbar + e
        d = nbar + e
        bad = np.zeros_like(full, dtype=bool)
        q = c * (e / d) / d if e > 0 else 0.0
        for m in range(size + 1):
            # lower triangle n <= m, mirrored below so symmetry is exact
            n = np.arange(m + 1)[:, None]
            k = np.arange(1, m + 1)[None, :]
            with np.errstate(over="ignore", invalid="ignore"):
                step = np.where(k <= n, -((m - k + 1) * (n - k + 1)) / (k * (m + n - k + 1)) * q, 0.0)
                r = np.concatenate([np.ones((m + 1, 1)), np.cumprod(step, axis=1)], axis=1)
                total = r.sum(axis=1)
                mag = np.abs(r)
                kk = np.arange(m + 1)[None, :]
                err = _EPS * (mag * (4 * kk + 2 + math.ceil(math.log2(m + 2)))).sum(axis=1)
                row = np.exp(_log_lead(c, d, m, n[:, 0]) + np.log(np.where(total > 0, total, 1.0)))
            ok = np.isfinite(total) & (total > 0)
            full[m, : m + 1] = np.where(ok, row, 0.0)
            bad[m, : m + 1] = (
                ~ok | (row > 1) | (err > PRECISION_RTOL * total) | (mag.max(axis=1) > CANCELLATION_LIMIT * total)
            )
        if bad.any():
            warnings.warn(
                f"{int(bad.sum())} table entries at nbar={nbar}, mu={mu} lost precision "
                "in the alternating sum; using mixture evaluation for them",
                PrecisionWarning,
                stacklevel=2,
            )
            fix = _mixture_table(nbar, mu, size, size)
            full[bad] = fix[bad]
        full = np.tril(full) + np.tril(full, -1).T
    values = full[: mmax + 1, : nmax + 1].copy()
    tail = 1.0 - math.fsum(values.ravel())
    return JointPmnTable(params=params, mmax=mmax, nmax=nmax, values=values, tail_mass=tail)


def g_mn(params: ThermalParams, pair) -> float:
    """Normalized correlation P_mn / (P_m P_n)."""
    _require_scalar(params, "g_mn")
    pair = _pair(pair)
    pm = marginal_pq(params, pair.m)
    pn = marginal_pq(params, pair.n)
    if pm == 0 or pn == 0:
        raise UndefinedCorrelationError(
            f"g_{pair.m}{pair.n} undefined at nbar={params.nbar}: marginal probability is zero"
        )
    if params.mu == 0.0:
        return 1.0
    return joint_pmn(params, pair) / pm / pn


# -- special cases with closed forms ----------------------------------------

def _check_positive_nbar(params: ThermalParams, label: str):
    if np.any(np.asarray(params.nbar) == 0):
        raise UndefinedCorrelationError(f"{label} undefined at nbar = 0: marginals vanish")


def g_m0(params: ThermalParams, m: int) -> ArrayLike:
    """g_m0 = (1+nbar)^(m+2) (1+(1-mu) nbar)^m / (1 + 2 nbar + (1-mu) nbar^2)^(m+1)."""
    if m < 0:
        raise ValueError("m must be >= 0")
    if m > 0:
        _check_positive_nbar(params, f"g_{m}0")
    nbar = np.asarray(params.nbar, dtype=float)
    mu = np.asarray(params.mu, dtype=float)
    c = 1.0 + 2.0 * nbar + (1.0 - mu) * nbar * nbar
    if m == 0:
        # (1+nbar)^2 / C = 1 + mu nbar^2 / C, written so it cannot round below 1
        out = 1.0 + mu * nbar * nbar / c
        return float(out) if np.ndim(out) == 0 else out
    # log form keeps large m from overflowing
    out = np.exp(
        (m + 2) * np.log1p(nbar) + m * np.log1p((1.0 - mu) * nbar) - (m + 1) * np.log(c)
    )
    return float(out) if np.ndim(out) == 0 else out


def p11(params: ThermalParams) -> ArrayLike:
    """P_11 = nbar^2 [(1+mu) + 2(1-mu) nbar + (1-mu)^2 nbar^2] / C^3."""
    nbar = np.asarray(params.nbar, dtype=float)
    mu = np.asarray(params.mu, dtype=float)
    s = 1.0 - mu
    c = 1.0 + 2.0 * nbar + s * nbar * nbar
    out = nbar * nbar * ((1.0 + mu) + 2.0 * s * nbar + s * s * nbar * nbar) / c**3
    return float(out) if np.ndim(out) == 0 else out


def g11(params: ThermalParams) -> ArrayLike:
    """g_11 = (1+nbar)^4 [(1+mu) + 2(1-mu) nbar + (1-mu)^2 nbar^2] / C^3."""
    _check_positive_nbar(params, "g_11")
    nbar = np.asarray(params.nbar, dtype=float)
    mu = np.asarray(params.mu, dtype=float)
    s = 1.0 - mu
    c = 1.0 + 2.0 * nbar + s * nbar * nbar
    # (1+nbar)^4 Q - C^3 = mu [(s nbar^3 + nbar^2 - nbar - 1)^2 + mu nbar^2 (1+nbar)^2],
    # a sum of squares, so g_11 >= 1 survives rounding
    lead = s * nbar**3 + nbar * nbar - nbar - 1.0
    excess = mu * (lead * lead + mu * nbar * nbar * (1.0 + nbar) ** 2)
    out = 1.0 + excess / c**3
    return float(out) if np.ndim(out) == 0 else out


def reference_g2(mu: ArrayLike) -> ArrayLike:
    """Degree of second-order coherence of partially coherent thermal light, 1 + mu."""
    mu_arr = np.asarray(mu, dtype=float)
    if np.any((mu_arr < 0) | (mu_arr > 1)):
        raise ValueError("mu must lie in [0, 1]")
    out = 1.0 + mu_arr
    return float(out) if np.ndim(out) == 0 else out
