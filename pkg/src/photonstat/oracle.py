"""
Independent numerical evaluations of P_mn used to check the closed form.

Two routes that share no arithmetic with ``analytic.joint_pmn``:

``pmn_contour``
    Samples M(u, v) / C = 1 / (C (1 - a(u+v) + b uv)) on the bi-circle
    |u| = |v| = r and extracts the u^m v^n Taylor coefficient with a 2-D FFT
    (trapezoidal rule for the Cauchy integral, spectrally accurate).

``pmn_series``
    Sums the coefficient of u^m v^n in the geometric expansion
    sum_k [a(u+v) - b uv]^k term by term, using the (i, j, k) binomial
    indices before any re-indexing: i = k - n, j = m + n - k for
    k = max(m, n) .. m + n.

Here a = D/C and b = E/C with C, D, E the PGF constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analytic import CountPair, PgfConstants, ThermalParams, _pair, _require_scalar
from .errors import ContourConfigError


@dataclass(frozen=True)
class ContourConfig:
    """Radius of the u and v circles and FFT points per dimension.

    ``radius=None`` (the default) picks the largest radius <= 0.9 that keeps
    |a(u+v) - b uv| <= 0.8 on the bi-circle.  FFT round-off in the
    coefficient is amplified by r^-(m+n); a fixed r = 0.25 loses ~1e-6
    absolute accuracy by m = n = 10.
    """

    radius: Optional[float] = None
    gridsize: int = 256

    def __post_init__(self):
        if self.radius is not None and not 0.0 < self.radius < 1.0:
            raise ContourConfigError(f"radius must lie in (0, 1), got {self.radius}")
        g = self.gridsize
        if g < 2 or g & (g - 1):
            raise ContourConfigError(f"gridsize must be a power of two >= 2, got {g}")


def _ratios(params: ThermalParams):
    k = PgfConstants.from_params(params)
    return k.c, k.d / k.c, k.e / k.c


def auto_radius(params: ThermalParams, target: float = 0.8, rmax: float = 0.9) -> float:
    """Largest r <= rmax with 2 a r + b r^2 <= target (a bound on |a(u+v) - b uv|)."""
    _, a, b = _ratios(params)
    if b > 0:
        r = (-2 * a + math.sqrt(4 * a * a + 4 * b * target)) / (2 * b)
    elif a > 0:
        r = target / (2 * a)
    else:
        r = rmax
    return min(r, rmax)


def _bicircle(radius: float, gridsize: int):
    z = radius * np.exp(2j * np.pi * np.arange(gridsize) / gridsize)
    return z[:, None], z[None, :]


def check_convergence(params: ThermalParams, cfg: ContourConfig, radius: Optional[float] = None) -> float:
    """Max of |a(u+v) - b uv| over the sampled bi-circle; raises if >= 1."""
    r = cfg.radius if radius is None else radius
    _, a, b = _ratios(params)
    u, v = _bicircle(r, cfg.gridsize)
    q = np.abs(a * (u + v) - b * u * v).max()
    if q >= 1.0:
        raise ContourConfigError(
            f"geometric expansion diverges on the contour (max |a(u+v) - b uv| = {q:.3g} >= 1 "
            f"at radius {r}); use a smaller radius"
        )
    return float(q)


def pmn_contour(params: ThermalParams, pair, cfg: ContourConfig = ContourConfig()) -> float:
    """P_mn by discrete Cauchy integral over the bi-circle."""
    _require_scalar(params, "pmn_contour")
    pair = _pair(pair)
    if max(pair.m, pair.n) >= cfg.gridsize:
        raise ContourConfigError(f"gridsize {cfg.gridsize} too small for order ({pair.m}, {pair.n})")
    r = auto_radius(params) if cfg.radius is None else cfg.radius
    check_convergence(params, cfg, r)
    c, a, b = _ratios(params)
    u, v = _bicircle(r, cfg.gridsize)
    f = 1.0 / (1.0 - a * (u + v) + b * u * v)
    coef = np.fft.fft2(f) / cfg.gridsize**2
    val = coef[pair.m, pair.n].real / (c * r ** (pair.m + pair.n))
    return float(val)


def pmn_series(params: ThermalParams, pair) -> float:
    """P_mn from the raw triple-index binomial expansion."""
    _require_scalar(params, "pmn_series")
    pair = _pair(pair)
    m, n = pair.m, pair.n
    c, a, b = _ratios(params)
    terms = []
    for k in range(max(m, n), m + n + 1):
        i = k - n
        j = m + n - k
        # [a(u+v) - b uv]^k -> C(k, j) a^(k-j) (-b)^j * C(k-j, i) u^(i+j) v^(k-i)
        terms.append(math.comb(k, j) * math.comb(k - j, i) * a ** (k - j) * (-b) ** j)
    return math.fsum(terms) / c
