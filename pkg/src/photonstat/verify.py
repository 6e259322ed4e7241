"""Oracle and invariant checks behind ``photonstat verify``."""

from __future__ import annotations

import math
import warnings
from typing import Callable, List, Tuple

import numpy as np

from .analytic import (
    ThermalParams,
    g11,
    g_m0,
    g_mn,
    joint_pgf,
    joint_pmn,
    marginal_pq,
    pmn_table,
    truncation_order,
)
from .errors import PrecisionWarning
from .oracle import ContourConfig, pmn_contour, pmn_series

Result = Tuple[str, bool, str]

NBAR_GRID = (0.1, 0.5, 1.0, 2.0, 5.0)
MU_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def oracle_triangle(n_tuples: int = 200, seed: int = 0, tol: float = 1e-8) -> Tuple[float, list]:
    """Max pairwise spread of closed form, contour and series over random tuples."""
    rng = np.random.default_rng(seed)
    worst, rows = 0.0, []
    for _ in range(n_tuples):
        p = ThermalParams(float(rng.uniform(0, 5)), float(rng.uniform(0, 1)))
        m, n = (int(v) for v in rng.integers(0, 9, size=2))
        vals = (joint_pmn(p, (m, n)), pmn_contour(p, (m, n)), pmn_series(p, (m, n)))
        spread = max(vals) - min(vals)
        worst = max(worst, spread)
        rows.append((p.nbar, p.mu, m, n) + vals)
    return worst, rows


def check_oracle_triangle(seed: int = 0) -> Result:
    worst, _ = oracle_triangle(seed=seed)
    return "oracle triangle (200 tuples, m,n<=8)", worst < 1e-8, f"max spread {worst:.2e}"


def check_contour_radius(seed: int = 0) -> Result:
    worst = 0.0
    for nbar, mu in ((0.5, 0.5), (1.0, 1.0), (2.0, 0.3)):
        p = ThermalParams(nbar, mu)
        for m, n in ((0, 0), (1, 0), (1, 1), (2, 1)):
            vals = [pmn_contour(p, (m, n), ContourConfig(radius=r)) for r in (0.1, 0.25, 0.4)]
            worst = max(worst, max(vals) - min(vals))
    return "contour radius sweep {0.1,0.25,0.4}", worst < 1e-9, f"max spread {worst:.2e}"


def check_normalization(seed: int = 0) -> Result:
    worst = 0.0
    for nbar in NBAR_GRID:
        k = truncation_order(nbar)
        for mu in MU_GRID:
            t = pmn_table(ThermalParams(nbar, mu), k, k)
            total = math.fsum(t.values.ravel()) + t.tail_bound
            worst = max(worst, abs(1.0 - total) if total < 1 else 0.0)
    return "normalization (25 parameter pairs)", worst < 1e-9, f"max deficit {worst:.2e}"


def check_marginals(seed: int = 0) -> Result:
    worst = 0.0
    for nbar in NBAR_GRID:
        k = max(truncation_order(nbar), 20)
        for mu in MU_GRID:
            p = ThermalParams(nbar, mu)
            t = pmn_table(p, k, k)
            rows = t.row_sums()[:21]
            worst = max(worst, float(np.max(np.abs(rows - marginal_pq(p, np.arange(21))))))
    return "marginal consistency (m<=20)", worst < 1e-10, f"max error {worst:.2e}"


def check_symmetry(seed: int = 0) -> Result:
    bad = 0
    for nbar in NBAR_GRID:
        for mu in MU_GRID:
            p = ThermalParams(nbar, mu)
            for m in range(11):
                for n in range(m):
                    if joint_pmn(p, (m, n)) != joint_pmn(p, (n, m)):
                        bad += 1
            t = pmn_table(p, 15, 15).values
            bad += int(np.count_nonzero(t != t.T))
    return "symmetry P_mn = P_nm", bad == 0, f"{bad} asymmetric entries"


def check_independence(seed: int = 0) -> Result:
    worst = 0.0
    for nbar in NBAR_GRID:
        p = ThermalParams(nbar, 0.0)
        for m in range(11):
            for n in range(11):
                worst = max(worst, abs(g_mn(p, (m, n)) - 1.0))
    return "independence at mu=0", worst < 1e-12, f"max |g-1| {worst:.2e}"


def check_pgf(seed: int = 0) -> Result:
    ok, worst = True, 0.0
    h = 1e-5
    for nbar in NBAR_GRID:
        for mu in MU_GRID:
            p = ThermalParams(nbar, mu)
            ok &= joint_pgf(p, 1.0, 1.0) == 1.0
            deriv = (joint_pgf(p, 1.0 + h, 1.0) - joint_pgf(p, 1.0 - h, 1.0)) / (2 * h)
            worst = max(worst, abs(deriv - nbar))
    return "PGF M(1,1)=1 and dM/dx(1,1)=nbar", ok and worst < 1e-6, f"max derivative error {worst:.2e}"


def check_lower_bounds(seed: int = 0) -> Result:
    nbar, mu = np.meshgrid(np.linspace(0.001, 10, 100), np.linspace(0, 1, 100))
    p = ThermalParams(nbar, mu)
    lo00 = float(np.min(g_m0(p, 0)))
    lo11 = float(np.min(g11(p)))
    return "g00 >= 1 and g11 >= 1 (10^4 points)", lo00 >= 1.0 and lo11 >= 1.0, f"min g00 {lo00!r}, min g11 {lo11!r}"


def check_monotone_m(seed: int = 0) -> Result:
    bad = 0
    for nbar in NBAR_GRID:
        for mu in MU_GRID[1:]:
            g = [g_m0(ThermalParams(nbar, mu), m) for m in range(11)]
            bad += sum(1 for a, b in zip(g, g[1:]) if not b < a)
    return "g_(m+1)0 < g_m0 for mu > 0", bad == 0, f"{bad} violations"


def check_special_cases(seed: int = 0) -> Result:
    worst = 0.0
    for nbar in NBAR_GRID:
        for mu in MU_GRID:
            p = ThermalParams(nbar, mu)
            worst = max(worst, abs(g_m0(p, 1) - g_mn(p, (1, 0))), abs(g11(p) - g_mn(p, (1, 1))))
    return "special cases agree with generic g_mn", worst < 1e-12, f"max difference {worst:.2e}"


CHECKS: List[Callable[[int], Result]] = [
    check_oracle_triangle,
    check_contour_radius,
    check_normalization,
    check_marginals,
    check_symmetry,
    check_independence,
    check_pgf,
    check_lower_bounds,
    check_monotone_m,
    check_special_cases,
]


def run_all(seed: int = 0) -> List[Result]:
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PrecisionWarning)
        for check in CHECKS:
            try:
                out.append(check(seed))
            except Exception as exc:  # a crash is a failed check, not a crashed report
                out.append((check.__name__, False, f"raised {type(exc).__name__}: {exc}"))
    return out
