from fractions import Fraction

import pytest

ACCEPTANCE_LINES = []


def exact_pmn_table(nbar, mu, size):
    """Exact rational P_mn for m, n <= size from the coefficient recurrence
    C P_mn = D P_(m-1)n + D P_m(n-1) - E P_(m-1)(n-1)."""
    nbar, mu = Fraction(nbar), Fraction(mu)
    e = (1 - mu) * nbar * nbar
    c = 1 + 2 * nbar + e
    d = nbar + e
    p = [[Fraction(0)] * (size + 1) for _ in range(size + 1)]
    for m in range(size + 1):
        for n in range(size + 1):
            if m == 0 and n == 0:
                p[0][0] = 1 / c
                continue
            acc = Fraction(0)
            if m:
                acc += d * p[m - 1][n]
            if n:
                acc += d * p[m][n - 1]
            if m and n:
                acc -= e * p[m - 1][n - 1]
            p[m][n] = acc / c
    return p


@pytest.fixture(scope="session")
def exact_table():
    cache = {}

    def get(nbar, mu, size):
        key = (Fraction(nbar), Fraction(mu))
        if key not in cache or len(cache[key]) <= size:
            cache[key] = exact_pmn_table(nbar, mu, size)
        return cache[key]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
