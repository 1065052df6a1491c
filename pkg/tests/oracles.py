"""Independent numerical oracles used by the tests.

These deliberately avoid the code paths they check: the t-quantile oracle
integrates the density with adaptive quadrature and inverts it by
bisection, rather than calling any distribution's ppf.
"""

from __future__ import annotations

import math

from scipy.integrate import quad


def t_pdf(x: float, df: float) -> float:
    log_norm = (
        math.lgamma((df + 1.0) / 2.0)
        - math.lgamma(df / 2.0)
        - 0.5 * math.log(df * math.pi)
    )
    return math.exp(log_norm - ((df + 1.0) / 2.0) * math.log1p(x * x / df))


def t_cdf(x: float, df: float) -> float:
    if x < 0:
        return 1.0 - t_cdf(-x, df)
    integral, _ = quad(t_pdf, 0.0, x, args=(df,), limit=200)
    return 0.5 + integral


def t_quantile(p: float, df: float) -> float:
    """Invert the cdf by bisection on a bracket grown geometrically."""
    if not (0.0 < p < 1.0):
        raise ValueError("p must lie in (0, 1)")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -t_quantile(1.0 - p, df)
    lo, hi = 0.0, 1.0
    while t_cdf(hi, df) < p:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("bracket growth failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)
