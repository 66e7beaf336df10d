"""Tail probabilities needed for Wald and chi-square tests.

Only two functions are exposed: the standard normal survival function and
the chi-square survival function. The chi-square tail is computed from the
regularized incomplete gamma function via the usual series / continued
fraction split (series converges fast for x < s + 1, the Lentz continued
fraction elsewhere).
"""

from __future__ import annotations

import math

_MAX_ITER = 500
_EPS = 1e-15
_TINY = 1e-300


def normal_sf(z: float) -> float:
    """P(Z > z) for Z ~ N(0, 1)."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _lower_reg_series(s: float, x: float) -> float:
    # P(s, x) = x^s e^-x / Gamma(s+1) * sum_n x^n / (s+1)...(s+n)
    term = 1.0 / s
    total = term
    a = s
    for _ in range(_MAX_ITER):
        a += 1.0
        term *= x / a
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + s * math.log(x) - math.lgamma(s))


def _upper_reg_cf(s: float, x: float) -> float:
    # Q(s, x) via modified Lentz evaluation of the continued fraction
    b = x + 1.0 - s
    c = 1.0 / _TINY
    d = 1.0 / b if b != 0 else 1.0 / _TINY
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + s * math.log(x) - math.lgamma(s))


def gamma_sf(s: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(s, x) for s > 0, x >= 0."""
    if s <= 0:
        raise ValueError("shape parameter must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < s + 1.0:
        return 1.0 - _lower_reg_series(s, x)
    return _upper_reg_cf(s, x)


def chi2_sf(x: float, df: int) -> float:
    """P(X > x) for X ~ chi-square with df degrees of freedom."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if x <= 0:
        return 1.0
    return gamma_sf(df / 2.0, x / 2.0)
