"""Probability distribution helpers used by the test and interval machinery.

Thin, validated wrappers around ``math.erfc`` and ``scipy.special`` so the
rest of the package never touches scipy directly and the argument checks
live in one place.
"""

from __future__ import annotations

import math

from scipy import special


def normal_cdf(z: float) -> float:
    """Standard normal CDF, accurate far into the tails."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_quantile(q: float) -> float:
    """Inverse standard normal CDF for q in (0, 1)."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {q}")
    return float(special.ndtri(q))


def t_quantile(q: float, df: int) -> float:
    """Inverse CDF of Student's t with ``df`` degrees of freedom."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {q}")
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    return float(special.stdtrit(df, q))


def t_cdf(x: float, df: int) -> float:
    """CDF of Student's t with ``df`` degrees of freedom."""
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    return float(special.stdtr(df, x))


def f_cdf(x: float, df1: int, df2: int) -> float:
    """CDF of the F distribution with (df1, df2) degrees of freedom."""
    if df1 < 1 or df2 < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got ({df1}, {df2})")
    if x <= 0.0:
        return 0.0
    return float(special.fdtr(df1, df2, x))


def chisq_cdf(x: float, df: int) -> float:
    """CDF of the chi-square distribution with ``df`` degrees of freedom."""
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    if x <= 0.0:
        return 0.0
    return float(special.chdtr(df, x))


def chisq_sf(x: float, df: int) -> float:
    """Chi-square survival function 1 - CDF, stable in the upper tail."""
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    if x <= 0.0:
        return 1.0
    return float(special.chdtrc(df, x))


def f_sf(x: float, df1: int, df2: int) -> float:
    """F-distribution survival function 1 - CDF, stable in the upper tail."""
    if df1 < 1 or df2 < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got ({df1}, {df2})")
    if x <= 0.0:
        return 1.0
    return float(special.fdtrc(df1, df2, x))
