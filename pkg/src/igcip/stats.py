"""Statistical tests and summaries used by the validation studies.

Paired t-test with the exact t CDF, Bonferroni correction, the exact mid-p
McNemar test on discordant pairs, and 1.5 IQR boxplot statistics with
linear-interpolation quartiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.special import stdtr


class TTestResult(NamedTuple):
    t: float
    df: int
    p: float


def paired_t_test(x, y) -> TTestResult:
    """Two-sided paired t-test on x - y.

    Degenerate zero-variance differences use the documented conventions:
    p = 1 when the mean difference is also zero, p = 0 otherwise.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if len(x) != len(y):
        raise ValueError("paired samples must have equal length")
    n = len(x)
    if n < 2:
        raise ValueError("need at least 2 pairs")
    d = x - y
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(t=0.0, df=df, p=1.0)
        return TTestResult(t=math.copysign(math.inf, mean), df=df, p=0.0)
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * float(stdtr(df, -abs(t)))
    return TTestResult(t=t, df=df, p=p)


def bonferroni(p_values, m: int | None = None):
    """Bonferroni-adjusted p-values: min(1, p * m)."""
    p_values = list(p_values)
    if m is None:
        m = len(p_values)
    if m < len(p_values):
        raise ValueError("m must be at least the number of p-values")
    return [min(1.0, p * m) for p in p_values]


def mcnemar_midp(paired_outcomes) -> float:
    """Exact mid-p McNemar test on paired binary outcomes.

    Uses the discordant counts b = (True, False) and c = (False, True):
    p = 2 P(X <= min(b, c)) - P(X = min(b, c)) with X ~ Binomial(b + c, 1/2),
    computed in exact rational arithmetic. Returns 1.0 when there are no
    discordant pairs.
    """
    b = 0
    c = 0
    for first, second in paired_outcomes:
        if first and not second:
            b += 1
        elif second and not first:
            c += 1
    n = b + c
    if n == 0:
        return 1.0
    k = min(b, c)
    denom = Fraction(1, 2**n)
    cdf = sum(math.comb(n, i) for i in range(k + 1)) * denom
    pmf = math.comb(n, k) * denom
    p = 2 * cdf - pmf
    return float(min(p, Fraction(1)))


@dataclass(frozen=True)
class BoxplotStats:
    median: float
    q1: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple

    def as_dict(self):
        return {
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
            "whisker_lo": self.whisker_lo,
            "whisker_hi": self.whisker_hi,
            "outliers": list(self.outliers),
        }


def boxplot_stats(values) -> BoxplotStats:
    """1.5 IQR boxplot summary with linear-interpolation quartiles.

    Whiskers extend to the most extreme data points within
    [q1 - 1.5 IQR, q3 + 1.5 IQR]; everything outside is an outlier.
    """
    values = np.asarray(values, dtype=float).ravel()
    if len(values) == 0:
        raise ValueError("need at least 1 value")
    q1, median, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = values[(values >= lo_fence) & (values <= hi_fence)]
    outliers = np.sort(values[(values < lo_fence) | (values > hi_fence)])
    return BoxplotStats(
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        whisker_lo=float(inside.min()),
        whisker_hi=float(inside.max()),
        outliers=tuple(float(v) for v in outliers),
    )
