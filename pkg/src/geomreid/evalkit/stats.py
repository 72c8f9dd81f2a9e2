"""Paired t-test, one-way repeated-measures ANOVA and Bonferroni adjustment.

Tail probabilities come from the regularized incomplete beta function,
evaluated by its continued fraction (modified Lentz iteration).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import IncompleteTable

ALPHA = 0.05


@dataclass(frozen=True)
class StatTestResult:
    statistic: float
    df: object               # int for t, (df1, df2) for F
    p_value: float
    adjusted_p: float | None = None
    flag: str | None = None  # "ZeroVariance" when the test statistic is undefined

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value {self.p_value} outside [0, 1]")
        if self.adjusted_p is not None and self.adjusted_p < self.p_value:
            raise ValueError("adjusted p below raw p")

    def significant(self, alpha: float = ALPHA) -> bool:
        p = self.p_value if self.adjusted_p is None else self.adjusted_p
        return p < alpha

    def marker(self, alpha: float = ALPHA) -> str:
        return "*" if self.significant(alpha) else "ns"


def _betacf(a, b, x, tol=1e-16, max_iter=10000):
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    # the fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return min(1.0, betainc_reg(df / 2.0, 0.5, df / (df + t * t)))


def f_sf(f: float, df1: float, df2: float) -> float:
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return min(1.0, betainc_reg(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)))


def paired_t_test(a, b) -> StatTestResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("paired_t_test needs two equal-length samples with n >= 2")
    d = a - b
    n = len(d)
    mean = d.mean()
    sd = d.std(ddof=1)
    tiny = 1e-12 * max(1.0, float(np.abs(a).max()), float(np.abs(b).max()))
    if sd <= tiny:
        if abs(mean) <= tiny:
            return StatTestResult(0.0, n - 1, 1.0, flag="ZeroVariance")
        return StatTestResult(math.copysign(math.inf, mean), n - 1, 0.0, flag="ZeroVariance")
    t = float(mean / (sd / math.sqrt(n)))
    return StatTestResult(t, n - 1, t_sf_two_sided(t, n - 1))


def rm_anova(values) -> StatTestResult:
    """Rows are conditions (methods), columns are subjects (folds)."""
    try:
        x = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError):
        raise IncompleteTable("table rows have unequal lengths or non-numeric cells") from None
    if x.ndim != 2:
        raise IncompleteTable("expected a methods x folds table")
    if not np.all(np.isfinite(x)):
        raise IncompleteTable("table has missing or non-finite cells")
    m, n = x.shape
    if m < 2 or n < 2:
        raise IncompleteTable(f"need >= 2 methods and >= 2 folds, got {m}x{n}")
    grand = x.mean()
    cond = x.mean(axis=1)
    subj = x.mean(axis=0)
    ss_cond = n * float(((cond - grand) ** 2).sum())
    resid = x - cond[:, None] - subj[None, :] + grand
    ss_err = float((resid ** 2).sum())
    df1, df2 = m - 1, (m - 1) * (n - 1)
    # sums of squares below rounding level of the cell values count as zero
    tiny = x.size * (1e-12 * max(1.0, float(np.abs(x).max()))) ** 2
    if ss_err <= tiny:
        if ss_cond <= tiny:
            return StatTestResult(0.0, (df1, df2), 1.0)
        return StatTestResult(math.inf, (df1, df2), 0.0, flag="ZeroVariance")
    f = (ss_cond / df1) / (ss_err / df2)
    return StatTestResult(f, (df1, df2), f_sf(f, df1, df2))


def bonferroni_adjust(p_values) -> list:
    p = [float(v) for v in p_values]
    if any(not 0.0 <= v <= 1.0 for v in p):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(p)
    return [min(1.0, v * m) for v in p]


def with_adjusted(results) -> list:
    """Attach Bonferroni-adjusted p-values across a family of test results."""
    adj = bonferroni_adjust([r.p_value for r in results])
    return [replace(r, adjusted_p=a) for r, a in zip(results, adj)]


def mean_sd_string(values, scale: float = 100.0, marker: str | None = None) -> str:
    v = np.asarray(values, dtype=np.float64) * scale
    sd = v.std(ddof=1) if len(v) > 1 else 0.0
    s = "%.2f ± %.2f" % (v.mean(), sd)
    return f"{s} {marker}" if marker else s
