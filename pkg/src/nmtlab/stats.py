"""Rank and correlation statistics with self-contained special-function numerics.

The one-sided Mann-Whitney-Wilcoxon test uses the exact permutation null
(counted by dynamic programming over rank sums) for small untied samples and
a tie-corrected normal approximation otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

EXACT_LIMIT = 25  # exact MWW path for n + m up to this, ties absent


@dataclass(frozen=True)
class MwwResult:
    u_statistic: float
    p_value: float
    n: int
    m: int
    exact: bool


@dataclass(frozen=True)
class CorrResult:
    r: float
    p_value: float
    n: int


@dataclass(frozen=True)
class TTestResult:
    mean_diff: float
    t: float
    p_value: float
    dof: int


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float


def _u_statistic(x: Sequence[float], y: Sequence[float]) -> tuple[float, bool]:
    """Count of (x > y) pairs plus half the ties; also reports tie presence."""
    u = 0.0
    ties = False
    for xi in x:
        for yj in y:
            if xi > yj:
                u += 1.0
            elif xi == yj:
                u += 0.5
                ties = True
    return u, ties


def rank_sum_counts(n: int, total: int) -> list[int]:
    """counts[s] = number of n-subsets of ranks {1..total} with rank sum s."""
    max_sum = n * total - n * (n - 1) // 2
    dp = [[0] * (max_sum + 1) for _ in range(n + 1)]
    dp[0][0] = 1
    for r in range(1, total + 1):
        for k in range(min(n, r), 0, -1):
            row, prev = dp[k], dp[k - 1]
            for s in range(max_sum, r - 1, -1):
                c = prev[s - r]
                if c:
                    row[s] += c
    return dp[n]


def exact_u_counts(n: int, m: int) -> list[int]:
    """Null distribution of the U statistic: counts[u] for u in 0..n*m."""
    offset = n * (n + 1) // 2  # U = rank_sum(x) - offset
    sums = rank_sum_counts(n, n + m)
    return sums[offset:offset + n * m + 1]


def _norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def mww_one_sided(
    x: Sequence[float], y: Sequence[float], alternative: str
) -> MwwResult:
    """One-sided Mann-Whitney-Wilcoxon test.

    ``x_less`` takes the left tail, p = P(U* <= U_obs) inclusive of the
    observed statistic; ``x_greater`` mirrors it.  Exact only without ties
    and for n + m <= EXACT_LIMIT.
    """
    if alternative not in ("x_less", "x_greater"):
        raise ValueError(f"alternative must be x_less or x_greater, got {alternative!r}")
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise ValueError("both samples must be non-empty")

    u, ties = _u_statistic(x, y)

    if not ties and n + m <= EXACT_LIMIT:
        counts = exact_u_counts(n, m)
        total = sum(counts)
        u_int = int(round(u))
        if alternative == "x_less":
            favourable = sum(counts[: u_int + 1])
        else:
            favourable = sum(counts[u_int:])
        return MwwResult(u, favourable / total, n, m, exact=True)

    # normal approximation with midrank tie correction and continuity correction
    pooled = sorted(list(x) + list(y))
    tie_term = 0.0
    i = 0
    while i < len(pooled):
        j = i
        while j < len(pooled) and pooled[j] == pooled[i]:
            j += 1
        t = j - i
        tie_term += t ** 3 - t
        i = j
    nm = n + m
    var = n * m / 12.0 * ((nm + 1) - tie_term / (nm * (nm - 1)))
    if var <= 0:
        raise ValueError("all pooled values identical; MWW undefined")
    mean = n * m / 2.0
    sd = math.sqrt(var)
    if alternative == "x_less":
        z = (u - mean + 0.5) / sd
        p = _norm_cdf(z)
    else:
        z = (u - mean - 0.5) / sd
        p = 1.0 - _norm_cdf(z)
    return MwwResult(u, p, n, m, exact=False)


def incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b).

    Continued-fraction evaluation (modified Lentz), switching to the
    symmetric complement when x is past the distribution's bulk.
    """
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x < 0.0 or x > 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    if x > (a + 1.0) / (a + b + 2.0):
        return 1.0 - incomplete_beta(b, a, 1.0 - x)
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    return math.exp(ln_front) * _beta_cf(a, b, x) / a


def _beta_cf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 1e-15) -> float:
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for it in range(1, max_iter + 1):
        m2 = 2 * it
        num = it * (b - it) * x / ((qam + m2) * (a + m2))
        d = 1.0 + num * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + num / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        num = -(a + it) * (qab + it) * x / ((a + m2) * (qap + m2))
        d = 1.0 + num * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + num / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete_beta: continued fraction failed to converge for a={a}, b={b}, x={x}")


def student_t_cdf(t: float, dof: int) -> float:
    """CDF of Student's t distribution with integer degrees of freedom."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if t == 0.0:
        return 0.5
    x = dof / (dof + t * t)
    tail = 0.5 * incomplete_beta(dof / 2.0, 0.5, x)
    return tail if t < 0 else 1.0 - tail


def _t_two_sided_p(t: float, dof: int) -> float:
    return 2.0 * student_t_cdf(-abs(t), dof)


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrResult:
    """Sample Pearson correlation with a two-sided p from the t distribution."""
    n = len(x)
    if n != len(y):
        raise ValueError("samples must have equal length")
    if n < 3:
        raise ValueError("pearson needs at least 3 points")
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxx = math.fsum((xi - mx) ** 2 for xi in x)
    syy = math.fsum((yi - my) ** 2 for yi in y)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("pearson undefined for zero-variance input")
    sxy = math.fsum((xi - mx) * (yi - my) for xi, yi in zip(x, y))
    r = sxy / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return CorrResult(r, 0.0, n)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return CorrResult(r, _t_two_sided_p(t, n - 2), n)


def one_sample_t(diffs: Sequence[float], mu0: float = 0.0) -> TTestResult:
    """Two-sided one-sample t-test of the mean against ``mu0``."""
    n = len(diffs)
    if n < 2:
        raise ValueError("t-test needs at least 2 samples")
    mean = math.fsum(diffs) / n
    ss = math.fsum((d - mean) ** 2 for d in diffs)
    if ss == 0.0:
        raise ValueError("t-test undefined for zero-variance input")
    s = math.sqrt(ss / (n - 1))
    t = (mean - mu0) / (s / math.sqrt(n))
    return TTestResult(mean_diff=mean - mu0, t=t, p_value=_t_two_sided_p(t, n - 1), dof=n - 1)


def ols_fit(x: Sequence[float], y: Sequence[float]) -> FitResult:
    """Least-squares line y = slope * x + intercept with its r-squared."""
    n = len(x)
    if n != len(y):
        raise ValueError("samples must have equal length")
    if n < 2:
        raise ValueError("ols_fit needs at least 2 points")
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxx = math.fsum((xi - mx) ** 2 for xi in x)
    if sxx == 0.0:
        raise ValueError("ols_fit undefined for zero-variance x")
    sxy = math.fsum((xi - mx) * (yi - my) for xi, yi in zip(x, y))
    slope = sxy / sxx
    intercept = my - slope * mx
    syy = math.fsum((yi - my) ** 2 for yi in y)
    if syy == 0.0:
        r_squared = 1.0  # flat data fit exactly by the flat line
    else:
        r_squared = min(1.0, (sxy * sxy) / (sxx * syy))
    return FitResult(slope=slope, intercept=intercept, r_squared=r_squared)
