"""Trial summaries, one-way ANOVA and pairwise Welch tests.

The F and t tail probabilities come from a continued-fraction evaluation of
the regularized incomplete beta function, so no scipy dependency is needed.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from typing import Sequence


class InsufficientDataError(ValueError):
    pass


class UndefinedStatistic(ArithmeticError):
    pass


@dataclass
class TrialGroup:
    label: str
    observations: list[float]


def summarize(group: TrialGroup | Sequence[float]) -> tuple[float, float, float]:
    """Mean, sample standard deviation and coefficient of variation.

    Raises :class:`UndefinedStatistic` when the mean is zero.
    """
    xs = list(group.observations if isinstance(group, TrialGroup) else group)
    if len(xs) < 2:
        raise InsufficientDataError("at least two observations are required")
    mean = math.fsum(xs) / len(xs)
    var = math.fsum((x - mean) ** 2 for x in xs) / (len(xs) - 1)
    std = math.sqrt(var)
    if mean == 0:
        raise UndefinedStatistic("coefficient of variation is undefined for zero mean")
    return mean, std, std / abs(mean)


def _betacf(a: float, b: float, x: float, max_iter: int = 10_000, eps: float = 1e-16) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, df1: float, df2: float) -> float:
    """Survival function of the F distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return min(1.0, max(0.0, betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))))


def t_sf_two_sided(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return min(1.0, max(0.0, betainc(df / 2.0, 0.5, df / (df + t * t))))


def anova_oneway(groups: Sequence[TrialGroup | Sequence[float]]) -> tuple[float, float]:
    """Classic one-way ANOVA.  Returns ``(F, p)``; ``F`` is ``inf`` with
    ``p = 0`` when every group is constant but the means differ."""
    data = [list(g.observations if isinstance(g, TrialGroup) else g) for g in groups]
    if len(data) < 2:
        raise InsufficientDataError("ANOVA needs at least two groups")
    if any(len(g) < 2 for g in data):
        raise InsufficientDataError("every group needs at least two observations")
    k = len(data)
    n = sum(len(g) for g in data)
    grand = math.fsum(x for g in data for x in g) / n
    means = [math.fsum(g) / len(g) for g in data]
    ssb = math.fsum(len(g) * (m - grand) ** 2 for g, m in zip(data, means))
    ssw = math.fsum((x - m) ** 2 for g, m in zip(data, means) for x in g)
    df_b, df_w = k - 1, n - k
    # sums of squares this small relative to the total are rounding noise
    scale = 1e-12 * math.fsum((x - grand) ** 2 for g in data for x in g)
    if ssb <= scale:
        return 0.0, 1.0
    if ssw <= scale:
        return math.inf, 0.0
    f = (ssb / df_b) / (ssw / df_w)
    return f, f_sf(f, df_b, df_w)


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided Welch t-test; returns ``(t, p)``."""
    if len(a) < 2 or len(b) < 2:
        raise InsufficientDataError("each sample needs at least two observations")
    ma, sa, _ = _moments(a)
    mb, sb, _ = _moments(b)
    va, vb = sa ** 2 / len(a), sb ** 2 / len(b)
    if va + vb == 0:
        return (0.0, 1.0) if ma == mb else (math.copysign(math.inf, ma - mb), 0.0)
    t = (ma - mb) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    return t, t_sf_two_sided(t, df)


def _moments(xs: Sequence[float]) -> tuple[float, float, int]:
    mean = math.fsum(xs) / len(xs)
    var = math.fsum((x - mean) ** 2 for x in xs) / (len(xs) - 1)
    return mean, math.sqrt(var), len(xs)


def pairwise_significance(groups: Sequence[TrialGroup], alpha: float = 0.05
                          ) -> list[tuple[str, str, float, bool]]:
    """Welch t-tests on every pair with a Bonferroni correction.

    A stand-in for Tukey HSD; borderline pairs can be classified
    differently.  Returns ``(label_a, label_b, adjusted_p, significant)``.
    """
    pairs = list(itertools.combinations(groups, 2))
    out = []
    for ga, gb in pairs:
        _, p = welch_t_test(ga.observations, gb.observations)
        adjusted = min(1.0, p * len(pairs))
        out.append((ga.label, gb.label, adjusted, adjusted < alpha))
    return out


@dataclass
class AnovaRow:
    size: str
    f: float
    p: float
    significant: list[str]


def anova_row(size: str, groups: Sequence[TrialGroup], alpha: float = 0.05) -> AnovaRow:
    f, p = anova_oneway(groups)
    sig = [f"{a} vs {b}" for a, b, _, ok in pairwise_significance(groups, alpha) if ok]
    return AnovaRow(size, f, p, sig)


def significance_table_csv(rows: Sequence[AnovaRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("graph_size", "f_value", "p_value", "significant_comparisons"))
    for row in rows:
        writer.writerow((row.size, f"{row.f:.6g}", f"{row.p:.6g}",
                         "; ".join(row.significant) if row.significant else "None"))
    return buf.getvalue()


def significance_table_text(rows: Sequence[AnovaRow]) -> str:
    lines = [f"{'Graph size':<12}{'F-value':>12}{'p-value':>14}  Significant comparisons (Welch, Bonferroni)"]
    for row in rows:
        sig = ", ".join(row.significant) if row.significant else "None"
        lines.append(f"{row.size:<12}{row.f:>12.4g}{row.p:>14.4g}  {sig}")
    return "\n".join(lines) + "\n"
