"""Two-group contrasts: Welch t-test, Cohen's d and significance stars."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import betainc

ALPHA = 0.05


class DegenerateGroupsError(ValueError):
    pass


@dataclass(frozen=True)
class GroupSummary:
    n: int
    mean: float
    sd: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "GroupSummary":
        x = np.asarray(values, dtype=np.float64)
        return cls(len(x), float(x.mean()), float(x.std(ddof=1)) if len(x) > 1 else 0.0)


@dataclass(frozen=True)
class ContrastResult:
    feature_name: str
    ids: GroupSummary
    ads: GroupSummary
    cohens_d: float
    t_stat: float
    df: float
    p_two_sided: float
    stars: str
    larger_group: str


def _check_sizes(g1, g2):
    if len(g1) < 2 or len(g2) < 2:
        raise ValueError(f"each group needs at least 2 samples (got {len(g1)} and {len(g2)})")


def cohens_d(g1: Sequence[float], g2: Sequence[float]) -> float:
    """|m1 - m2| / pooled sample sd."""
    a = np.asarray(g1, dtype=np.float64)
    b = np.asarray(g2, dtype=np.float64)
    _check_sizes(a, b)
    n1, n2 = len(a), len(b)
    pooled = math.sqrt(((n1 - 1) * a.var(ddof=1) + (n2 - 1) * b.var(ddof=1)) / (n1 + n2 - 2))
    diff = abs(float(a.mean() - b.mean()))
    if pooled == 0.0:
        if diff == 0.0:
            return 0.0
        raise DegenerateGroupsError("degenerate groups: zero pooled sd with unequal means")
    return diff / pooled


def t_cdf(t: float, df: float) -> float:
    """Student-t CDF via the regularized incomplete beta function."""
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * float(betainc(df / 2.0, 0.5, x))
    return tail if t < 0 else 1.0 - tail


def t_sf_two_sided(t: float, df: float) -> float:
    x = df / (df + t * t)
    return float(min(1.0, betainc(df / 2.0, 0.5, x)))


def welch_t_test(g1: Sequence[float], g2: Sequence[float]) -> tuple[float, float, float]:
    """(t, Welch–Satterthwaite df, two-sided p)."""
    a = np.asarray(g1, dtype=np.float64)
    b = np.asarray(g2, dtype=np.float64)
    _check_sizes(a, b)
    v1 = a.var(ddof=1) / len(a)
    v2 = b.var(ddof=1) / len(b)
    if v1 == 0.0 and v2 == 0.0:
        raise DegenerateGroupsError("both groups have zero variance")
    se2 = v1 + v2
    t = float((a.mean() - b.mean()) / math.sqrt(se2))
    df = float(se2 * se2 / (v1 * v1 / (len(a) - 1) + v2 * v2 / (len(b) - 1)))
    return t, df, t_sf_two_sided(t, df)


def stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "ns"


def compare_groups(feature_name: str, ids: Sequence[float], ads: Sequence[float]) -> ContrastResult:
    ids = [float(v) for v in ids]
    ads = [float(v) for v in ads]
    if len(ids) < 2 or len(ads) < 2:
        raise ValueError(
            f"feature {feature_name!r}: need >= 2 IDS and >= 2 ADS values (got {len(ids)} IDS, {len(ads)} ADS)"
        )
    g_ids, g_ads = GroupSummary.of(ids), GroupSummary.of(ads)
    try:
        t, df, p = welch_t_test(ids, ads)
    except DegenerateGroupsError:
        if g_ids.mean != g_ads.mean:
            raise
        t, df, p = 0.0, float(len(ids) + len(ads) - 2), 1.0
    d = cohens_d(ids, ads)
    larger = "none"
    if p < ALPHA:
        larger = "IDS" if g_ids.mean > g_ads.mean else "ADS"
    return ContrastResult(feature_name, g_ids, g_ads, d, t, df, p, stars(p), larger)


def contrast(rows: Iterable, feature_name: str) -> ContrastResult:
    """Contrast IDS vs ADS for one feature over feature-table rows.

    Rows need ``register`` and a ``value(feature_name)`` accessor returning
    None for missing values; missing and errored rows are skipped.
    """
    ids: list[float] = []
    ads: list[float] = []
    for row in rows:
        value: Optional[float] = row.value(feature_name)
        if value is None:
            continue
        (ids if row.register == "IDS" else ads).append(value)
    return compare_groups(feature_name, ids, ads)
