"""Summary statistics used in reports: quartiles, Pearson r, Wilcoxon signed-rank."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from ..errors import ScoringError

EXACT_MAX_N = 20


@dataclass
class SummaryStats:
    min: float
    q2_median: float
    q3: float

    def as_dict(self) -> dict:
        return {"min": self.min, "q2_median": self.q2_median, "q3": self.q3}


@dataclass
class CorrelationResult:
    r: float
    n: int


@dataclass
class TestResult:
    statistic: float
    p_two_sided: float
    method: str  # "exact", "approx" or "degenerate"
    n: int = 0

    __test__ = False  # not a pytest class


def summarize_quartiles(values: Sequence[float]) -> SummaryStats:
    """Minimum, median and 75th percentile (linear interpolation between order statistics)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ScoringError("cannot summarise an empty sample")
    q2, q3 = np.percentile(arr, [50, 75], method="linear")
    return SummaryStats(float(arr.min()), float(q2), float(q3))


def pearson_r(xs: Sequence[float], ys: Sequence[float]) -> CorrelationResult:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise ScoringError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ScoringError("Pearson r needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ScoringError("Pearson r is undefined for a constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return CorrelationResult(max(-1.0, min(1.0, r)), int(x.size))


def _signed_rank_null_counts(doubled_ranks: np.ndarray) -> list[int]:
    """Number of sign patterns giving each value of 2*W+ (generating function product)."""
    total = int(doubled_ranks.sum())
    counts = [1] + [0] * total
    top = 0
    for r in doubled_ranks.tolist():
        for s in range(top, -1, -1):
            if counts[s]:
                counts[s + r] += counts[s]
        top += r
    return counts


def wilcoxon_signed_rank(
    xs: Sequence[float], ys: Sequence[float], method: str = "auto"
) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped and tied magnitudes get midranks. The exact
    null distribution (all 2^n sign patterns) is used for n <= 20, a normal
    approximation with continuity and tie correction above. ``statistic`` is
    min(W+, W-).
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise ScoringError(f"length mismatch: {x.size} vs {y.size}")
    d = x - y
    d = d[d != 0]
    n = int(d.size)
    if n == 0:
        return TestResult(0.0, 1.0, "degenerate", 0)

    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    total = n * (n + 1) / 2
    statistic = min(w_plus, total - w_plus)

    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "approx"
    if method == "exact":
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = _signed_rank_null_counts(doubled)
        observed = int(round(2 * w_plus))
        le = sum(counts[: observed + 1])
        ge = sum(counts[observed:])
        p = min(1.0, 2 * min(le, ge) / 2**n)
    elif method == "approx":
        mean = total / 2
        sd = math.sqrt(float(np.sum(ranks**2)) / 4)
        dev = max(abs(w_plus - mean) - 0.5, 0.0)
        p = min(1.0, math.erfc(dev / sd / math.sqrt(2)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return TestResult(statistic, p, method, n)
