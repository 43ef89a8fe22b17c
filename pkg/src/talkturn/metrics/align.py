"""Levenshtein word alignment with hit / substitution / deletion / insertion ops."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

GAP = None


@dataclass
class WerCounts:
    hits: int = 0
    subs: int = 0
    dels: int = 0
    ins: int = 0

    @property
    def n_ref(self) -> int:
        return self.hits + self.subs + self.dels

    @property
    def errors(self) -> int:
        return self.subs + self.dels + self.ins

    @property
    def wer(self) -> float:
        """Error rate; NaN when there is no reference but there are insertions."""
        if self.n_ref == 0:
            return 0.0 if self.ins == 0 else float("nan")
        return self.errors / self.n_ref

    def __add__(self, other: "WerCounts") -> "WerCounts":
        return WerCounts(
            self.hits + other.hits,
            self.subs + other.subs,
            self.dels + other.dels,
            self.ins + other.ins,
        )

    def as_dict(self) -> dict:
        return {
            "hits": self.hits, "subs": self.subs, "dels": self.dels, "ins": self.ins,
            "n_ref": self.n_ref, "wer": self.wer,
        }


@dataclass
class Alignment:
    """Aligned (ref, hyp) pairs; ``GAP`` (None) marks deletions and insertions."""

    ops: list[tuple[str | None, str | None]] = field(default_factory=list)
    counts: WerCounts = field(default_factory=WerCounts)

    @property
    def cost(self) -> int:
        return self.counts.errors


def edit_distance(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> int:
    """Unit-cost Levenshtein distance, two rows of memory."""
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, 1):
            cur[j] = min(prev[j - 1] + (r != h), prev[j] + 1, cur[j - 1] + 1)
        prev = cur
    return prev[-1]


def align_words(ref: Sequence[str], hyp: Sequence[str]) -> Alignment:
    """Minimum edit distance alignment.

    Among equal-cost alignments the backtrace prefers, at every step from
    the end, hit over substitution over deletion over insertion.
    """
    n, m = len(ref), len(hyp)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dp[i][0] = i
    for j in range(1, m + 1):
        dp[0][j] = j
    for i in range(1, n + 1):
        row, up = dp[i], dp[i - 1]
        r = ref[i - 1]
        for j in range(1, m + 1):
            row[j] = min(up[j - 1] + (r != hyp[j - 1]), up[j] + 1, row[j - 1] + 1)

    ops: list[tuple[str | None, str | None]] = []
    counts = WerCounts()
    i, j = n, m
    while i > 0 or j > 0:
        here = dp[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dp[i - 1][j - 1] == here:
            ops.append((ref[i - 1], hyp[j - 1]))
            counts.hits += 1
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dp[i - 1][j - 1] + 1 == here:
            ops.append((ref[i - 1], hyp[j - 1]))
            counts.subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and dp[i - 1][j] + 1 == here:
            ops.append((ref[i - 1], GAP))
            counts.dels += 1
            i -= 1
        else:
            ops.append((GAP, hyp[j - 1]))
            counts.ins += 1
            j -= 1
    ops.reverse()
    return Alignment(ops, counts)
