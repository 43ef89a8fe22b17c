"""WER, concatenated minimum-permutation WER (cpWER) and filler-word hit rates."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import ScoringError
from ..transcript import Turn
from .align import Alignment, WerCounts, align_words, edit_distance
from .normalize import normalize_text

EXHAUSTIVE_MAX_STREAMS = 6


def wer_alignment(
    ref_text: str, hyp_text: str, lang: str = "nl", speller: Callable[[str], str] | None = None
) -> Alignment:
    return align_words(normalize_text(ref_text, lang, speller), normalize_text(hyp_text, lang, speller))


def compute_wer(
    ref_text: str, hyp_text: str, lang: str = "nl", speller: Callable[[str], str] | None = None
) -> WerCounts:
    """Word error rate between two label-free texts after normalisation."""
    counts = wer_alignment(ref_text, hyp_text, lang, speller).counts
    if counts.n_ref == 0 and counts.ins > 0:
        raise ScoringError("WER is undefined: empty reference with a non-empty hypothesis")
    return counts


def speaker_streams(
    turns: Iterable[Turn], lang: str = "nl", speller: Callable[[str], str] | None = None
) -> dict[Hashable, list[str]]:
    """Per-speaker normalised word streams, in order of first appearance."""
    streams: dict[Hashable, list[str]] = {}
    for turn in turns:
        streams.setdefault(turn.label, []).extend(normalize_text(turn.text, lang, speller))
    return streams


def _best_assignment(cost: np.ndarray, method: str) -> list[tuple[int, int]]:
    k = cost.shape[0]
    if method == "auto":
        method = "exhaustive" if k <= EXHAUSTIVE_MAX_STREAMS else "assignment"
    if method == "assignment":
        rows, cols = linear_sum_assignment(cost)
        return list(zip(rows.tolist(), cols.tolist()))
    if method != "exhaustive":
        raise ValueError(f"unknown cpWER method {method!r}")
    best, best_perm = None, None
    for perm in itertools.permutations(range(k)):
        total = sum(cost[i, p] for i, p in enumerate(perm))
        if best is None or total < best:
            best, best_perm = total, perm
    return list(enumerate(best_perm))


def compute_cpwer(
    ref_turns: Sequence[Turn],
    hyp_turns: Sequence[Turn],
    method: str = "auto",
    lang: str = "nl",
    speller: Callable[[str], str] | None = None,
) -> tuple[WerCounts, list[tuple[Hashable | None, Hashable | None]]]:
    """cpWER: errors minimised over bijections between speaker streams.

    The side with fewer speakers is padded with empty streams, so unmatched
    reference speakers count as deletions and unmatched hypothesis speakers
    as insertions. ``method`` is ``"exhaustive"``, ``"assignment"`` or
    ``"auto"`` (exhaustive up to six streams).

    Returns the summed counts and the ``(ref_label, hyp_label)`` pairs, with
    ``None`` standing for a padding stream.
    """
    ref = speaker_streams(ref_turns, lang, speller)
    hyp = speaker_streams(hyp_turns, lang, speller)
    n_ref_words = sum(len(s) for s in ref.values())
    n_hyp_words = sum(len(s) for s in hyp.values())
    if n_ref_words == 0:
        if n_hyp_words == 0:
            raise ScoringError("cpWER is undefined: both reference and hypothesis are empty")
        raise ScoringError("cpWER is undefined: empty reference with a non-empty hypothesis")

    ref_labels: list[Hashable | None] = list(ref)
    hyp_labels: list[Hashable | None] = list(hyp)
    k = max(len(ref_labels), len(hyp_labels))
    ref_labels += [None] * (k - len(ref_labels))
    hyp_labels += [None] * (k - len(hyp_labels))
    ref_streams = [ref.get(lab, []) if lab is not None else [] for lab in ref_labels]
    hyp_streams = [hyp.get(lab, []) if lab is not None else [] for lab in hyp_labels]

    cost = np.zeros((k, k), dtype=np.int64)
    for i, r in enumerate(ref_streams):
        for j, h in enumerate(hyp_streams):
            cost[i, j] = edit_distance(r, h)

    counts = WerCounts()
    pairs = []
    for i, j in _best_assignment(cost, method):
        if ref_labels[i] is None and hyp_labels[j] is None:
            continue
        counts = counts + align_words(ref_streams[i], hyp_streams[j]).counts
        pairs.append((ref_labels[i], hyp_labels[j]))
    return counts, pairs


@dataclass
class FillerStats:
    occurrences: int = 0
    hits: int = 0
    subs: int = 0
    dels: int = 0

    @property
    def hit_rate(self) -> float:
        return self.hits / self.occurrences if self.occurrences else 0.0


def filler_hit_rate(
    alignments: Iterable[Alignment],
    fillers: Sequence[str] | None = None,
    top_k: int | None = None,
    min_freq: int = 1,
) -> dict[str, FillerStats]:
    """Hit rate of selected reference tokens over a set of alignments.

    Tokens come from ``fillers`` (those absent from the reference are
    skipped) or, without a list, from all reference tokens. ``top_k`` then
    keeps the most frequent ones occurring at least ``min_freq`` times.
    """
    alignments = list(alignments)
    freq = Counter(r for a in alignments for r, _ in a.ops if r is not None)
    candidates = [t for t in (fillers if fillers is not None else freq) if freq[t] > 0]
    candidates = [t for t in candidates if freq[t] >= min_freq]
    if top_k is not None:
        candidates = sorted(candidates, key=lambda t: (-freq[t], t))[:top_k]
    if not candidates:
        raise ScoringError("filler selection is empty")

    stats = {t: FillerStats() for t in candidates}
    for a in alignments:
        for r, h in a.ops:
            s = stats.get(r) if r is not None else None
            if s is None:
                continue
            s.occurrences += 1
            if h is None:
                s.dels += 1
            elif h == r:
                s.hits += 1
            else:
                s.subs += 1
    return stats
