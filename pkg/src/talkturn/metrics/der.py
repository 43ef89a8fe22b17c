"""Diarization error rate by exact interval sweep, with a forgiveness collar."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import ScoringError, ValidationError
from ..transcript import SpeakerSegment

# Boundaries are snapped to this grid so that float noise in derived
# timestamps (offset + relative time) does not create sliver intervals.
TIME_RESOLUTION_DIGITS = 6


def _snap(t: float) -> float:
    return round(t, TIME_RESOLUTION_DIGITS)


@dataclass
class DerBreakdown:
    scored_ref_time: float
    missed: float
    false_alarm: float
    confusion: float
    mapping: dict[Hashable, Hashable] = field(default_factory=dict)

    @property
    def der(self) -> float:
        return (self.missed + self.false_alarm + self.confusion) / self.scored_ref_time

    def as_dict(self) -> dict:
        return {
            "der": self.der,
            "scored_ref_time": self.scored_ref_time,
            "missed": self.missed,
            "false_alarm": self.false_alarm,
            "confusion": self.confusion,
            "mapping": {str(h): str(r) for h, r in self.mapping.items()},
        }


def _no_score_zones(ref: Sequence[SpeakerSegment], collar_s: float, collar_mode: str) -> list[tuple[float, float]]:
    if collar_s <= 0:
        return []
    if collar_mode == "half":
        w = collar_s / 2
    elif collar_mode == "full":
        w = collar_s
    else:
        raise ValidationError(f"collar_mode must be 'half' or 'full', got {collar_mode!r}")
    zones = sorted((_snap(b - w), _snap(b + w)) for seg in ref for b in (_snap(seg.start_s), _snap(seg.end_s)))
    merged: list[list[float]] = []
    for lo, hi in zones:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def _activity(segments: Sequence[SpeakerSegment], mids: np.ndarray) -> tuple[list, np.ndarray]:
    """Speaker labels and a (n_intervals, n_speakers) activity matrix."""
    labels = list(dict.fromkeys(seg.label for seg in segments))
    active = np.zeros((len(mids), len(labels)), dtype=bool)
    index = {lab: k for k, lab in enumerate(labels)}
    for seg in segments:
        lo = np.searchsorted(mids, _snap(seg.start_s), side="right")
        hi = np.searchsorted(mids, _snap(seg.end_s), side="left")
        active[lo:hi, index[seg.label]] = True
    return labels, active


def compute_der(
    ref: Sequence[SpeakerSegment],
    hyp: Sequence[SpeakerSegment],
    collar_s: float = 0.25,
    collar_mode: str = "half",
    uem: tuple[float, float] | None = None,
) -> DerBreakdown:
    """Overlap-aware DER with an optimal one-to-one speaker mapping.

    Time within ``collar_s / 2`` of any reference boundary is not scored
    (``collar_mode="full"`` widens that to ``collar_s`` on each side).
    ``uem`` restricts scoring to one ``(start, end)`` window.
    """
    zones = _no_score_zones(ref, collar_s, collar_mode)
    points = {_snap(p) for seg in (*ref, *hyp) for p in (seg.start_s, seg.end_s)}
    points.update(p for z in zones for p in z)
    if uem is not None:
        points.update(_snap(p) for p in uem if math.isfinite(p))
    edges = np.array(sorted(points), dtype=float)
    if len(edges) < 2:
        raise ScoringError("DER is undefined: no reference speech to score")
    mids = (edges[:-1] + edges[1:]) / 2
    dur = np.diff(edges)

    scored = np.ones(len(mids), dtype=bool)
    for lo, hi in zones:
        scored &= ~((mids > lo) & (mids < hi))
    if uem is not None:
        scored &= (mids > uem[0]) & (mids < uem[1])
    dur = np.where(scored, dur, 0.0)

    ref_labels, R = _activity(ref, mids)
    hyp_labels, H = _activity(hyp, mids)
    n_ref = R.sum(axis=1)
    n_hyp = H.sum(axis=1)

    scored_ref_time = float(dur @ n_ref)
    if scored_ref_time <= 0:
        raise ScoringError("DER is undefined: no reference speech to score")

    mapping: dict[Hashable, Hashable] = {}
    correct = np.zeros(len(mids))
    if ref_labels and hyp_labels:
        overlap = (H * dur[:, None]).T @ R  # hyp x ref
        rows, cols = linear_sum_assignment(overlap, maximize=True)
        for h, r in zip(rows, cols):
            if overlap[h, r] > 0:
                mapping[hyp_labels[h]] = ref_labels[r]
                correct += H[:, h] & R[:, r]

    missed = float(dur @ np.maximum(n_ref - n_hyp, 0))
    false_alarm = float(dur @ np.maximum(n_hyp - n_ref, 0))
    confusion = float(dur @ (np.minimum(n_ref, n_hyp) - correct))
    return DerBreakdown(scored_ref_time, missed, false_alarm, max(confusion, 0.0), mapping)


@dataclass
class HorizonDer:
    horizon: float  # math.inf for the whole audio
    breakdown: DerBreakdown | None

    @property
    def scorable(self) -> bool:
        return self.breakdown is not None

    @property
    def der(self) -> float:
        return self.breakdown.der if self.breakdown is not None else float("nan")


def der_over_horizons(
    ref: Sequence[SpeakerSegment],
    hyp: Sequence[SpeakerSegment],
    horizons: Sequence[float | None] = (30.0, 120.0, None),
    collar_s: float = 0.25,
    collar_mode: str = "half",
) -> list[HorizonDer]:
    """DER over the first ``h`` seconds for each horizon; ``None`` means the whole audio.

    A horizon with no reference speech yields an unscorable entry.
    """
    values = [math.inf if h is None else float(h) for h in horizons]
    if any(v <= 0 for v in values) or values != sorted(values):
        raise ValueError("horizons must be positive and ascending")
    out = []
    for h in values:
        try:
            breakdown = compute_der(ref, hyp, collar_s, collar_mode, uem=(0.0, h))
        except ScoringError:
            breakdown = None
        out.append(HorizonDer(h, breakdown))
    return out
