"""Speaker-labelled text, utterance records and diarization segments.

A labelled transcript is plain text in which whitespace-delimited tokens of
the form ``[S1]`` .. ``[S5]`` open a new speaker turn, e.g.::

    [S1] Uhm moeten langs uhm de Gamma [S2] ja

Any other single-token bracket (``[Judith]``) opens an out-of-vocabulary
(OOV) turn. Text in front of the first label forms an unlabelled turn.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ValidationError

log = logging.getLogger(__name__)

MAX_SPEAKERS = 5

_LABEL_TOKEN = re.compile(r"^\[([^\s\[\]]+)\]$")
_CANONICAL_BODY = re.compile(r"^S([1-5])$")


@dataclass(frozen=True, order=True)
class SpeakerLabel:
    """A speaker label: canonical ``S1``..``S5``, an OOV name, or none.

    Use the :meth:`canonical`, :meth:`oov` and :meth:`from_name`
    constructors, or the module level :data:`UNLABELED` constant.
    """

    kind: str
    index: int = 0
    name: str = ""

    def __post_init__(self):
        if self.kind == "canonical":
            if not 1 <= self.index <= MAX_SPEAKERS:
                raise ValidationError(f"canonical label index out of range: {self.index}")
            object.__setattr__(self, "name", f"S{self.index}")
        elif self.kind == "oov":
            if not self.name or re.search(r"[\s\[\]]", self.name):
                raise ValidationError(f"invalid OOV label name: {self.name!r}")
            if _CANONICAL_BODY.match(self.name):
                raise ValidationError(f"{self.name!r} is a canonical label, not OOV")
        elif self.kind != "unlabeled":
            raise ValidationError(f"unknown label kind: {self.kind!r}")

    @classmethod
    def canonical(cls, index: int) -> "SpeakerLabel":
        return cls("canonical", index=index)

    @classmethod
    def oov(cls, name: str) -> "SpeakerLabel":
        return cls("oov", name=name)

    @classmethod
    def from_name(cls, name: str) -> "SpeakerLabel":
        """``"S2"`` -> canonical 2, anything else -> OOV."""
        m = _CANONICAL_BODY.match(name)
        if m:
            return cls.canonical(int(m.group(1)))
        return cls.oov(name)

    @property
    def is_canonical(self) -> bool:
        return self.kind == "canonical"

    @property
    def is_oov(self) -> bool:
        return self.kind == "oov"

    @property
    def is_unlabeled(self) -> bool:
        return self.kind == "unlabeled"

    def render(self) -> str:
        if self.is_unlabeled:
            raise ValidationError("an unlabeled turn has no label token")
        return f"[{self.name}]"

    def __str__(self) -> str:
        return self.name if not self.is_unlabeled else "<unlabeled>"


UNLABELED = SpeakerLabel("unlabeled")


def label_from_token(token: str) -> SpeakerLabel | None:
    """Return the label a whitespace-delimited token denotes, or None."""
    m = _LABEL_TOKEN.match(token)
    if m is None:
        return None
    return SpeakerLabel.from_name(m.group(1))


@dataclass
class Turn:
    label: SpeakerLabel
    text: str = ""

    @property
    def words(self) -> list[str]:
        return self.text.split()


@dataclass
class Utterance:
    audio_id: str
    speaker_id: str
    start_s: float
    end_s: float
    text: str

    def __post_init__(self):
        if self.start_s < 0:
            raise ValidationError(f"utterance starts before 0: {self.start_s}")
        if not self.end_s > self.start_s:
            raise ValidationError(
                f"utterance end {self.end_s} is not after start {self.start_s} "
                f"({self.audio_id}/{self.speaker_id})"
            )

    @property
    def duration(self) -> float:
        return self.end_s - self.start_s


@dataclass
class SpeakerSegment:
    audio_id: str
    label: SpeakerLabel
    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise ValidationError(
                f"segment end {self.end_s} is not after start {self.start_s}"
            )

    @property
    def duration(self) -> float:
        return self.end_s - self.start_s


@dataclass
class TimedWord:
    """A word with absolute timestamps. Zero-width words are degenerate."""

    word: str
    start_s: float
    end_s: float
    label: SpeakerLabel = field(default=UNLABELED)

    def __post_init__(self):
        if self.end_s < self.start_s:
            raise ValidationError(
                f"word {self.word!r} ends ({self.end_s}) before it starts ({self.start_s})"
            )

    @property
    def degenerate(self) -> bool:
        return self.end_s == self.start_s


# -- labelled text ----------------------------------------------------------


def parse_labeled_text(text: str) -> list[Turn]:
    """Split labelled text into turns.

    Total: any string parses. Whitespace inside turn text is normalised to
    single spaces.
    """
    turns: list[Turn] = []
    words: list[str] = []
    label: SpeakerLabel | None = None

    def flush():
        if label is not None:
            turns.append(Turn(label, " ".join(words)))
        elif words:
            turns.append(Turn(UNLABELED, " ".join(words)))

    for token in text.split():
        new_label = label_from_token(token)
        if new_label is None:
            words.append(token)
            continue
        flush()
        label, words = new_label, []
    flush()
    return turns


def render_labeled_text(turns: Iterable[Turn], render_unlabeled: bool = False) -> str:
    """Inverse of :func:`parse_labeled_text`.

    Unlabeled turns are an error unless ``render_unlabeled`` is set, in
    which case their text is emitted without a label.
    """
    pieces = []
    for turn in turns:
        if turn.label.is_unlabeled:
            if not render_unlabeled:
                raise ValidationError("cannot render an unlabeled turn without render_unlabeled=True")
            if turn.text:
                pieces.append(turn.text)
            continue
        pieces.append(turn.label.render())
        if turn.text:
            pieces.append(turn.text)
    return " ".join(pieces)


def canonical_relabel(
    turns: Sequence[Turn], max_speakers: int = MAX_SPEAKERS
) -> tuple[list[Turn], dict[SpeakerLabel, SpeakerLabel]]:
    """Rename labels so speakers are numbered S1, S2, ... by first appearance.

    OOV labels get canonical slots like any other speaker. Unlabeled turns
    pass through untouched.
    """
    mapping: dict[SpeakerLabel, SpeakerLabel] = {}
    out = []
    for turn in turns:
        if turn.label.is_unlabeled:
            out.append(Turn(turn.label, turn.text))
            continue
        if turn.label not in mapping:
            if len(mapping) >= max_speakers:
                raise ValidationError(
                    f"more than {max_speakers} distinct speakers; cannot relabel"
                )
            mapping[turn.label] = SpeakerLabel.canonical(len(mapping) + 1)
        out.append(Turn(mapping[turn.label], turn.text))
    return out, mapping


# -- annotation stripping ---------------------------------------------------


def is_label_span(span: str) -> bool:
    """Whether a bracketed span survives annotation stripping.

    Canonical labels always do. Other single-token spans survive only when
    capitalised (speaker names such as ``[Judith]``); lowercase events like
    ``[gelach]`` and multi-word spans are annotations.
    """
    m = _LABEL_TOKEN.match(span)
    if m is None:
        return False
    body = m.group(1)
    return bool(_CANONICAL_BODY.match(body)) or body[0].isupper()


def strip_annotations_counted(
    text: str, brackets: Sequence[str] = ("[]", "()"), strip_star: bool = True
) -> tuple[str, int]:
    """Like :func:`strip_annotations` but also return the number of
    unbalanced brackets encountered.

    An opener whose span would swallow a nested opener of its kind or a
    canonical label counts as unbalanced.
    """
    closers = {pair[0]: pair[1] for pair in brackets}
    out: list[str] = []
    warnings = 0
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in closers:
            j = text.find(closers[c], i + 1)
            if j == -1 or c in text[i + 1 : j] or _INNER_LABEL.search(text, i + 1, j + 1):
                warnings += 1
                i = _token_end(text, i)
                continue
            span = text[i : j + 1]
            if c == "[" and is_label_span(span):
                out.append(f" {span} ")
            i = j + 1
        elif c == "*" and strip_star:
            i = _token_end(text, i)
        else:
            out.append(c)
            i += 1
    return " ".join("".join(out).split()), warnings


_INNER_LABEL = re.compile(r"(?<!\S)\[S[1-5]\](?!\S)")


def _token_end(text: str, i: int) -> int:
    m = re.compile(r"\s").search(text, i)
    return m.start() if m else len(text)


def strip_annotations(
    text: str, brackets: Sequence[str] = ("[]", "()"), strip_star: bool = True
) -> str:
    """Remove bracketed annotations and ``*`` markers, keeping speaker labels.

    >>> strip_annotations("[S1] ja [gelach] goed")
    '[S1] ja goed'
    >>> strip_annotations("woord *a rest")
    'woord rest'
    """
    stripped, warnings = strip_annotations_counted(text, brackets, strip_star)
    if warnings:
        log.warning("%d unbalanced bracket(s) while stripping annotations", warnings)
    return stripped


# -- utterance records ------------------------------------------------------

UTTERANCE_FIELDS = ("audio_id", "speaker_id", "start_s", "end_s", "text")


def read_utterances(path: str | Path) -> list[Utterance]:
    """Read a line-delimited JSON utterance file. Blank lines are ignored."""
    utts = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                missing = [k for k in UTTERANCE_FIELDS if k not in rec]
                if missing:
                    raise ValidationError(f"missing field(s) {', '.join(missing)}")
                utts.append(
                    Utterance(
                        audio_id=str(rec["audio_id"]),
                        speaker_id=str(rec["speaker_id"]),
                        start_s=float(rec["start_s"]),
                        end_s=float(rec["end_s"]),
                        text=str(rec["text"]),
                    )
                )
            except (ValueError, TypeError, AttributeError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    return utts


def write_utterances(utts: Iterable[Utterance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for u in utts:
            rec = {k: getattr(u, k) for k in UTTERANCE_FIELDS}
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def sort_utterances(utts: Iterable[Utterance]) -> list[Utterance]:
    return sorted(utts, key=lambda u: (u.audio_id, u.start_s, u.end_s))


def group_by_audio(utts: Iterable[Utterance]) -> dict[str, list[Utterance]]:
    """Group utterances per audio id (insertion ordered), each chronological."""
    groups: dict[str, list[Utterance]] = {}
    for u in utts:
        groups.setdefault(u.audio_id, []).append(u)
    for key in groups:
        groups[key].sort(key=lambda u: (u.start_s, u.end_s))
    return groups


def utterances_to_segments(utts: Iterable[Utterance]) -> list[SpeakerSegment]:
    """Reference diarization: one segment per utterance, labelled by speaker id."""
    return [
        SpeakerSegment(u.audio_id, SpeakerLabel.from_name(u.speaker_id), u.start_s, u.end_s)
        for u in utts
    ]


def utterances_to_turns(utts: Iterable[Utterance]) -> list[Turn]:
    return [Turn(SpeakerLabel.from_name(u.speaker_id), u.text) for u in utts]


# -- segments ---------------------------------------------------------------


def words_to_segments(
    words: Sequence[TimedWord], gap_s: float = 0.0, audio_id: str = ""
) -> list[SpeakerSegment]:
    """Merge runs of same-label words into speaker segments.

    Consecutive words with the same label merge when the gap between them
    is at most ``gap_s``; any label change splits. Unlabeled words are not
    emitted. Zero-length results (all-degenerate runs) are dropped.
    A segment is trimmed to start after the previous one of its label.
    """
    segments = []
    cur_label, cur_start, cur_end = None, 0.0, 0.0
    # same-label segments separated by another speaker may overlap; trim so
    # each label's segments stay disjoint and no time is counted twice
    label_end: dict[SpeakerLabel, float] = {}

    def flush():
        if cur_label is None or cur_label.is_unlabeled:
            return
        start = max(cur_start, label_end.get(cur_label, cur_start))
        if cur_end > start:
            segments.append(SpeakerSegment(audio_id, cur_label, start, cur_end))
            label_end[cur_label] = cur_end

    for w in words:
        if cur_label == w.label and w.start_s - cur_end <= gap_s:
            cur_end = max(cur_end, w.end_s)
            continue
        flush()
        cur_label, cur_start, cur_end = w.label, w.start_s, w.end_s
    flush()
    return segments


def write_rttm(segments: Iterable[SpeakerSegment], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for seg in segments:
            f.write(format_rttm_line(seg) + "\n")


def format_rttm_line(seg: SpeakerSegment) -> str:
    if seg.label.is_unlabeled:
        raise ValidationError("unlabeled segments cannot be written to RTTM")
    return (
        f"SPEAKER {seg.audio_id} 1 {seg.start_s:.3f} {seg.end_s - seg.start_s:.3f} "
        f"<NA> <NA> {seg.label.name} <NA> <NA>"
    )


def read_rttm(path: str | Path) -> list[SpeakerSegment]:
    """Read SPEAKER lines from an RTTM file. Comment lines (``;``) and other
    record types are skipped."""
    segments = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            fields = line.split()
            if not fields or fields[0].startswith(";"):
                continue
            if fields[0] != "SPEAKER":
                continue
            try:
                if len(fields) < 8:
                    raise ValidationError(f"expected 10 fields, got {len(fields)}")
                start, dur = float(fields[3]), float(fields[4])
                if dur <= 0:
                    raise ValidationError(f"non-positive duration {fields[4]}")
                segments.append(
                    SpeakerSegment(fields[1], SpeakerLabel.from_name(fields[7]), start, start + dur)
                )
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    return segments
