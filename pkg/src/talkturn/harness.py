"""Chunked long-form inference with predicted-context propagation.

Each chunk of a long recording is sent to the engine with a prompt built
from the engine's own predictions for the earlier chunks, so speaker labels
can stay consistent across the whole file. Four prompt modes are supported:

* ``a``: no prompt (baseline)
* ``b``: a fixed, hand-written example dialogue
* ``c``/``d``: task prompt plus accumulated predicted context (c for an
  untuned engine, d for a tuned one; the prompts are identical)
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .engine import Engine, EngineRequest, transcribe_chunk
from .errors import EngineError, ValidationError
from .prompting import PromptConfig, Tokenizer, compose_prompt, make_task_prompt, tokenizer_for
from .transcript import (
    UNLABELED,
    SpeakerLabel,
    TimedWord,
    Turn,
    label_from_token,
    parse_labeled_text,
    render_labeled_text,
)

log = logging.getLogger(__name__)

MODES = ("a", "b", "c", "d")


@dataclass
class ChunkPlan:
    audio_id: str
    windows: list[tuple[float, float]]
    source: str = "fixed"  # or "vad-aligned"


@dataclass
class LabelStats:
    total_labels: int = 0
    per_label: dict[str, int] = field(default_factory=dict)
    oov_labels: list[tuple[str, int]] = field(default_factory=list)

    @property
    def oov_fraction(self) -> float:
        if not self.total_labels:
            return 0.0
        return sum(c for _, c in self.oov_labels) / self.total_labels

    def as_dict(self) -> dict:
        return {
            "total_labels": self.total_labels,
            "per_label": dict(self.per_label),
            "oov_labels": [list(x) for x in self.oov_labels],
            "oov_fraction": self.oov_fraction,
        }


def label_stats(texts: Iterable[str]) -> LabelStats:
    """Count label tokens in raw engine outputs."""
    counts: Counter[SpeakerLabel] = Counter()
    for text in texts:
        for token in text.split():
            label = label_from_token(token)
            if label is not None:
                counts[label] += 1
    ordered = sorted(counts.items(), key=lambda kv: (not kv[0].is_canonical, kv[0].name))
    return LabelStats(
        total_labels=sum(counts.values()),
        per_label={lab.name: c for lab, c in ordered},
        oov_labels=[(lab.name, c) for lab, c in ordered if lab.is_oov],
    )


def plan_chunks(
    duration_s: float,
    vad_segments: Sequence[tuple[float, float]] | None = None,
    chunk_limit_s: float = 30.0,
    audio_id: str = "",
    snap_from: float = 0.8,
) -> ChunkPlan:
    """Split a recording into model windows of at most ``chunk_limit_s``.

    Without VAD: fixed consecutive windows. With VAD (speech segments), a
    window ends at the start of the longest silence that starts within
    ``[snap_from * limit, limit]`` of the window start, or hard-cuts at the
    limit; silent stretches between windows are skipped.
    """
    if duration_s <= 0:
        raise ValidationError(f"audio duration must be positive, got {duration_s}")
    if vad_segments is None:
        windows = []
        t = 0.0
        while t < duration_s:
            end = min(t + chunk_limit_s, duration_s)
            windows.append((t, end))
            t = end
        return ChunkPlan(audio_id, windows, "fixed")

    speech = _merge_intervals((max(0.0, s), min(e, duration_s)) for s, e in vad_segments)
    if not speech:
        return ChunkPlan(audio_id, [], "vad-aligned")
    silences = [(a[1], b[0]) for a, b in zip(speech, speech[1:])]
    speech_end = speech[-1][1]

    windows = []
    w = speech[0][0]
    while w < speech_end:
        limit = w + chunk_limit_s
        if limit >= speech_end:
            windows.append((w, speech_end))
            break
        lo = w + snap_from * chunk_limit_s
        candidates = [s for s in silences if lo <= s[0] <= limit and s[1] > s[0]]
        if candidates:
            end = max(candidates, key=lambda s: (s[1] - s[0], -s[0]))[0]
        else:
            end = limit
        windows.append((w, end))
        w = _next_speech(speech, end)
    return ChunkPlan(audio_id, windows, "vad-aligned")


def _merge_intervals(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[list[float]] = []
    for s, e in sorted(intervals):
        if e <= s:
            continue
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def _next_speech(speech: list[tuple[float, float]], t: float) -> float:
    for s, e in speech:
        if e > t:
            return max(s, t)
    return speech[-1][1]


@dataclass
class ChunkRecord:
    index: int
    offset_s: float
    duration_s: float
    prompt: str
    text: str = ""
    error: str | None = None


@dataclass
class LongformResult:
    turns: list[Turn]
    words: list[TimedWord]
    stats: LabelStats
    chunks: list[ChunkRecord]

    def transcript(self) -> str:
        return render_labeled_text(self.turns, render_unlabeled=True)


def apply_aliases(text: str, aliases: dict[str, str] | None) -> str:
    for old, new in (aliases or {}).items():
        text = text.replace(old, new)
    return text


def assign_word_labels(
    turns: Sequence[Turn], words: Sequence[TimedWord]
) -> list[TimedWord]:
    """Give each timed word the label of the text token at the same position.

    When the engine's word list and the text disagree in length, word ``i``
    takes the label of token ``round(i * n_tokens / n_words)``.
    """
    token_labels = [turn.label for turn in turns for _ in turn.text.split()]
    if not token_labels:
        fallback = turns[-1].label if turns else UNLABELED
        return [TimedWord(w.word, w.start_s, w.end_s, fallback) for w in words]
    n_tok, n_words = len(token_labels), len(words)
    out = []
    for i, w in enumerate(words):
        k = i if n_tok == n_words else min(n_tok - 1, round(i * n_tok / n_words))
        out.append(TimedWord(w.word, w.start_s, w.end_s, token_labels[k]))
    return out


def run_longform(
    audio_path: str,
    plan: ChunkPlan,
    engine: Engine,
    prompt_config: PromptConfig | None = None,
    mode: str = "d",
    engineered_prompt: str | None = None,
    tokenizer: Tokenizer | None = None,
    on_error: str = "abort",
    unlabeled: str = "attach",
    label_aliases: dict[str, str] | None = None,
    options: dict[str, str] | None = None,
) -> LongformResult:
    """Transcribe a whole recording chunk by chunk.

    The prompt for chunk ``k`` depends only on the (attached) predictions for
    chunks ``< k``. Text before the first label of a chunk is attached to
    the last label seen so far (``[S1]`` on the first chunk) unless
    ``unlabeled="quarantine"``, which keeps it unlabeled. ``on_error`` is
    ``"abort"`` or ``"skip"``.
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    if not plan.windows:
        raise ValidationError(f"empty chunk plan for {audio_path}")
    if mode == "b" and not engineered_prompt:
        raise ValidationError("mode b needs an engineered prompt")
    if on_error not in ("abort", "skip") or unlabeled not in ("attach", "quarantine"):
        raise ValidationError("on_error must be abort|skip and unlabeled attach|quarantine")
    prompt_config = prompt_config or PromptConfig()
    tokenizer = tokenizer or tokenizer_for(prompt_config)
    task = make_task_prompt(prompt_config)

    all_turns: list[Turn] = []
    all_words: list[TimedWord] = []
    raw_texts: list[str] = []
    records: list[ChunkRecord] = []
    context_pieces: list[str] = []
    last_label: SpeakerLabel | None = None

    for k, (start, end) in enumerate(plan.windows):
        if mode == "a":
            prompt = ""
        elif mode == "b":
            prompt = engineered_prompt or ""
        else:
            context = " ".join(context_pieces[-prompt_config.prompt_budget :])
            prompt = compose_prompt(task, context, prompt_config, tokenizer)
        request = EngineRequest(k, audio_path, start, end - start, prompt, dict(options or {}))
        record = ChunkRecord(k, start, end - start, prompt)
        records.append(record)
        try:
            response = transcribe_chunk(engine, request)
            if response.error is not None:
                raise EngineError(f"engine error on chunk {k} of {audio_path}: {response.error}")
        except EngineError as exc:
            record.error = str(exc)
            if on_error == "abort":
                raise
            log.warning("skipping chunk %d of %s: %s", k, audio_path, exc)
            continue

        record.text = response.text
        text = apply_aliases(response.text, label_aliases)
        raw_texts.append(text)
        turns = parse_labeled_text(text)
        if turns and turns[0].label.is_unlabeled and unlabeled == "attach":
            turns[0] = Turn(last_label or SpeakerLabel.canonical(1), turns[0].text)
        words = [TimedWord(w.word, w.start_s + start, w.end_s + start) for w in response.words]
        all_words.extend(assign_word_labels(turns, words))
        all_turns.extend(turns)
        labelled = [t.label for t in turns if not t.label.is_unlabeled]
        if labelled:
            last_label = labelled[-1]
        if turns:
            context_pieces.append(render_labeled_text(turns, render_unlabeled=True))

    return LongformResult(all_turns, all_words, label_stats(raw_texts), records)


@dataclass
class DegenerateSpan:
    kind: str  # "shared_start" or "zero_duration"
    start_index: int
    end_index: int  # exclusive
    start_s: float

    @property
    def length(self) -> int:
        return self.end_index - self.start_index


def detect_degenerate_timestamps(words: Sequence[TimedWord], min_run: int = 3) -> list[DegenerateSpan]:
    """Flag runs of at least ``min_run`` consecutive words sharing a start time,
    and every zero-duration word."""
    spans = []
    i = 0
    while i < len(words):
        j = i + 1
        while j < len(words) and words[j].start_s == words[i].start_s:
            j += 1
        if j - i >= min_run:
            spans.append(DegenerateSpan("shared_start", i, j, words[i].start_s))
        i = j
    for i, w in enumerate(words):
        if w.degenerate:
            spans.append(DegenerateSpan("zero_duration", i, i + 1, w.start_s))
    return spans
