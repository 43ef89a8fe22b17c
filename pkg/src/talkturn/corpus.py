"""Turn a time-aligned multi-speaker corpus into labelled training samples.

The pipeline per audio file is: drop utterances with unintelligible speech
or laughter markers, map corpus speaker ids to ``S1``..``S5`` by order of
appearance, format each utterance (marker stripping, ``...`` padding,
capitalisation), greedily merge utterances into chunks of at most 30 s and
224 label tokens, and finally emit ``(prompt, target)`` pairs whose prompt
carries the accumulated reference text of the previous chunks.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ValidationError
from .prompting import PromptConfig, Tokenizer, compose_prompt, make_task_prompt, tokenizer_for
from .transcript import (
    MAX_SPEAKERS,
    Utterance,
    canonical_relabel,
    group_by_audio,
    parse_labeled_text,
    render_labeled_text,
)

DROP_MARKERS = ("xxx", "ggg")
_TERMINAL = re.compile(r"[.?!…]$")
_STAR_MARKER = re.compile(r"\*\w*")
_SENTENCE_START = re.compile(r"([.?!]\s+[^\w]*)([^\W\d_])")
_TEXT_START = re.compile(r"^([^\w]*)([^\W\d_])")


@dataclass
class Chunk:
    audio_id: str
    start_s: float
    end_s: float
    utterances: list[Utterance]
    target_text: str

    @property
    def duration(self) -> float:
        return self.end_s - self.start_s


@dataclass
class TrainingSample:
    prompt: str
    target: str
    audio_id: str
    chunk_index: int
    context_dropped: bool


@dataclass
class PrepReport:
    n_input_utterances: int = 0
    n_dropped_markers: int = 0
    n_dropped_empty: int = 0
    n_audios: int = 0
    n_chunks: int = 0
    n_samples: int = 0
    n_context_dropped: int = 0
    dropout_fraction: float = 0.0
    speaker_maps: dict[str, dict[str, str]] = field(default_factory=dict)


def filter_utterances(
    utts: Iterable[Utterance], markers: Sequence[str] = DROP_MARKERS
) -> tuple[list[Utterance], int]:
    """Drop utterances containing a marker as a whole token (``xxx``, ``ggg``)."""
    pattern = re.compile(r"(?<!\w)(?:%s)(?!\w)" % "|".join(map(re.escape, markers)), re.IGNORECASE)
    kept, dropped = [], 0
    for u in utts:
        if pattern.search(u.text):
            dropped += 1
        else:
            kept.append(u)
    return kept, dropped


def infer_sentence_starts(
    utts: Sequence[Utterance], meta: Sequence[bool | None] | None = None
) -> list[bool]:
    """Whether each utterance opens a new sentence.

    ``meta`` (parallel to ``utts``) wins where given. Otherwise an utterance
    continues a sentence when the previous utterance of the same speaker in
    the same audio lacked terminal punctuation.
    """
    last_text: dict[tuple[str, str], str] = {}
    starts = []
    for i, u in enumerate(utts):
        known = meta[i] if meta is not None else None
        if known is not None:
            starts.append(bool(known))
        else:
            prev = last_text.get((u.audio_id, u.speaker_id))
            starts.append(prev is None or bool(_TERMINAL.search(prev.rstrip())))
        last_text[(u.audio_id, u.speaker_id)] = _STAR_MARKER.sub("", u.text).strip()
    return starts


def format_utterance_text(text: str, starts_sentence: bool = True) -> str:
    """Strip ``*`` markers, pad sentence fragments with ``...`` and capitalise.

    >>> format_utterance_text("en toen", starts_sentence=False)
    '...en toen...'
    >>> format_utterance_text("dat is klaar.")
    'Dat is klaar.'
    """
    text = " ".join(_STAR_MARKER.sub("", text).split())
    if not text:
        return ""
    if starts_sentence:
        text = _TEXT_START.sub(lambda m: m.group(1) + m.group(2).upper(), text, count=1)
    text = _SENTENCE_START.sub(lambda m: m.group(1) + m.group(2).upper(), text)
    if not starts_sentence:
        text = "..." + text
    if not _TERMINAL.search(text):
        text += "..."
    return text


def map_speakers_canonical(
    utts: Iterable[Utterance], max_speakers: int = MAX_SPEAKERS
) -> tuple[list[Utterance], dict[str, dict[str, str]]]:
    """Replace corpus speaker ids by ``S1``.. in order of first appearance per audio."""
    out = []
    mapping: dict[str, dict[str, str]] = {}
    for audio_id, group in group_by_audio(utts).items():
        local = mapping.setdefault(audio_id, {})
        for u in group:
            if u.speaker_id not in local:
                if len(local) >= max_speakers:
                    raise ValidationError(
                        f"audio {audio_id!r} has more than {max_speakers} speakers"
                    )
                local[u.speaker_id] = f"S{len(local) + 1}"
            out.append(Utterance(u.audio_id, local[u.speaker_id], u.start_s, u.end_s, u.text))
    return out, mapping


def inject_speaker_labels(utts: Iterable[Utterance], collapse: bool = False) -> str:
    """Labelled target text: ``[Sn]`` before every utterance.

    With ``collapse`` a label is only written when the speaker changes.
    Text that already carries labels keeps them.
    """
    pieces = []
    prev = None
    for u in utts:
        label = f"[{u.speaker_id}]"
        turns = parse_labeled_text(u.text)
        if turns and turns[0].label.is_unlabeled:
            if not (collapse and u.speaker_id == prev):
                pieces.append(label)
            if turns[0].text:
                pieces.append(turns[0].text)
            prev = u.speaker_id
            turns = turns[1:]
        elif not turns:
            if not (collapse and u.speaker_id == prev):
                pieces.append(label)
            prev = u.speaker_id
        for turn in turns:
            if not (collapse and turn.label.name == prev):
                pieces.append(turn.label.render())
            if turn.text:
                pieces.append(turn.text)
            prev = turn.label.name
    return " ".join(pieces)


def merge_into_chunks(
    utts: Sequence[Utterance],
    chunk_limit_s: float = 30.0,
    label_budget: int = 224,
    tokenizer: Tokenizer | None = None,
    collapse: bool = False,
) -> list[Chunk]:
    """Greedy first-fit merge of chronological utterances into chunks.

    A new chunk starts whenever adding the next utterance would exceed the
    duration limit or the label token budget. Audio files never share a chunk.
    """
    tokenizer = tokenizer or tokenizer_for(PromptConfig())
    chunks = []
    for audio_id, group in group_by_audio(utts).items():
        current: list[Utterance] = []
        for u in group:
            if u.duration > chunk_limit_s:
                raise ValidationError(
                    f"utterance {audio_id} {u.start_s:.3f}-{u.end_s:.3f} is longer than {chunk_limit_s}s"
                )
            if tokenizer.count_tokens(inject_speaker_labels([u], collapse)) > label_budget:
                raise ValidationError(
                    f"utterance {audio_id} {u.start_s:.3f}-{u.end_s:.3f} exceeds the "
                    f"{label_budget}-token label budget"
                )
            candidate = current + [u]
            span = max(x.end_s for x in candidate) - candidate[0].start_s
            if current and (
                span > chunk_limit_s
                or tokenizer.count_tokens(inject_speaker_labels(candidate, collapse)) > label_budget
            ):
                chunks.append(_make_chunk(current, collapse))
                current = [u]
            else:
                current = candidate
        if current:
            chunks.append(_make_chunk(current, collapse))
    return chunks


def _make_chunk(utts: list[Utterance], collapse: bool) -> Chunk:
    return Chunk(
        audio_id=utts[0].audio_id,
        start_s=utts[0].start_s,
        end_s=max(u.end_s for u in utts),
        utterances=utts,
        target_text=inject_speaker_labels(utts, collapse),
    )


def derive_seed(global_seed: int, audio_id: str) -> int:
    """Per-file seed, stable across processes and platforms."""
    digest = hashlib.sha256(f"{global_seed}:{audio_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def relabel_target(target: str) -> str:
    turns, _ = canonical_relabel(parse_labeled_text(target))
    return render_labeled_text(turns, render_unlabeled=True)


def build_training_set(
    chunks: Sequence[Chunk],
    dropout_rate: float = 0.2,
    seed: int = 0,
    config: PromptConfig | None = None,
    tokenizer: Tokenizer | None = None,
) -> list[TrainingSample]:
    """Emit (prompt, target) pairs.

    The first chunk of each audio gets the task prompt only; later chunks
    get the task prompt plus the reference targets of all earlier chunks,
    left-truncated to the prompt budget. Independently each chunk is picked
    with probability ``dropout_rate`` to lose its context, in which case its
    target is relabelled to open with ``[S1]``.
    """
    if not 0.0 <= dropout_rate <= 1.0:
        raise ValidationError(f"dropout_rate must be in [0, 1], got {dropout_rate}")
    config = config or PromptConfig()
    tokenizer = tokenizer or tokenizer_for(config)
    task = make_task_prompt(config)

    per_audio: dict[str, list[Chunk]] = {}
    for chunk in chunks:
        per_audio.setdefault(chunk.audio_id, []).append(chunk)

    samples = []
    for audio_id, audio_chunks in per_audio.items():
        rng = random.Random(derive_seed(seed, audio_id))
        prior: list[str] = []
        for k, chunk in enumerate(audio_chunks):
            dropped = rng.random() < dropout_rate
            if k == 0 or dropped:
                prompt = task
            else:
                # every chunk costs at least one token, so older ones cannot survive truncation
                prompt = compose_prompt(task, " ".join(prior[-config.prompt_budget :]), config, tokenizer)
            target = relabel_target(chunk.target_text) if dropped else chunk.target_text
            samples.append(TrainingSample(prompt, target, audio_id, k, dropped))
            prior.append(chunk.target_text)
    return samples


def write_training_samples(samples: Iterable[TrainingSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            f.write(json.dumps(asdict(s), ensure_ascii=False) + "\n")


def read_training_samples(path: str | Path) -> list[TrainingSample]:
    with open(path, encoding="utf-8") as f:
        return [TrainingSample(**json.loads(line)) for line in f if line.strip()]


def prepare_corpus(
    utts: Sequence[Utterance],
    chunk_limit_s: float = 30.0,
    label_budget: int = 224,
    dropout_rate: float = 0.2,
    seed: int = 0,
    config: PromptConfig | None = None,
    collapse: bool = False,
) -> tuple[list[TrainingSample], PrepReport]:
    """The full preparation pipeline from raw utterances to training samples."""
    config = config or PromptConfig()
    tokenizer = tokenizer_for(config)
    report = PrepReport(n_input_utterances=len(utts))

    kept, report.n_dropped_markers = filter_utterances(utts)
    mapped, report.speaker_maps = map_speakers_canonical(kept, config.max_speakers)
    starts = infer_sentence_starts(mapped)
    formatted = []
    for u, start in zip(mapped, starts):
        text = format_utterance_text(u.text, start)
        if not text:
            report.n_dropped_empty += 1
            continue
        formatted.append(Utterance(u.audio_id, u.speaker_id, u.start_s, u.end_s, text))

    chunks = merge_into_chunks(formatted, chunk_limit_s, label_budget, tokenizer, collapse)
    samples = build_training_set(chunks, dropout_rate, seed, config, tokenizer)

    report.n_audios = len({c.audio_id for c in chunks})
    report.n_chunks = len(chunks)
    report.n_samples = len(samples)
    report.n_context_dropped = sum(s.context_dropped for s in samples)
    report.dropout_fraction = report.n_context_dropped / len(samples) if samples else 0.0
    return samples, report
