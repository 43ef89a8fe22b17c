"""Simulated engine and synthetic conversations for error-propagation studies.

:class:`SimulatedEngine` plays back reference speech with seeded word and
label corruption. Its label choice for a chunk is read off the prompt: the
context turns are lined up, newest first, with the true speakers of the
previously emitted turns, and every speaker keeps whatever label the
context last gave it. A label flipped in chunk ``k`` therefore sticks in
every later chunk until another flip, the way a prompted model inherits
its own mistakes. With ``propagation=False`` the engine ignores the context
and always uses the true speaker order.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .corpus import derive_seed
from .engine import WORD_TIME_TOLERANCE_S, Engine, EngineRequest, EngineResponse, EngineWord
from .errors import ValidationError
from .harness import plan_chunks, run_longform
from .metrics.der import der_over_horizons
from .metrics.stats import wilcoxon_signed_rank
from .prompting import PromptConfig, make_task_prompt
from .transcript import (
    MAX_SPEAKERS,
    SpeakerLabel,
    Utterance,
    parse_labeled_text,
    utterances_to_segments,
    words_to_segments,
)

FILLER_VOCAB = (
    "ja", "nee", "uh", "uhm", "oh", "m", "dat", "is", "de", "het", "een", "en", "toen",
    "goed", "hoor", "niet", "wel", "maar", "ik", "jij", "we", "zo", "nou", "dus",
    "film", "gisteren", "morgen", "weer", "mooi", "leuk", "gaan", "moeten", "denk",
)


@dataclass
class ErrorModel:
    p_sub: float = 0.0
    p_del: float = 0.0
    p_ins: float = 0.0
    p_label_flip: float = 0.0
    p_label_omit: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("p_sub", "p_del", "p_ins", "p_label_flip", "p_label_omit"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {value}")


@dataclass
class RefWord:
    """A reference word with its utterance index and true speaker."""

    word: str
    start_s: float
    end_s: float
    speaker: str
    utterance: int


def reference_words(utts: Sequence[Utterance]) -> list[RefWord]:
    """Spread each utterance's tokens evenly over its time span."""
    out = []
    for k, u in enumerate(utts):
        tokens = u.text.split()
        step = u.duration / len(tokens) if tokens else 0.0
        for i, tok in enumerate(tokens):
            end = u.end_s if i == len(tokens) - 1 else u.start_s + (i + 1) * step
            out.append(RefWord(tok, u.start_s + i * step, end, u.speaker_id, k))
    return out


def _stable_int(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def _context_turns(prompt: str, task_prompt: str) -> list[SpeakerLabel]:
    if prompt.startswith(task_prompt):
        prompt = prompt[len(task_prompt) :]
    elif not prompt.lstrip().startswith("[S"):
        return []  # no prompt, or an engineered example dialogue
    return [t.label for t in parse_labeled_text(prompt) if not t.label.is_unlabeled]


def infer_label_map(
    context_labels: Sequence[SpeakerLabel],
    history: Sequence[str],
    speakers_in_chunk: Sequence[str],
    true_map: dict[str, SpeakerLabel],
    max_speakers: int = MAX_SPEAKERS,
) -> dict[str, SpeakerLabel]:
    """Labels the engine will use, resolved relative to the prompt context.

    Context turns and the true speakers of previously emitted turns are
    paired from the newest backwards; the first pairing seen for a speaker
    wins. Speakers the context does not cover take their true label if it
    is still free, else the lowest free canonical label.
    """
    mapping: dict[str, SpeakerLabel] = {}
    used: set[SpeakerLabel] = set()
    for label, speaker in zip(reversed(context_labels), reversed(history)):
        if speaker not in mapping and label not in used:
            mapping[speaker] = label
            used.add(label)
    for speaker in speakers_in_chunk:
        if speaker in mapping:
            continue
        preferred = true_map.get(speaker)
        if preferred is not None and preferred not in used:
            label = preferred
        else:
            free = [n for n in range(1, max_speakers + 1) if SpeakerLabel.canonical(n) not in used]
            label = SpeakerLabel.canonical(free[0]) if free else SpeakerLabel.canonical(max_speakers)
        mapping[speaker] = label
        used.add(label)
    return mapping


def simulate_engine_response(
    chunk_words: Sequence[RefWord],
    label_map: dict[str, SpeakerLabel],
    error_model: ErrorModel,
    request: EngineRequest,
    rng: np.random.Generator,
    max_speakers: int = MAX_SPEAKERS,
) -> tuple[EngineResponse, list[str]]:
    """Corrupt the reference words of one chunk into an engine response.

    Returns the response and the true speaker of every emitted turn (one
    per reference utterance touched by the chunk, before label omission).
    """
    turns: list[tuple[str, list[RefWord]]] = []
    for w in sorted(chunk_words, key=lambda w: (w.utterance, w.start_s)):
        if turns and turns[-1][1][0].utterance == w.utterance:
            turns[-1][1].append(w)
        else:
            turns.append((w.speaker, [w]))

    pieces: list[str] = []
    words: list[EngineWord] = []
    em = error_model
    for speaker, turn_words in turns:
        label = label_map[speaker]
        if rng.random() < em.p_label_flip:
            others = [n for n in range(1, max_speakers + 1) if n != label.index]
            label = SpeakerLabel.canonical(int(rng.choice(others)))
        if not rng.random() < em.p_label_omit:
            pieces.append(label.render())
        for w in turn_words:
            start = w.start_s - request.offset_s
            # a long word starting near the chunk end must stay within the contract
            end = min(w.end_s - request.offset_s, request.duration_s + WORD_TIME_TOLERANCE_S)
            if rng.random() < em.p_del:
                continue
            token = w.word
            if rng.random() < em.p_sub:
                token = _other_word(token, rng)
            pieces.append(token)
            words.append(EngineWord(token, start, end))
            if rng.random() < em.p_ins:
                extra = _other_word(token, rng)
                pieces.append(extra)
                words.append(EngineWord(extra, end, end))
    response = EngineResponse(request.id, " ".join(pieces), words)
    return response, [speaker for speaker, _ in turns]


def _other_word(token: str, rng: np.random.Generator) -> str:
    while True:
        candidate = FILLER_VOCAB[int(rng.integers(len(FILLER_VOCAB)))]
        if candidate != token:
            return candidate


class SimulatedEngine(Engine):
    """Engine replaying reference utterances through an :class:`ErrorModel`.

    ``references`` maps an audio path (or id) to its utterances. Requests
    for chunk id 0 reset that audio's history. Words are assigned to the
    chunk containing their start time.
    """

    identity = "simulated"

    def __init__(
        self,
        references: dict[str, Sequence[Utterance]],
        error_model: ErrorModel | None = None,
        propagation: bool = True,
        prompt_config: PromptConfig | None = None,
    ):
        self.error_model = error_model or ErrorModel()
        self.propagation = propagation
        self.prompt_config = prompt_config or PromptConfig()
        self.task_prompt = make_task_prompt(self.prompt_config)
        self._refs: dict[str, list[RefWord]] = {}
        self._true_maps: dict[str, dict[str, SpeakerLabel]] = {}
        for key, utts in references.items():
            utts = sorted(utts, key=lambda u: (u.start_s, u.end_s))
            self._refs[key] = reference_words(utts)
            true_map: dict[str, SpeakerLabel] = {}
            for u in utts:
                if u.speaker_id not in true_map:
                    true_map[u.speaker_id] = SpeakerLabel.canonical(min(len(true_map) + 1, MAX_SPEAKERS))
            self._true_maps[key] = true_map
        self._history: dict[str, list[str]] = {}

    def _key(self, audio_path: str) -> str:
        if audio_path in self._refs:
            return audio_path
        stem = audio_path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
        if stem in self._refs:
            return stem
        raise KeyError(f"no reference for {audio_path!r}")

    def transcribe(self, request: EngineRequest) -> EngineResponse:
        key = self._key(request.audio_path)
        if request.id == 0:
            self._history[key] = []
        history = self._history.setdefault(key, [])
        lo, hi = request.offset_s, request.offset_s + request.duration_s
        chunk_words = [w for w in self._refs[key] if lo <= w.start_s < hi]

        true_map = self._true_maps[key]
        speakers = list(dict.fromkeys(w.speaker for w in sorted(chunk_words, key=lambda w: w.start_s)))
        if self.propagation:
            context = _context_turns(request.prompt, self.task_prompt)
            label_map = infer_label_map(context, history, speakers, true_map, self.prompt_config.max_speakers)
        else:
            label_map = dict(true_map)

        seed = np.random.SeedSequence([self.error_model.seed, request.id, _stable_int(key)])
        response, emitted = simulate_engine_response(
            chunk_words, label_map, self.error_model, request, np.random.default_rng(seed),
            self.prompt_config.max_speakers,
        )
        history.extend(emitted)
        return response


# -- synthetic conversations ------------------------------------------------


@dataclass
class ConversationSpec:
    """Turn-taking model: speakers alternate, turn lengths are geometric in
    words, and with ``p_interrupt`` a turn starts before the previous ends.
    Speakers beyond the first two are picked with relative weight
    ``minor_speaker_weight``, making them sporadic."""

    n_speakers: int = 2
    length_s: float = 300.0
    mean_turn_words: float = 4.0
    word_s: float = 0.35
    pause_s: float = 0.3
    p_interrupt: float = 0.1
    overlap_s: float = 0.5
    minor_speaker_weight: float = 0.25

    def __post_init__(self):
        if not 1 <= self.n_speakers <= MAX_SPEAKERS:
            raise ValidationError(f"n_speakers must be in 1..{MAX_SPEAKERS}")
        if self.length_s <= 0:
            raise ValidationError("conversation length must be positive")
        if self.mean_turn_words < 1 or self.word_s <= 0:
            raise ValidationError("mean_turn_words must be >= 1 and word_s positive")


def synthesize_conversation(audio_id: str, spec: ConversationSpec, seed: int) -> list[Utterance]:
    rng = np.random.default_rng(derive_seed(seed, audio_id))
    speakers = [f"spk{chr(ord('A') + i)}" for i in range(spec.n_speakers)]
    weights = np.array([1.0 if i < 2 else spec.minor_speaker_weight for i in range(spec.n_speakers)])
    utts = []
    t = 0.0
    prev_end = 0.0
    current = 0
    while True:
        n_words = int(rng.geometric(1.0 / spec.mean_turn_words))
        duration = n_words * spec.word_s
        if utts and rng.random() < spec.p_interrupt:
            start = max(utts[-1].start_s + spec.word_s, prev_end - spec.overlap_s)
        else:
            start = t
        end = start + duration
        if end > spec.length_s:
            break
        text = " ".join(FILLER_VOCAB[int(i)] for i in rng.integers(len(FILLER_VOCAB), size=n_words))
        utts.append(Utterance(audio_id, speakers[current], round(start, 3), round(end, 3), text))
        prev_end = end
        t = end + spec.pause_s
        if spec.n_speakers > 1:
            w = weights.copy()
            w[current] = 0.0
            current = int(rng.choice(spec.n_speakers, p=w / w.sum()))
    return utts


@dataclass
class ExperimentSpec:
    error_model: ErrorModel = field(default_factory=ErrorModel)
    n_synthetic_audios: int = 50
    speakers_per_audio: int = 2
    audio_length_s: float = 300.0
    horizons: tuple[float | None, ...] = (30.0, 120.0, None)
    propagation: str = "both"  # "on", "off" or "both"
    conversation: ConversationSpec | None = None
    chunk_limit_s: float = 30.0
    collar_s: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.n_synthetic_audios < 1:
            raise ValidationError("n_synthetic_audios must be at least 1")
        if self.audio_length_s <= 0:
            raise ValidationError("audio_length_s must be positive")
        if self.propagation not in ("on", "off", "both"):
            raise ValidationError("propagation must be on, off or both")
        values = [math.inf if h is None else h for h in self.horizons]
        if not values or values != sorted(values) or values[0] <= 0:
            raise ValidationError("horizons must be positive and ascending")


def _horizon_name(h: float) -> str:
    return "full" if math.isinf(h) else f"{h:g}s"


def run_experiment(spec: ExperimentSpec) -> dict:
    """Score horizon DER with and without context propagation on synthetic audio.

    Returns a JSON-ready report: per-audio rows, median DER per horizon and
    condition, and two-sided Wilcoxon tests of first-horizon vs full-audio
    DER within each condition and of ON vs OFF at full length.
    """
    conv = spec.conversation or ConversationSpec(
        n_speakers=spec.speakers_per_audio, length_s=spec.audio_length_s
    )
    conditions = {"on": [True], "off": [False], "both": [True, False]}[spec.propagation]
    audios = {}
    for i in range(spec.n_synthetic_audios):
        audio_id = f"sim{i:04d}"
        utts = synthesize_conversation(audio_id, conv, spec.seed)
        if not utts:
            raise ValidationError("audio too short to hold a single turn")
        audios[audio_id] = utts

    rows = []
    der_table: dict[str, dict[str, list[float]]] = {}
    for propagate in conditions:
        cond = "on" if propagate else "off"
        engine = SimulatedEngine(audios, spec.error_model, propagation=propagate)
        per_h = der_table.setdefault(cond, {})
        for audio_id, utts in audios.items():
            plan = plan_chunks(conv.length_s, chunk_limit_s=spec.chunk_limit_s, audio_id=audio_id)
            result = run_longform(audio_id, plan, engine, mode="d")
            words = sorted(result.words, key=lambda w: (w.start_s, w.end_s))
            hyp = words_to_segments(words, gap_s=0.0, audio_id=audio_id)
            ref = utterances_to_segments(utts)
            row = {"audio_id": audio_id, "propagation": cond}
            for hd in der_over_horizons(ref, hyp, spec.horizons, spec.collar_s):
                name = _horizon_name(hd.horizon)
                row[f"der_{name}"] = hd.der if hd.scorable else None
                if hd.scorable:
                    per_h.setdefault(name, []).append(hd.der)
            rows.append(row)

    names = [_horizon_name(math.inf if h is None else h) for h in spec.horizons]
    summary: dict[str, dict] = {}
    for cond, per_h in der_table.items():
        medians = {name: float(np.median(per_h[name])) for name in names if per_h.get(name)}
        cond_rows = [r for r in rows if r["propagation"] == cond]
        first, last = names[0], names[-1]
        paired = [
            (r[f"der_{first}"], r[f"der_{last}"])
            for r in cond_rows
            if r[f"der_{first}"] is not None and r[f"der_{last}"] is not None
        ]
        test = wilcoxon_signed_rank([a for a, _ in paired], [b for _, b in paired])
        summary[cond] = {
            "median_der": medians,
            f"wilcoxon_{first}_vs_{last}": asdict(test),
        }
    if len(der_table) == 2:
        last = names[-1]
        full = {(r["audio_id"], r["propagation"]): r[f"der_{last}"] for r in rows}
        pairs = [(full[a, "on"], full[a, "off"]) for a in audios
                 if full[a, "on"] is not None and full[a, "off"] is not None]
        test = wilcoxon_signed_rank([x for x, _ in pairs], [y for _, y in pairs])
        summary["on_vs_off"] = {f"wilcoxon_{last}": asdict(test)}

    return {
        "spec": _spec_dict(spec, conv),
        "summary": summary,
        "per_audio": rows,
    }


def _spec_dict(spec: ExperimentSpec, conv: ConversationSpec) -> dict:
    d = asdict(spec)
    d["horizons"] = [None if h is None else h for h in spec.horizons]
    d["conversation"] = asdict(conv)
    return d
