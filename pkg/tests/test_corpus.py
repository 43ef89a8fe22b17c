import random

import pytest
from scipy.stats import binom

from talkturn.corpus import (
    build_training_set,
    derive_seed,
    filter_utterances,
    format_utterance_text,
    infer_sentence_starts,
    inject_speaker_labels,
    map_speakers_canonical,
    merge_into_chunks,
    prepare_corpus,
    read_training_samples,
    write_training_samples,
)
from talkturn.errors import ValidationError
from talkturn.prompting import make_task_prompt, truncate_context_left
from talkturn.transcript import Utterance, label_from_token, parse_labeled_text

TASK = make_task_prompt()


def utt(text, spk="A", start=0.0, end=1.0, audio="a1"):
    return Utterance(audio, spk, start, end, text)


def series(durations, spk_cycle=("S1", "S2"), audio="a1", texts=None):
    out, t = [], 0.0
    for i, d in enumerate(durations):
        text = texts[i] if texts else f"woord{i}."
        out.append(Utterance(audio, spk_cycle[i % len(spk_cycle)], t, t + d, text))
        t += d
    return out


class TestFilter:
    def test_markers(self):
        kept, dropped = filter_utterances([utt("hallo"), utt("xxx"), utt("ja ggg nee")])
        assert [u.text for u in kept] == ["hallo"] and dropped == 2

    def test_empty(self):
        assert filter_utterances([]) == ([], 0)

    def test_token_boundary(self):
        kept, dropped = filter_utterances([utt("maximaal")])
        assert len(kept) == 1 and dropped == 0


class TestFormat:
    def test_fragment_padding(self):
        assert format_utterance_text("en toen", starts_sentence=False) == "...en toen..."

    def test_capitalisation(self):
        assert format_utterance_text("dat is klaar.") == "Dat is klaar."

    def test_star_marker_and_padding(self):
        assert format_utterance_text("woord*a en", starts_sentence=False) == "...woord en..."

    def test_inner_sentences_capitalised(self):
        assert format_utterance_text("ja. nee? goed!") == "Ja. Nee? Goed!"

    def test_sentence_start_heuristic(self):
        utts = [utt("en toen", "A"), utt("ja.", "B"), utt("gingen we", "A"), utt("nee.", "A")]
        assert infer_sentence_starts(utts) == [True, True, False, False]

    def test_metadata_wins(self):
        utts = [utt("en toen", "A"), utt("gingen we", "A")]
        assert infer_sentence_starts(utts, [None, True]) == [True, True]


class TestSpeakerMapping:
    def test_first_appearance(self):
        out, mapping = map_speakers_canonical([utt("a", "spkB"), utt("b", "spkA"), utt("c", "spkB")])
        assert [u.speaker_id for u in out] == ["S1", "S2", "S1"]
        assert mapping == {"a1": {"spkB": "S1", "spkA": "S2"}}

    def test_single_speaker(self):
        out, _ = map_speakers_canonical([utt("a", "x"), utt("b", "x")])
        assert {u.speaker_id for u in out} == {"S1"}

    def test_six_speakers(self):
        with pytest.raises(ValidationError, match="a7"):
            map_speakers_canonical([utt("w", f"s{i}", audio="a7") for i in range(6)])


class TestInjectLabels:
    def test_two_speakers(self):
        assert inject_speaker_labels([utt("Ja.", "S1"), utt("Nee.", "S2")]) == "[S1] Ja. [S2] Nee."

    def test_literal(self):
        assert inject_speaker_labels([utt("Ja.", "S1"), utt("Goed.", "S1")]) == "[S1] Ja. [S1] Goed."

    def test_collapse(self):
        assert inject_speaker_labels([utt("Ja.", "S1"), utt("Goed.", "S1")], collapse=True) == "[S1] Ja. Goed."


class TestMerge:
    def test_duration_limit(self):
        chunks = merge_into_chunks(series([12, 12, 12]))
        assert [len(c.utterances) for c in chunks] == [2, 1]

    def test_single(self):
        assert len(merge_into_chunks(series([5]))) == 1

    def test_token_budget(self):
        texts = [" ".join(["w"] * 199), " ".join(["w"] * 99)]
        chunks = merge_into_chunks(series([1, 1], texts=texts))
        assert len(chunks) == 2

    def test_too_long_utterance(self):
        with pytest.raises(ValidationError):
            merge_into_chunks(series([31]))

    def test_partition_and_limits(self):
        rng = random.Random(3)
        utts = series([rng.uniform(0.5, 9) for _ in range(80)], texts=[
            " ".join(["w"] * rng.randint(1, 60)) for _ in range(80)
        ])
        chunks = merge_into_chunks(utts)
        assert [u for c in chunks for u in c.utterances] == utts
        for c in chunks:
            assert c.end_s - c.start_s <= 30
            assert len(c.target_text.split()) <= 224


class TestTrainingSet:
    def chunks(self, n_audios=3, n=8):
        utts = []
        for a in range(n_audios):
            utts += series([10] * (3 * n), audio=f"a{a}")
        return merge_into_chunks(utts)

    def test_no_dropout(self):
        samples = build_training_set(self.chunks(), dropout_rate=0.0)
        for s in samples:
            assert s.prompt.startswith(TASK) and not s.context_dropped
            assert (s.prompt == TASK) == (s.chunk_index == 0)

    def test_full_dropout(self):
        samples = build_training_set(self.chunks(), dropout_rate=1.0)
        assert all(s.prompt == TASK and s.target.startswith("[S1]") for s in samples)

    def test_seeded_files_identical(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_training_samples(build_training_set(self.chunks(), seed=7), a)
        write_training_samples(build_training_set(self.chunks(), seed=7), b)
        assert a.read_bytes() == b.read_bytes()
        assert read_training_samples(a) == build_training_set(self.chunks(), seed=7)

    def test_context_is_truncated_reference(self):
        chunks = self.chunks(1, 20)
        samples = build_training_set(chunks, dropout_rate=0.0)
        for k, s in enumerate(samples[1:], 1):
            prior = " ".join(c.target_text for c in chunks[:k])
            expected = truncate_context_left(prior, 224 - 5 - 1)
            assert s.prompt == TASK + " " + expected
            assert len(s.prompt.split()) <= 224

    def test_targets_open_with_label(self):
        for s in build_training_set(self.chunks(), dropout_rate=0.5, seed=1):
            assert label_from_token(s.target.split()[0]) is not None

    def test_per_file_seed_independent_of_order(self):
        chunks = self.chunks()
        forward = {(s.audio_id, s.chunk_index): s for s in build_training_set(chunks, 0.5, seed=3)}
        reverse = {(s.audio_id, s.chunk_index): s for s in build_training_set(chunks[::-1], 0.5, seed=3)}
        assert {k: v.context_dropped for k, v in forward.items()} == {
            k: v.context_dropped for k, v in reverse.items()
        }

    def test_dropout_fraction_binomial(self):
        chunks = self.chunks(n_audios=120, n=10)
        samples = build_training_set(chunks, dropout_rate=0.2, seed=11)
        n = len(samples)
        assert n >= 1000
        lo, hi = binom.interval(0.99, n, 0.2)
        assert lo <= sum(s.context_dropped for s in samples) <= hi

    def test_derive_seed_stable(self):
        assert derive_seed(0, "a1") == derive_seed(0, "a1") != derive_seed(1, "a1")


class TestPrepare:
    def test_tiny_corpus(self):
        utts = [utt("hallo daar.", "x", 0, 1), utt("ja", "y", 1, 2), utt("xxx", "x", 2, 3)]
        samples, report = prepare_corpus(utts)
        assert samples[0].prompt == TASK and samples[0].target.startswith("[S1] Hallo daar.")
        assert report.n_dropped_markers == 1 and report.n_samples == len(samples) >= 1

    def test_relabelled_dropout_target(self):
        utts = series([10] * 9, spk_cycle=("b", "a"))
        samples, _ = prepare_corpus(utts, dropout_rate=1.0)
        for s in samples:
            assert parse_labeled_text(s.target)[0].label.name == "S1"
