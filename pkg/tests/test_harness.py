import pytest

from talkturn.engine import EngineResponse, EngineWord, MockEngine
from talkturn.errors import EngineError, ValidationError
from talkturn.harness import (
    ChunkPlan,
    assign_word_labels,
    detect_degenerate_timestamps,
    label_stats,
    plan_chunks,
    run_longform,
)
from talkturn.prompting import PromptConfig, count_tokens, make_task_prompt
from talkturn.transcript import SpeakerLabel, TimedWord, Turn, parse_labeled_text

S = SpeakerLabel.canonical
TASK = make_task_prompt()


def fixed(duration, limit=30.0):
    return plan_chunks(duration, chunk_limit_s=limit, audio_id="a1")


class TestPlan:
    def test_fixed_windows(self):
        assert fixed(75).windows == [(0, 30), (30, 60), (60, 75)]

    def test_short(self):
        assert fixed(20).windows == [(0, 20)]

    def test_vad_snap(self):
        plan = plan_chunks(40, [(0, 26), (29, 40)])
        assert plan.windows[0] == (0, 26) and plan.source == "vad-aligned"
        assert plan.windows[1][0] == 29

    def test_vad_hard_cut(self):
        plan = plan_chunks(70, [(0, 70)])
        assert plan.windows == [(0, 30), (30, 60), (60, 70)]

    def test_vad_skips_silence(self):
        plan = plan_chunks(100, [(0, 10), (50, 60)])
        assert plan.windows == [(0, 30), (50, 60)]

    def test_vad_longest_silence_wins(self):
        plan = plan_chunks(60, [(0, 24.5), (25, 27), (29, 60)])
        assert plan.windows[0] == (0, 27)

    def test_bad_duration(self):
        with pytest.raises(ValidationError):
            plan_chunks(0)

    def test_windows_invariants(self):
        plan = plan_chunks(300, [(s, s + 7.3) for s in range(0, 290, 9)])
        for (s, e), (s2, _) in zip(plan.windows, plan.windows[1:]):
            assert e - s <= 30 and e <= s2


class TestLongform:
    def test_single_chunk(self):
        res = run_longform("a1.wav", fixed(20), MockEngine(["[S1] hallo"]))
        assert res.turns == [Turn(S(1), "hallo")]
        assert res.stats.total_labels == 1 and res.stats.oov_fraction == 0.0

    def test_unlabeled_attaches_to_last_speaker(self):
        res = run_longform("a1.wav", fixed(60), MockEngine(["[S1] a [S2] b", "ja hoor [S1] c"]))
        assert res.turns[2] == Turn(S(2), "ja hoor")

    def test_unlabeled_first_chunk_is_s1(self):
        res = run_longform("a1.wav", fixed(20), MockEngine(["ja"]))
        assert res.turns == [Turn(S(1), "ja")]

    def test_quarantine(self):
        res = run_longform("a1.wav", fixed(20), MockEngine(["ja [S2] b"]), unlabeled="quarantine")
        assert res.turns[0].label.is_unlabeled

    def test_oov_stats(self):
        res = run_longform("a1.wav", fixed(20), MockEngine(["[Judith] ja"]))
        assert res.stats.oov_labels == [("Judith", 1)] and res.stats.oov_fraction == 1.0

    def test_word_offsets_and_labels(self):
        reply = EngineResponse(0, "[S1] a [S2] b", [EngineWord("a", 1.0, 2.0), EngineWord("b", 2.0, 3.0)])
        res = run_longform("a1.wav", fixed(60), MockEngine([reply, "[S2] c"]))
        assert res.words[0] == TimedWord("a", 1.0, 2.0, S(1))
        assert res.words[1].label == S(2)
        assert res.words[2].start_s == 30.0 and res.words[2].label == S(2)

    def test_modes_differ_only_in_prompt(self):
        replies = ["[S1] a b", "[S2] c", "[S1] d"]
        recorded = {}
        for mode in "abcd":
            engine = MockEngine(replies)
            run_longform("a1.wav", fixed(90), engine, mode=mode, engineered_prompt="[Spreker 1] Hoi")
            recorded[mode] = engine.requests
        strip = lambda reqs: [(r.id, r.audio_path, r.offset_s, r.duration_s, r.options) for r in reqs]  # noqa: E731
        assert strip(recorded["a"]) == strip(recorded["c"])
        assert [r.prompt for r in recorded["a"]] == ["", "", ""]
        assert [r.prompt for r in recorded["b"]] == ["[Spreker 1] Hoi"] * 3
        assert [r.prompt for r in recorded["c"]] == [TASK, TASK + " [S1] a b", TASK + " [S1] a b [S2] c"]
        assert [r.prompt for r in recorded["c"]] == [r.prompt for r in recorded["d"]]

    def test_mode_b_aliases(self):
        res = run_longform("a1.wav", fixed(20), MockEngine(["[Spreker 2] hoi"]), mode="b",
                           engineered_prompt="x", label_aliases={"[Spreker 2]": "[S2]"})
        assert res.turns == [Turn(S(2), "hoi")]

    def test_prompt_causality(self):
        """Chunk k's prompt depends only on the replies to chunks < k."""
        base = ["[S1] a", "[S2] b", "[S1] c", "[S2] d"]
        e1, e2 = MockEngine(base), MockEngine(base[:2] + ["[S2] other", "[S1] x"])
        run_longform("a", fixed(120), e1)
        run_longform("a", fixed(120), e2)
        assert [r.prompt for r in e1.requests[:3]] == [r.prompt for r in e2.requests[:3]]
        assert e1.requests[3].prompt != e2.requests[3].prompt

    def test_prompts_respect_budget(self):
        config = PromptConfig(prompt_budget=20)
        long_reply = "[S1] " + "woord " * 15 + "[S2] " + "ja " * 10
        engine = MockEngine(lambda r: long_reply)
        run_longform("a", fixed(300), engine, config)
        assert all(count_tokens(r.prompt) <= 20 for r in engine.requests)

    def test_abort_on_engine_error(self):
        with pytest.raises(EngineError):
            run_longform("a", fixed(60), MockEngine(["[S1] a", {"error": "boom"}]))

    def test_skip_on_engine_error(self):
        res = run_longform("a", fixed(90), MockEngine(["[S1] a", {"error": "boom"}, "[S2] c"]), on_error="skip")
        assert [t.text for t in res.turns] == ["a", "c"]
        assert res.chunks[1].error is not None

    def test_label_stats_total(self):
        replies = ["[S1] a [S2] b", "[S1] [Judith] c", "geen label"]
        res = run_longform("a", fixed(90), MockEngine(replies))
        assert res.stats.total_labels == sum(len(parse_labeled_text(r)) for r in replies[:2])

    def test_bad_mode(self):
        with pytest.raises(ValidationError):
            run_longform("a", fixed(10), MockEngine([]), mode="e")

    def test_empty_plan(self):
        with pytest.raises(ValidationError):
            run_longform("a", ChunkPlan("a", []), MockEngine([]))


def test_assign_word_labels_proportional():
    turns = [Turn(S(1), "a b"), Turn(S(2), "c d")]
    words = [TimedWord(w, i, i + 1) for i, w in enumerate("abcdefgh")]
    labels = [w.label for w in assign_word_labels(turns, words)]
    assert labels[:2] == [S(1), S(1)] and labels[-2:] == [S(2), S(2)]


def test_label_stats_counts():
    stats = label_stats(["[S1] a [S2] b [S1]", "[Judith] x"])
    assert stats.per_label == {"S1": 2, "S2": 1, "Judith": 1}
    assert stats.oov_fraction == 0.25


class TestDegenerate:
    def words(self, starts, dur=0.1):
        return [TimedWord(f"w{i}", s, s + dur) for i, s in enumerate(starts)]

    def test_shared_start_run(self):
        spans = detect_degenerate_timestamps(self.words([12.0] * 5))
        assert [(s.kind, s.length) for s in spans] == [("shared_start", 5)]

    def test_increasing(self):
        assert detect_degenerate_timestamps(self.words([1, 2, 3, 4])) == []

    def test_below_threshold(self):
        assert detect_degenerate_timestamps(self.words([1, 1, 2])) == []

    def test_zero_duration(self):
        spans = detect_degenerate_timestamps(self.words([1, 2], dur=0.0))
        assert [s.kind for s in spans] == ["zero_duration", "zero_duration"]
