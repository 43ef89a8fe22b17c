import numpy as np
import pytest

from talkturn.engine import EngineRequest
from talkturn.errors import ValidationError
from talkturn.harness import plan_chunks, run_longform
from talkturn.metrics import compute_cpwer, compute_der
from talkturn.simulation import (
    ConversationSpec,
    ErrorModel,
    ExperimentSpec,
    SimulatedEngine,
    infer_label_map,
    reference_words,
    run_experiment,
    simulate_engine_response,
    synthesize_conversation,
)
from talkturn.transcript import (
    SpeakerLabel,
    Utterance,
    parse_labeled_text,
    utterances_to_segments,
    utterances_to_turns,
    words_to_segments,
)

S = SpeakerLabel.canonical


def conversation(n=2, length=120.0, seed=0, audio="c1"):
    return synthesize_conversation(audio, ConversationSpec(n_speakers=n, length_s=length), seed)


def request(i=0, offset=0.0, duration=30.0, prompt=""):
    return EngineRequest(i, "c1", offset, duration, prompt)


class TestSynthesis:
    def test_deterministic(self):
        assert conversation(seed=3) == conversation(seed=3) != conversation(seed=4)

    def test_within_length_and_speakers(self):
        utts = conversation(n=3, length=200)
        assert all(0 <= u.start_s < u.end_s <= 200 for u in utts)
        assert {u.speaker_id for u in utts} <= {"spkA", "spkB", "spkC"}

    def test_third_speaker_sporadic(self):
        utts = synthesize_conversation("x", ConversationSpec(n_speakers=3, length_s=3000, minor_speaker_weight=0.1), 0)
        counts = {s: sum(u.speaker_id == s for u in utts) for s in ("spkA", "spkB", "spkC")}
        assert counts["spkC"] < 0.5 * min(counts["spkA"], counts["spkB"])

    def test_bad_spec(self):
        with pytest.raises(ValidationError):
            ConversationSpec(length_s=0)
        with pytest.raises(ValidationError):
            ErrorModel(p_sub=1.5)


class TestResponse:
    utts = [Utterance("c1", "A", 0, 2, "een twee"), Utterance("c1", "B", 2, 4, "drie vier")]

    def respond(self, model, seed=0):
        words = reference_words(self.utts)
        mapping = {"A": S(1), "B": S(2)}
        return simulate_engine_response(words, mapping, model, request(duration=4), np.random.default_rng(seed))

    def test_zero_rates_reproduce(self):
        res, emitted = self.respond(ErrorModel())
        assert res.text == "[S1] een twee [S2] drie vier" and emitted == ["A", "B"]

    def test_delete_all(self):
        assert self.respond(ErrorModel(p_del=1.0))[0].text == "[S1] [S2]"
        assert self.respond(ErrorModel(p_del=1.0, p_label_omit=1.0))[0].text == ""

    def test_seeded_flips(self):
        a = self.respond(ErrorModel(p_label_flip=0.5), seed=9)[0]
        b = self.respond(ErrorModel(p_label_flip=0.5), seed=9)[0]
        assert a == b

    def test_flip_always_changes_label(self):
        for seed in range(20):
            labels = [t.label for t in parse_labeled_text(self.respond(ErrorModel(p_label_flip=1.0), seed)[0].text)]
            assert labels[0] != S(1) and labels[1] != S(2)


class TestLabelMap:
    def test_context_pairs_newest_first(self):
        mapping = infer_label_map([S(1), S(2), S(3)], ["A", "B", "A"], ["A", "B"], {"A": S(1), "B": S(2)})
        assert mapping == {"A": S(3), "B": S(2)}

    def test_uncovered_speaker_keeps_true_label(self):
        assert infer_label_map([], [], ["A", "B"], {"A": S(1), "B": S(2)}) == {"A": S(1), "B": S(2)}

    def test_collision_takes_lowest_free(self):
        mapping = infer_label_map([S(2)], ["A"], ["A", "B"], {"A": S(1), "B": S(2)})
        assert mapping == {"A": S(2), "B": S(1)}


class TestSimulatedEngine:
    def run(self, utts, model, propagation=True, length=120.0):
        engine = SimulatedEngine({"c1": utts}, model, propagation)
        return run_longform("c1", plan_chunks(length, chunk_limit_s=30, audio_id="c1"), engine)

    def test_identity_with_zero_rates(self):
        utts = conversation()
        res = self.run(utts, ErrorModel())
        assert compute_cpwer(utterances_to_turns(utts), res.turns)[0].errors == 0
        hyp = words_to_segments(sorted(res.words, key=lambda w: w.start_s), 0.0, "c1")
        assert compute_der(utterances_to_segments(utts), hyp, collar_s=0).der == 0.0

    def test_deterministic(self):
        utts = conversation()
        a = self.run(utts, ErrorModel(p_sub=0.1, p_label_flip=0.2, seed=5))
        b = self.run(utts, ErrorModel(p_sub=0.1, p_label_flip=0.2, seed=5))
        assert a.transcript() == b.transcript()

    def test_flip_propagates_through_context(self):
        """A mislabelled chunk leaves later chunks mislabelled when context is used."""
        utts = [
            Utterance("c1", "A" if k % 2 == 0 else "B", 5.0 * k, 5.0 * k + 4, f"w{k}")
            for k in range(24)
        ]
        clean = ErrorModel()
        engine = SimulatedEngine({"c1": utts}, clean, propagation=True)
        # context for chunk 1 as if chunk 0 had come back with swapped labels
        prompts = ["", "[S1] [S2] [S3] [S4] [S5] [S2] w0 [S1] w1 [S2] w2 [S1] w3 [S2] w4 [S1] w5"]
        engine.transcribe(EngineRequest(0, "c1", 0, 30, prompts[0]))
        swapped = engine.transcribe(EngineRequest(1, "c1", 30, 30, prompts[1]))
        assert swapped.text.startswith("[S2] w6 [S1] w7")
        off = SimulatedEngine({"c1": utts}, clean, propagation=False)
        off.transcribe(EngineRequest(0, "c1", 0, 30, prompts[0]))
        assert off.transcribe(EngineRequest(1, "c1", 30, 30, prompts[1])).text.startswith("[S1] w6 [S2] w7")

    def test_unknown_audio(self):
        engine = SimulatedEngine({"c1": conversation()})
        with pytest.raises(KeyError):
            engine.transcribe(EngineRequest(0, "zz.wav", 0, 30))

    def test_audio_path_stem_lookup(self):
        engine = SimulatedEngine({"c1": conversation()})
        assert engine.transcribe(EngineRequest(0, "/data/c1.wav", 0, 30)).text.startswith("[S1]")


class TestExperiment:
    def test_zero_rates_zero_der(self):
        report = run_experiment(ExperimentSpec(ErrorModel(), n_synthetic_audios=4, audio_length_s=120))
        for row in report["per_audio"]:
            assert row["der_30s"] == row["der_120s"] == row["der_full"] == 0.0
        assert report["summary"]["on_vs_off"]["wilcoxon_full"]["p_two_sided"] == 1.0

    def test_bad_spec(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(n_synthetic_audios=0)
        with pytest.raises(ValidationError):
            ExperimentSpec(horizons=(120.0, 30.0))
        with pytest.raises(ValidationError):
            ExperimentSpec(audio_length_s=0)

    def test_single_condition(self):
        spec = ExperimentSpec(ErrorModel(p_label_flip=0.1), n_synthetic_audios=3, audio_length_s=90, propagation="on")
        report = run_experiment(spec)
        assert set(report["summary"]) == {"on"}
        assert len(report["per_audio"]) == 3
