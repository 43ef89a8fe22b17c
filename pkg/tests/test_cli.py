import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from talkturn.cli import cmd_infer, cmd_prep, cmd_score, main, write_reference_hypotheses
from talkturn.config import load_config
from talkturn.engine import MockEngine
from talkturn.errors import ValidationError
from talkturn.metrics import summarize_quartiles
from talkturn.simulation import ConversationSpec, synthesize_conversation
from talkturn.transcript import Utterance, read_utterances, write_utterances

GOLDEN = Path(__file__).parent / "data" / "golden"
SIM = f"{sys.executable} -m talkturn.workers.sim_engine"


def golden_replies():
    return [json.loads(line) for line in (GOLDEN / "script.jsonl").read_text().splitlines()]


@pytest.fixture
def corpus(tmp_path):
    utts = []
    for i, n in enumerate([2, 3, 2]):
        utts += synthesize_conversation(f"a{i}", ConversationSpec(n_speakers=n, length_s=90), i)
    path = tmp_path / "utts.jsonl"
    write_utterances(utts, path)
    audio = tmp_path / "audio.jsonl"
    audio.write_text("".join(json.dumps({"audio_id": f"a{i}", "audio_path": f"a{i}.wav", "duration_s": 90})
                             + "\n" for i in range(3)))
    return path, audio


class TestConfig:
    def test_defaults(self):
        config = load_config()
        assert config["mode"] == "d" and config["collar_s"] == 0.25
        assert config["label_aliases"]["[Spreker 1]"] == "[S1]"

    def test_file_and_flags(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("mode: a\ncollar_s: 0.5\nprompt:\n  prompt_budget: 100\n")
        config = load_config(p, {"collar_s": 0.0, "seed": None})
        assert (config["mode"], config["collar_s"], config["seed"]) == ("a", 0.0, 0)
        assert config["prompt"]["prompt_budget"] == 100 and config["prompt"]["max_speakers"] == 5

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("colar_s: 0.5\n")
        with pytest.raises(ValidationError, match="colar_s"):
            load_config(p)


class TestPrep:
    def test_tiny_corpus(self, tmp_path):
        utts = tmp_path / "u.jsonl"
        write_utterances([Utterance("a1", "x", 0, 1, "hallo."), Utterance("a1", "y", 1, 2, "ja."),
                          Utterance("a1", "x", 2, 3, "goed.")], utts)
        report = cmd_prep(load_config(), utts, tmp_path / "out")
        first = json.loads((tmp_path / "out" / "samples.jsonl").read_text().splitlines()[0])
        assert first["prompt"] == "[S1] [S2] [S3] [S4] [S5]" and report["n_samples"] >= 1
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["seed"] == 0 and manifest["inputs"]["utterances"]["sha256"]

    def test_six_speakers_exit_code(self, tmp_path):
        utts = tmp_path / "u.jsonl"
        write_utterances([Utterance("big", f"s{i}", i, i + 1, "w") for i in range(6)], utts)
        assert main(["prep", "--utterances", str(utts), "--out-dir", str(tmp_path / "o")]) == 1

    def test_missing_input(self, tmp_path, capsys):
        assert main(["prep", "--utterances", str(tmp_path / "nope.jsonl"), "--out-dir", str(tmp_path)]) == 1
        assert "not found" in capsys.readouterr().err


class TestInfer:
    def test_golden_replay(self, tmp_path):
        cmd_infer(load_config(), GOLDEN / "audio.jsonl", tmp_path, engine_factory=lambda: MockEngine(golden_replies()))
        assert (tmp_path / "g1.txt").read_bytes() == (GOLDEN / "expected_g1.txt").read_bytes()
        assert (tmp_path / "g1.rttm").read_bytes() == (GOLDEN / "expected_g1.rttm").read_bytes()
        stats = json.loads((tmp_path / "label_stats.json").read_text())
        assert stats["total"]["oov_fraction"] == 0.25
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["engine"] == "mock" and manifest["mode"] == "d" and len(manifest["config_hash"]) == 64

    def test_golden_replay_subprocess(self, tmp_path):
        out = tmp_path / "out"
        cmd = f"{sys.executable} -m talkturn.workers.mock_engine --script {GOLDEN / 'script.jsonl'}"
        rc = main(["infer", "--audio-list", str(GOLDEN / "audio.jsonl"), "--out-dir", str(out), "--engine-cmd", cmd])
        assert rc == 0
        assert (out / "g1.txt").read_bytes() == (GOLDEN / "expected_g1.txt").read_bytes()
        assert json.loads((out / "manifest.json").read_text())["engine"] == "mock-engine"

    def test_missing_engine_command(self, tmp_path, monkeypatch):
        monkeypatch.delenv("TALKTURN_ENGINE_CMD", raising=False)
        assert main(["infer", "--audio-list", str(GOLDEN / "audio.jsonl"), "--out-dir", str(tmp_path)]) == 1

    def test_engine_failure_exit_code(self, tmp_path):
        cmd = f"{sys.executable} -m talkturn.workers.mock_engine --exit-after 0"
        rc = main(["infer", "--audio-list", str(GOLDEN / "audio.jsonl"), "--out-dir", str(tmp_path), "--engine-cmd", cmd])
        assert rc == 2

    def test_vad_file(self, tmp_path):
        vad = tmp_path / "vad.rttm"
        vad.write_text("SPEAKER g1 1 0.000 26.000 <NA> <NA> speech <NA> <NA>\n"
                       "SPEAKER g1 1 29.000 11.000 <NA> <NA> speech <NA> <NA>\n")
        config = load_config()
        cmd_infer(config, GOLDEN / "audio.jsonl", tmp_path / "o", vad, engine_factory=lambda: MockEngine(golden_replies()))
        chunks = [json.loads(x) for x in (tmp_path / "o" / "g1.chunks.jsonl").read_text().splitlines()]
        assert [(c["offset_s"], c["duration_s"]) for c in chunks] == [(0.0, 26.0), (29.0, 11.0)]

    def test_parallel_jobs_match_serial(self, corpus, tmp_path):
        utts, audio = corpus
        outs = []
        for jobs in ("1", "3"):
            out = tmp_path / f"j{jobs}"
            assert main(["infer", "--audio-list", str(audio), "--out-dir", str(out), "--jobs", jobs,
                         "--engine-cmd", f"{SIM} --reference {utts} --p-label-flip 0.2 --seed 4"]) == 0
            outs.append(out)
        for i in range(3):
            assert (outs[0] / f"a{i}.txt").read_bytes() == (outs[1] / f"a{i}.txt").read_bytes()


class TestScore:
    def test_self_score_zero(self, corpus, tmp_path):
        utts, _ = corpus
        write_reference_hypotheses(read_utterances(utts), tmp_path / "hyp")
        report = cmd_score(load_config(), utts, tmp_path / "hyp", tmp_path / "s")
        assert all(r["wer"] == r["cpwer"] == r["der"] == 0.0 for r in report["per_audio"].values())
        assert report["correlations"]["cpwer_der"]["r"] is None
        assert "omitted" in report["correlations"]["cpwer_der"]["note"]

    def test_csv_and_summaries(self, corpus, tmp_path):
        utts, audio = corpus
        assert main(["infer", "--audio-list", str(audio), "--out-dir", str(tmp_path / "hyp"),
                     "--engine-cmd", f"{SIM} --reference {utts} --p-label-flip 0.3 --p-sub 0.1"]) == 0
        assert main(["score", "--ref", str(utts), "--hyp-dir", str(tmp_path / "hyp"),
                     "--out-dir", str(tmp_path / "s")]) == 0
        with open(tmp_path / "s" / "scores.csv") as f:
            reader = csv.DictReader(f)
            rows = list(reader)
        assert reader.fieldnames == ["audio_id", "n_speakers", "wer", "cpwer", "der"]
        report = json.loads((tmp_path / "s" / "score_report.json").read_text())
        expected = summarize_quartiles([float(r["cpwer"]) for r in rows]).as_dict()
        assert report["summary"]["cpwer"] == pytest.approx(expected)
        assert set(report["by_speaker_count"]) == {"2", "3"}
        assert main(["report", str(tmp_path / "s" / "score_report.json")]) == 0

    def test_id_mismatch(self, corpus, tmp_path, capsys):
        utts, _ = corpus
        write_reference_hypotheses(read_utterances(utts), tmp_path / "hyp")
        (tmp_path / "hyp" / "a1.txt").unlink()
        (tmp_path / "hyp" / "zz.txt").write_text("[S1] x\n")
        assert main(["score", "--ref", str(utts), "--hyp-dir", str(tmp_path / "hyp"), "--out-dir", str(tmp_path)]) == 1
        err = capsys.readouterr().err
        assert "a1" in err and "zz" in err

    def test_unscorable_exit_code(self, tmp_path):
        ref = tmp_path / "r.jsonl"
        write_utterances([Utterance("a", "x", 0, 1, "")], ref)
        (tmp_path / "hyp").mkdir()
        (tmp_path / "hyp" / "a.txt").write_text("[S1] iets\n")
        assert main(["score", "--ref", str(ref), "--hyp-dir", str(tmp_path / "hyp"), "--out-dir", str(tmp_path)]) == 3


class TestSimulate:
    def test_zero_rates(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("simulate:\n  n_synthetic_audios: 3\n  audio_length_s: 100\n  error_model:\n    p_label_flip: 0.0\n")
        assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 0
        report = json.loads((tmp_path / "o" / "simulation_report.json").read_text())
        for cond in ("on", "off"):
            assert set(report["summary"][cond]["median_der"].values()) == {0.0}
        assert main(["report", str(tmp_path / "o" / "simulation_report.json"), "--out-dir", str(tmp_path / "r")]) == 0
        assert "propagation on" in (tmp_path / "r" / "report.txt").read_text()

    def test_console_script(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "talkturn.cli", "simulate", "--out-dir", str(tmp_path), "--n-audios", "2",
             "--propagation", "on"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "simulation.csv").read_text().startswith("audio_id,propagation,der_30s")
