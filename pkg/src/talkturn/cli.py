"""Command line: ``talkturn {prep,infer,score,simulate,report}``.

Exit codes: 0 success, 1 validation, 2 engine/transport, 3 scoring.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .config import config_hash, experiment_spec, file_digest, load_config, prompt_config
from .corpus import prepare_corpus, write_training_samples
from .engine import ENGINE_CMD_ENV, Engine, engine_from_command
from .errors import ScoringError, TalkturnError, ValidationError
from .harness import MODES, detect_degenerate_timestamps, label_stats, plan_chunks, run_longform
from .metrics import (
    compute_cpwer,
    compute_der,
    compute_wer,
    pearson_r,
    summarize_quartiles,
)
from .prompting import tokenizer_for
from .simulation import run_experiment
from .transcript import (
    group_by_audio,
    parse_labeled_text,
    read_rttm,
    read_utterances,
    render_labeled_text,
    strip_annotations,
    utterances_to_segments,
    utterances_to_turns,
    words_to_segments,
    write_rttm,
    Turn,
    Utterance,
)

log = logging.getLogger("talkturn")


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, ensure_ascii=False, sort_keys=False)
        f.write("\n")


def _manifest(command: str, config: dict, inputs: dict[str, str | None], **extra) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config_hash": config_hash(config),
        "seed": config["seed"],
        "inputs": {name: {"path": str(p), "sha256": file_digest(p)} for name, p in inputs.items() if p},
        **extra,
        "config": config,
    }


def _out_dir(path: str | Path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_file(path: str | Path | None, what: str) -> Path:
    if path is None:
        raise ValidationError(f"missing {what}")
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{what} not found: {p}")
    return p


# -- prep -------------------------------------------------------------------


def cmd_prep(config: dict, utterances: str | Path, out_dir: str | Path) -> dict:
    """Build the training-sample file and prep report from an utterance file."""
    src = _require_file(utterances, "utterance file")
    out = _out_dir(out_dir)
    samples, report = prepare_corpus(
        read_utterances(src),
        chunk_limit_s=float(config["chunk_limit_s"]),
        label_budget=int(config["label_budget"]),
        dropout_rate=float(config["dropout_rate"]),
        seed=int(config["seed"]),
        config=prompt_config(config),
        collapse=bool(config["collapse_labels"]),
    )
    write_training_samples(samples, out / "samples.jsonl")
    report_dict = asdict(report)
    _write_json(out / "prep_report.json", report_dict)
    _write_json(out / "manifest.json", _manifest("prep", config, {"utterances": src}))
    return report_dict


# -- infer ------------------------------------------------------------------


def read_audio_list(path: str | Path) -> list[dict]:
    """JSON lines with ``audio_id``, ``audio_path`` and ``duration_s``."""
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                entries.append(
                    {
                        "audio_id": str(rec["audio_id"]),
                        "audio_path": str(rec.get("audio_path", rec["audio_id"])),
                        "duration_s": float(rec["duration_s"]),
                    }
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    return entries


def _infer_one(entry: dict, engine: Engine, config: dict, vad: dict, out: Path) -> dict:
    pconf = prompt_config(config)
    vad_segments = vad.get(entry["audio_id"]) if vad else None
    plan = plan_chunks(
        entry["duration_s"], vad_segments, float(config["chunk_limit_s"]), entry["audio_id"]
    )
    result = run_longform(
        entry["audio_path"],
        plan,
        engine,
        pconf,
        mode=config["mode"],
        engineered_prompt=config.get("engineered_prompt"),
        tokenizer=tokenizer_for(pconf),
        on_error=config["on_error"],
        unlabeled=config["unlabeled"],
        label_aliases=config.get("label_aliases") if config["mode"] == "b" else None,
    )
    audio_id = entry["audio_id"]
    with open(out / f"{audio_id}.txt", "w", encoding="utf-8") as f:
        f.write(result.transcript() + "\n")
    words = sorted(result.words, key=lambda w: (w.start_s, w.end_s))
    write_rttm(words_to_segments(words, float(config["word_gap_s"]), audio_id), out / f"{audio_id}.rttm")
    with open(out / f"{audio_id}.words.jsonl", "w", encoding="utf-8") as f:
        for w in result.words:
            rec = {"word": w.word, "start_s": w.start_s, "end_s": w.end_s, "label": str(w.label)}
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    with open(out / f"{audio_id}.chunks.jsonl", "w", encoding="utf-8") as f:
        for c in result.chunks:
            f.write(json.dumps(asdict(c), ensure_ascii=False) + "\n")
    degenerate = detect_degenerate_timestamps(words)
    return {
        "label_stats": result.stats.as_dict(),
        "chunks": len(result.chunks),
        "failed_chunks": sum(c.error is not None for c in result.chunks),
        "degenerate_spans": sum(s.kind == "shared_start" for s in degenerate),
        "zero_duration_words": sum(s.kind == "zero_duration" for s in degenerate),
    }


def cmd_infer(
    config: dict,
    audio_list: str | Path,
    out_dir: str | Path,
    vad_path: str | Path | None = None,
    engine_factory: Callable[[], Engine] | None = None,
) -> dict:
    """Run long-form inference for every audio in the list.

    ``engine_factory`` replaces the subprocess engine (one engine per worker).
    """
    src = _require_file(audio_list, "audio list")
    entries = read_audio_list(src)
    vad: dict[str, list[tuple[float, float]]] = {}
    if vad_path is not None:
        for seg in read_rttm(_require_file(vad_path, "VAD file")):
            vad.setdefault(seg.audio_id, []).append((seg.start_s, seg.end_s))
    if engine_factory is None:
        cmd, timeout = config.get("engine_cmd"), float(config["engine_timeout_s"])
        engine_from_command(cmd, timeout)  # fail fast on a missing command
        engine_factory = lambda: engine_from_command(cmd, timeout)  # noqa: E731
    out = _out_dir(out_dir)

    jobs = max(1, int(config.get("jobs", 1)))
    groups = [entries[i::jobs] for i in range(jobs)]
    identities: list[str] = []

    def work(group: list[dict]) -> dict[str, dict]:
        results = {}
        if not group:
            return results
        with engine_factory() as engine:
            identities.append(engine.identity)
            for entry in group:
                results[entry["audio_id"]] = _infer_one(entry, engine, config, vad, out)
        return results

    per_audio: dict[str, dict] = {}
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        for res in pool.map(work, groups):
            per_audio.update(res)
    per_audio = {e["audio_id"]: per_audio[e["audio_id"]] for e in entries}

    total_labels = sum(r["label_stats"]["total_labels"] for r in per_audio.values())
    oov = sum(c for r in per_audio.values() for _, c in r["label_stats"]["oov_labels"])
    totals = {
        "total_labels": total_labels,
        "oov_labels": oov,
        "oov_fraction": oov / total_labels if total_labels else 0.0,
    }
    stats = {"per_audio": per_audio, "total": totals}
    _write_json(out / "label_stats.json", stats)
    _write_json(
        out / "manifest.json",
        _manifest(
            "infer", config, {"audio_list": src, "vad": vad_path},
            mode=config["mode"], engine=sorted(set(identities))[0] if identities else None,
        ),
    )
    return stats


# -- score ------------------------------------------------------------------


def _hyp_turns(text: str) -> list[Turn]:
    # labels first, so OOV labels such as [Judith] are not mistaken for annotations
    return [Turn(t.label, strip_annotations(t.text)) for t in parse_labeled_text(text) if not t.label.is_unlabeled]


def score_audio(
    utts: Sequence[Utterance],
    hyp_text: str,
    hyp_segments,
    config: dict,
    ref_segments=None,
) -> dict:
    """WER, cpWER, DER and label statistics for one audio file."""
    lang = config.get("lang", "nl")
    ref_turns = [Turn(t.label, strip_annotations(t.text)) for t in utterances_to_turns(utts)]
    hyp_turns = _hyp_turns(hyp_text)
    ref_plain = " ".join(t.text for t in ref_turns)
    hyp_plain = " ".join(t.text for t in hyp_turns)
    wer = compute_wer(ref_plain, hyp_plain, lang)
    cp, pairs = compute_cpwer(ref_turns, hyp_turns, lang=lang)
    der = compute_der(
        ref_segments if ref_segments is not None else utterances_to_segments(utts),
        hyp_segments,
        float(config["collar_s"]),
        config["collar_mode"],
    )
    return {
        "n_speakers": len({u.speaker_id for u in utts}),
        "wer": wer.wer,
        "cpwer": cp.wer,
        "der": der.der,
        "wer_counts": wer.as_dict(),
        "cpwer_counts": cp.as_dict(),
        "cpwer_mapping": [[_name(r), _name(h)] for r, h in pairs],
        "der_breakdown": der.as_dict(),
        "label_stats": label_stats([hyp_text]).as_dict(),
    }


def _name(label) -> str | None:
    return None if label is None else str(label)


def _summaries(rows: list[dict]) -> dict:
    out = {}
    for metric in ("wer", "cpwer", "der"):
        values = [r[metric] for r in rows if not math.isnan(r[metric])]
        if values:
            out[metric] = summarize_quartiles(values).as_dict()
    return out


def cmd_score(
    config: dict,
    ref: str | Path,
    hyp_dir: str | Path,
    out_dir: str | Path,
    ref_rttm: str | Path | None = None,
) -> dict:
    """Score a directory of ``<audio_id>.txt`` / ``<audio_id>.rttm`` hypotheses."""
    ref_path = _require_file(ref, "reference utterance file")
    hyp_dir = Path(hyp_dir)
    if not hyp_dir.is_dir():
        raise ValidationError(f"hypothesis directory not found: {hyp_dir}")
    refs = group_by_audio(read_utterances(ref_path))
    ref_segs: dict[str, list] = {}
    if ref_rttm is not None:
        for seg in read_rttm(_require_file(ref_rttm, "reference RTTM")):
            ref_segs.setdefault(seg.audio_id, []).append(seg)

    hyp_ids = {p.stem for p in hyp_dir.glob("*.txt")}
    missing = sorted(set(refs) - hyp_ids)
    extra = sorted(hyp_ids - set(refs))
    if missing or extra:
        raise ValidationError(
            "audio id mismatch between reference and hypotheses; "
            f"missing hypotheses: {missing or '-'}; unknown hypotheses: {extra or '-'}"
        )

    rows = []
    per_audio = {}
    for audio_id in sorted(refs):
        text = (hyp_dir / f"{audio_id}.txt").read_text(encoding="utf-8")
        rttm = hyp_dir / f"{audio_id}.rttm"
        hyp_segments = read_rttm(rttm) if rttm.is_file() else []
        try:
            scores = score_audio(refs[audio_id], text, hyp_segments, config, ref_segs.get(audio_id))
        except ScoringError as exc:
            raise ScoringError(f"{audio_id}: {exc}") from exc
        per_audio[audio_id] = scores
        rows.append({"audio_id": audio_id, **{k: scores[k] for k in ("n_speakers", "wer", "cpwer", "der")}})

    correlations = {}
    for x in ("wer", "cpwer"):
        try:
            res = pearson_r([r[x] for r in rows], [r["der"] for r in rows])
            correlations[f"{x}_der"] = {"r": res.r, "n": res.n}
        except ScoringError as exc:
            correlations[f"{x}_der"] = {"r": None, "note": f"omitted: {exc}"}

    by_count = {}
    for n in sorted({r["n_speakers"] for r in rows}):
        group = [r for r in rows if r["n_speakers"] == n]
        by_count[str(n)] = {
            "n_audios": len(group),
            "mean": {m: sum(r[m] for r in group) / len(group) for m in ("wer", "cpwer", "der")},
            "summary": _summaries(group),
        }

    report = {
        "per_audio": per_audio,
        "summary": _summaries(rows),
        "correlations": correlations,
        "by_speaker_count": by_count,
    }
    out = _out_dir(out_dir)
    _write_json(out / "score_report.json", report)
    with open(out / "scores.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["audio_id", "n_speakers", "wer", "cpwer", "der"])
        writer.writeheader()
        writer.writerows(rows)
    _write_json(out / "manifest.json", _manifest("score", config, {"ref": ref_path, "ref_rttm": ref_rttm}))
    return report


def write_reference_hypotheses(utts: Sequence[Utterance], out_dir: str | Path) -> None:
    """Write reference utterances in the hypothesis layout (for self-scoring checks)."""
    out = _out_dir(out_dir)
    for audio_id, group in group_by_audio(utts).items():
        text = render_labeled_text(utterances_to_turns(group))
        (out / f"{audio_id}.txt").write_text(text + "\n", encoding="utf-8")
        write_rttm(utterances_to_segments(group), out / f"{audio_id}.rttm")


# -- simulate / report ------------------------------------------------------


def cmd_simulate(config: dict, out_dir: str | Path) -> dict:
    report = run_experiment(experiment_spec(config))
    out = _out_dir(out_dir)
    _write_json(out / "simulation_report.json", report)
    rows = report["per_audio"]
    if rows:
        with open(out / "simulation.csv", "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    _write_json(out / "manifest.json", _manifest("simulate", config, {}))
    return report


def _fmt(x) -> str:
    return "-" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.3f}"


def render_report(report: dict) -> str:
    """Plain-text tables for a score or simulation report."""
    lines = []
    if "correlations" in report:
        lines.append(f"{'metric':<8}{'min':>8}{'q2':>8}{'q3':>8}")
        for metric, s in report["summary"].items():
            lines.append(f"{metric:<8}{_fmt(s['min']):>8}{_fmt(s['q2_median']):>8}{_fmt(s['q3']):>8}")
        for name, c in report["correlations"].items():
            lines.append(f"pearson {name}: {_fmt(c.get('r'))}" + (f" ({c['note']})" if c.get("note") else ""))
        for n, g in report["by_speaker_count"].items():
            means = ", ".join(f"{m} {_fmt(v)}" for m, v in g["mean"].items())
            lines.append(f"{n} speakers ({g['n_audios']} audios): mean {means}")
    elif "summary" in report:
        for cond, s in report["summary"].items():
            if "median_der" in s:
                meds = "  ".join(f"{h}: {_fmt(v)}" for h, v in s["median_der"].items())
                lines.append(f"propagation {cond}: median DER  {meds}")
            for key, test in s.items():
                if key.startswith("wilcoxon"):
                    lines.append(f"  {key}: p = {test['p_two_sided']:.4g} ({test['method']}, n={test['n']})")
    else:
        raise ValidationError("not a score or simulation report")
    return "\n".join(lines) + "\n"


# -- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="talkturn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"talkturn {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="YAML or JSON run configuration")
        p.add_argument("--out-dir", required=out_required)
        p.add_argument("--engine-cmd", help=f"engine command line (default ${ENGINE_CMD_ENV})")
        p.add_argument("--mode", choices=list(MODES))
        p.add_argument("--collar", type=float, help="DER collar in seconds")
        p.add_argument("--chunk-limit", type=float, help="chunk length limit in seconds")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, help="files processed in parallel")
        p.add_argument("--vad", help="RTTM-style speech segments")

    p = sub.add_parser("prep", help="build (prompt, target) training samples")
    common(p)
    p.add_argument("--utterances", required=True)
    p.add_argument("--dropout-rate", type=float)

    p = sub.add_parser("infer", help="chunked long-form inference over an engine")
    common(p)
    p.add_argument("--audio-list", required=True, help="JSON lines: audio_id, audio_path, duration_s")

    p = sub.add_parser("score", help="WER, cpWER and DER against reference utterances")
    common(p)
    p.add_argument("--ref", required=True, help="reference utterance file")
    p.add_argument("--hyp-dir", required=True)
    p.add_argument("--ref-rttm")

    p = sub.add_parser("simulate", help="error-propagation experiment on synthetic audio")
    common(p)
    p.add_argument("--n-audios", type=int)
    p.add_argument("--p-label-flip", type=float)
    p.add_argument("--propagation", choices=["on", "off", "both"])

    p = sub.add_parser("report", help="print a score or simulation report as text")
    common(p, out_required=False)
    p.add_argument("input", help="score_report.json or simulation_report.json")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    return {
        "seed": get("seed"),
        "jobs": get("jobs"),
        "chunk_limit_s": get("chunk_limit"),
        "dropout_rate": get("dropout_rate"),
        "engine_cmd": get("engine_cmd"),
        "mode": get("mode"),
        "collar_s": get("collar"),
        "simulate.n_synthetic_audios": get("n_audios"),
        "simulate.error_model.p_label_flip": get("p_label_flip"),
        "simulate.propagation": get("propagation"),
    }


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config, _overrides(args))
        if args.command == "prep":
            cmd_prep(config, args.utterances, args.out_dir)
        elif args.command == "infer":
            cmd_infer(config, args.audio_list, args.out_dir, args.vad)
        elif args.command == "score":
            cmd_score(config, args.ref, args.hyp_dir, args.out_dir, args.ref_rttm)
        elif args.command == "simulate":
            cmd_simulate(config, args.out_dir)
        elif args.command == "report":
            with open(_require_file(args.input, "report"), encoding="utf-8") as f:
                text = render_report(json.load(f))
            sys.stdout.write(text)
            if args.out_dir:
                (_out_dir(args.out_dir) / "report.txt").write_text(text, encoding="utf-8")
    except TalkturnError as exc:
        print(f"talkturn {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
