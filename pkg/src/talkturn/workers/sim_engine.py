"""Error-model engine process replaying reference utterances.

``python -m talkturn.workers.sim_engine --reference utts.jsonl [--p-label-flip 0.1]``
"""

from __future__ import annotations

import argparse
import sys

from ..simulation import ErrorModel, SimulatedEngine
from ..transcript import group_by_audio, read_utterances
from ..engine import serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="talkturn.workers.sim_engine")
    parser.add_argument("--reference", required=True, help="utterance JSON lines")
    parser.add_argument("--seed", type=int, default=0)
    for name in ("p_sub", "p_del", "p_ins", "p_label_flip", "p_label_omit"):
        parser.add_argument("--" + name.replace("_", "-"), dest=name, type=float, default=0.0)
    parser.add_argument("--no-propagation", action="store_true")
    args = parser.parse_args(argv)

    model = ErrorModel(args.p_sub, args.p_del, args.p_ins, args.p_label_flip, args.p_label_omit, args.seed)
    engine = SimulatedEngine(
        group_by_audio(read_utterances(args.reference)), model, propagation=not args.no_propagation
    )
    serve(engine.transcribe, name="sim-engine")
    return 0


if __name__ == "__main__":
    sys.exit(main())
