"""Scripted engine process: ``python -m talkturn.workers.mock_engine --script replies.jsonl``.

Each script line is a reply (a JSON string or response object) used in turn;
when the script runs out the last reply repeats. Fault-injection flags make
it possible to exercise the harness error paths.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..engine import EngineRequest, EngineResponse, _reply_line, serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="talkturn.workers.mock_engine")
    parser.add_argument("--script", help="JSON lines of replies")
    parser.add_argument("--exit-after", type=int, help="die without replying after N requests")
    parser.add_argument("--wrong-id", action="store_true", help="answer with a mismatched id")
    parser.add_argument("--hang", action="store_true", help="never answer")
    parser.add_argument("--record", help="append every request line to this file")
    args = parser.parse_args(argv)

    replies = []
    if args.script:
        with open(args.script, encoding="utf-8") as f:
            replies = [json.loads(line) for line in f if line.strip()]
    seen = 0

    def handle(request: EngineRequest) -> EngineResponse:
        nonlocal seen
        if args.record:
            with open(args.record, "a", encoding="utf-8") as f:
                f.write(request.to_json() + "\n")
        if args.exit_after is not None and seen >= args.exit_after:
            sys.stdout.flush()
            raise SystemExit(3)
        if args.hang:
            sys.stdin.read()
        reply = replies[min(seen, len(replies) - 1)] if replies else ""
        seen += 1
        response = EngineResponse.from_json(_reply_line(reply, request))
        if args.wrong_id:
            response.id = request.id + 1000
        return response

    serve(handle, name="mock-engine")
    return 0


if __name__ == "__main__":
    sys.exit(main())
