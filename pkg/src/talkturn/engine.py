"""Wire contract between the inference harness and a pluggable ASR engine.

An engine is a process that prints ``{"ready": true}`` on startup and then
answers one JSON request line on stdin with one JSON response line on
stdout, strictly one request in flight::

    -> {"id": 3, "audio_path": "a1.wav", "offset_s": 90.0, "duration_s": 30.0,
        "prompt": "[S1] [S2] [S3] [S4] [S5] [S2] ja", "options": {}}
    <- {"id": 3, "text": "[S2] ja hoor [S1] goed", "error": null,
        "words": [{"word": "ja", "start_s": 0.1, "end_s": 0.3}, ...]}

Word times in a response are relative to the request offset.
:class:`MockEngine` runs the same contract in-process.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import shlex
import subprocess
import sys
import threading
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence, TextIO, Union

from .errors import EngineProtocolError, EngineTimeout, EngineTransportError, ValidationError
from .transcript import label_from_token

log = logging.getLogger(__name__)

ENGINE_CMD_ENV = "TALKTURN_ENGINE_CMD"
WORD_TIME_TOLERANCE_S = 0.5


@dataclass
class EngineRequest:
    id: int
    audio_path: str
    offset_s: float
    duration_s: float
    prompt: str = ""
    options: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValidationError(f"request duration must be positive, got {self.duration_s}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "EngineRequest":
        rec = json.loads(line)
        return cls(
            id=int(rec["id"]),
            audio_path=str(rec["audio_path"]),
            offset_s=float(rec["offset_s"]),
            duration_s=float(rec["duration_s"]),
            prompt=str(rec.get("prompt", "")),
            options={str(k): str(v) for k, v in rec.get("options", {}).items()},
        )


@dataclass
class EngineWord:
    word: str
    start_s: float
    end_s: float


@dataclass
class EngineResponse:
    id: int
    text: str = ""
    words: list[EngineWord] = field(default_factory=list)
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "EngineResponse":
        try:
            rec = json.loads(line)
            words = [
                EngineWord(str(w["word"]), float(w["start_s"]), float(w["end_s"]))
                for w in rec.get("words") or []
            ]
            error = rec.get("error")
            return cls(
                id=int(rec["id"]),
                text=str(rec.get("text") or ""),
                words=words,
                error=None if error is None else str(error),
            )
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise EngineProtocolError(f"malformed engine response {line.strip()[:200]!r}: {exc}") from exc


class Engine:
    """Base class; subclasses implement :meth:`transcribe`."""

    identity = "engine"

    def start(self) -> None:
        pass

    def transcribe(self, request: EngineRequest) -> EngineResponse:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.close()


def spread_words(text: str, duration_s: float) -> list[EngineWord]:
    """Evenly spaced word timings for the non-label tokens of ``text``."""
    tokens = [t for t in text.split() if label_from_token(t) is None]
    if not tokens:
        return []
    step = duration_s / len(tokens)
    return [EngineWord(t, i * step, (i + 1) * step) for i, t in enumerate(tokens)]


Reply = Union[str, dict, EngineResponse]


class MockEngine(Engine):
    """In-process engine with scripted replies.

    ``replies`` is either a sequence consumed in order or a callable taking
    the request. A reply may be a string (words get evenly spread timings),
    a response dict or an :class:`EngineResponse`; a missing id is filled in.
    Requests and replies pass through the JSON wire format so the contract
    is the same as for a subprocess engine. Every request is recorded.
    """

    identity = "mock"

    def __init__(self, replies: Sequence[Reply] | Callable[[EngineRequest], Reply]):
        self._replies = replies if callable(replies) else list(replies)
        self._next = 0
        self.requests: list[EngineRequest] = []

    def transcribe(self, request: EngineRequest) -> EngineResponse:
        request = EngineRequest.from_json(request.to_json())
        self.requests.append(request)
        if callable(self._replies):
            reply = self._replies(request)
        else:
            if self._next >= len(self._replies):
                raise EngineTransportError("mock engine script exhausted")
            reply = self._replies[self._next]
            self._next += 1
        return EngineResponse.from_json(_reply_line(reply, request))


def _reply_line(reply: Reply, request: EngineRequest) -> str:
    if isinstance(reply, EngineResponse):
        return reply.to_json()
    if isinstance(reply, str):
        return EngineResponse(request.id, reply, spread_words(reply, request.duration_s)).to_json()
    rec = dict(reply)
    rec.setdefault("id", request.id)
    if "words" not in rec:
        rec["words"] = [asdict(w) for w in spread_words(rec.get("text", ""), request.duration_s)]
    return json.dumps(rec, ensure_ascii=False)


class SubprocessEngine(Engine):
    """Engine running as a child process speaking line-delimited JSON."""

    def __init__(
        self,
        cmd: str | Sequence[str],
        timeout_s: float = 120.0,
        startup_timeout_s: float | None = None,
        env: dict[str, str] | None = None,
    ):
        self.argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        if not self.argv:
            raise ValidationError("empty engine command")
        self.timeout_s = timeout_s
        self.startup_timeout_s = startup_timeout_s if startup_timeout_s is not None else timeout_s
        self.env = env
        self.identity = " ".join(self.argv)
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue[str | None] = queue.Queue()

    def start(self) -> None:
        try:
            self._proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
                env=self.env,
            )
        except OSError as exc:
            raise EngineTransportError(f"cannot start engine {self.identity!r}: {exc}") from exc
        threading.Thread(target=self._pump, daemon=True).start()
        line = self._read_line(self.startup_timeout_s, "startup")
        try:
            ready = json.loads(line)
        except ValueError:
            ready = None
        if not isinstance(ready, dict) or ready.get("ready") is not True:
            self.close()
            raise EngineProtocolError(f"expected a ready line from the engine, got {line.strip()[:200]!r}")
        if ready.get("engine"):
            self.identity = str(ready["engine"])

    def _pump(self) -> None:
        assert self._proc is not None and self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _read_line(self, timeout: float, what: str) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise EngineTimeout(f"engine gave no {what} reply within {timeout}s") from None
        if line is None:
            code = self._proc.wait() if self._proc else None
            raise EngineTransportError(f"engine exited (code {code}) during {what}")
        return line

    def transcribe(self, request: EngineRequest) -> EngineResponse:
        if self._proc is None:
            raise EngineTransportError("engine not started")
        try:
            assert self._proc.stdin is not None
            self._proc.stdin.write(request.to_json() + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise EngineTransportError(f"engine pipe closed: {exc}") from exc
        return EngineResponse.from_json(self._read_line(self.timeout_s, f"request {request.id}"))

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
            proc.wait(timeout=5)
        except (subprocess.TimeoutExpired, OSError):
            proc.kill()
            proc.wait()


def engine_from_command(cmd: str | None, timeout_s: float = 120.0) -> SubprocessEngine:
    """Engine from an explicit command or the ``TALKTURN_ENGINE_CMD`` variable."""
    cmd = cmd or os.environ.get(ENGINE_CMD_ENV)
    if not cmd:
        raise ValidationError(f"no engine command: pass --engine-cmd or set {ENGINE_CMD_ENV}")
    return SubprocessEngine(cmd, timeout_s=timeout_s)


def transcribe_chunk(engine: Engine, request: EngineRequest) -> EngineResponse:
    """Send one request and check the reply against the contract.

    Engine-reported failures come back in ``response.error``; timeouts,
    dead processes and contract violations raise.
    """
    response = engine.transcribe(request)
    if response.id != request.id:
        raise EngineProtocolError(f"response id {response.id} does not match request id {request.id}")
    if response.error is None:
        lo, hi = -WORD_TIME_TOLERANCE_S, request.duration_s + WORD_TIME_TOLERANCE_S
        for w in response.words:
            if not (lo <= w.start_s <= w.end_s <= hi):
                raise EngineProtocolError(
                    f"word {w.word!r} [{w.start_s}, {w.end_s}] outside chunk of {request.duration_s}s"
                )
    return response


def serve(
    handler: Callable[[EngineRequest], EngineResponse],
    name: str = "engine",
    stdin: TextIO | None = None,
    stdout: TextIO | None = None,
    requests: Iterable[str] | None = None,
) -> None:
    """Engine-side loop: announce readiness, then answer requests until EOF."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stdout.write(json.dumps({"ready": True, "engine": name}) + "\n")
    stdout.flush()
    for line in requests if requests is not None else stdin:
        if not line.strip():
            continue
        try:
            request = EngineRequest.from_json(line)
        except (ValueError, KeyError, TypeError) as exc:
            stdout.write(json.dumps({"id": -1, "error": f"bad request: {exc}"}) + "\n")
        else:
            try:
                response = handler(request)
            except Exception as exc:  # reported to the harness, not fatal
                response = EngineResponse(request.id, error=f"{type(exc).__name__}: {exc}")
            stdout.write(response.to_json() + "\n")
        stdout.flush()
