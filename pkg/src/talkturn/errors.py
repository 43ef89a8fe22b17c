"""Exception hierarchy shared by the library and the command line."""


class TalkturnError(Exception):
    """Base class for all errors raised by talkturn."""

    exit_code = 1


class ValidationError(TalkturnError, ValueError):
    """Malformed input: bad records, invariant violations, bad configuration."""

    exit_code = 1


class EngineError(TalkturnError):
    """The ASR engine failed or could not be reached."""

    exit_code = 2


class EngineTimeout(EngineError):
    pass


class EngineTransportError(EngineError):
    """The engine process died or its pipes closed."""


class EngineProtocolError(EngineError):
    """The engine replied with something that violates the wire contract."""


class ScoringError(TalkturnError, ValueError):
    """A metric is undefined for the given input."""

    exit_code = 3
