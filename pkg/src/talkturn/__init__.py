"""Speaker-attributed transcription with prompted context, plus multi-talker scoring."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    EngineError,
    EngineProtocolError,
    EngineTimeout,
    EngineTransportError,
    ScoringError,
    TalkturnError,
    ValidationError,
)
from .transcript import (  # noqa: E402
    UNLABELED,
    SpeakerLabel,
    SpeakerSegment,
    TimedWord,
    Turn,
    Utterance,
    canonical_relabel,
    parse_labeled_text,
    read_rttm,
    read_utterances,
    render_labeled_text,
    strip_annotations,
    words_to_segments,
    write_rttm,
    write_utterances,
)
from .prompting import PromptConfig, compose_prompt, make_task_prompt, truncate_context_left  # noqa: E402
from .corpus import TrainingSample, prepare_corpus  # noqa: E402
from .engine import EngineRequest, EngineResponse, MockEngine, SubprocessEngine  # noqa: E402
from .harness import plan_chunks, run_longform  # noqa: E402
from .metrics import (  # noqa: E402
    compute_cpwer,
    compute_der,
    compute_wer,
    pearson_r,
    summarize_quartiles,
    wilcoxon_signed_rank,
)
from .simulation import ErrorModel, ExperimentSpec, SimulatedEngine, run_experiment  # noqa: E402
