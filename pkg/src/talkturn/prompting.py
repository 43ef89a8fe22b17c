"""Token counting, task prompts and budget-constrained context prompts."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .bpe import BPETokenizer
from .errors import ValidationError
from .transcript import MAX_SPEAKERS

log = logging.getLogger(__name__)

# whitespace-delimited label tokens, canonical or OOV
_LABEL_SPAN = re.compile(r"(?<!\S)\[[^\s\[\]]+\](?!\S)")


class Tokenizer(Protocol):
    def count_tokens(self, text: str) -> int: ...

    def truncate_to_last_n_tokens(self, text: str, n: int) -> str: ...


class WhitespaceTokenizer:
    """One token per whitespace-delimited piece; a label is one token."""

    def count_tokens(self, text: str) -> int:
        return len(text.split())

    def truncate_to_last_n_tokens(self, text: str, n: int) -> str:
        if n <= 0:
            return ""
        return " ".join(text.split()[-n:])


@dataclass
class PromptConfig:
    max_speakers: int = MAX_SPEAKERS
    prompt_budget: int = 224
    label_format: str = "[S{n}]"
    tokenizer_id: str = "whitespace"
    vocab_path: str | None = None
    merges_path: str | None = None
    # when False the context alone gets the whole budget
    budget_includes_task: bool = True
    raw_truncation: bool = False

    def __post_init__(self):
        if not 1 <= self.max_speakers <= MAX_SPEAKERS:
            raise ValidationError(f"max_speakers must be in 1..{MAX_SPEAKERS}, got {self.max_speakers}")
        if self.prompt_budget < 1:
            raise ValidationError(f"prompt_budget must be positive, got {self.prompt_budget}")


def get_tokenizer(
    tokenizer_id: str = "whitespace",
    vocab_path: str | Path | None = None,
    merges_path: str | Path | None = None,
) -> Tokenizer:
    """Resolve a tokenizer id: ``"whitespace"`` or ``"bpe"`` (needs vocab and merges files)."""
    if tokenizer_id == "whitespace":
        return WhitespaceTokenizer()
    if tokenizer_id == "bpe":
        if vocab_path is None or merges_path is None:
            raise ValidationError("the bpe tokenizer needs vocab_path and merges_path")
        return BPETokenizer.from_files(vocab_path, merges_path)
    raise ValidationError(f"unknown tokenizer id: {tokenizer_id!r}")


def tokenizer_for(config: PromptConfig) -> Tokenizer:
    return get_tokenizer(config.tokenizer_id, config.vocab_path, config.merges_path)


def count_tokens(text: str, tokenizer: Tokenizer | str = "whitespace") -> int:
    if isinstance(tokenizer, str):
        tokenizer = get_tokenizer(tokenizer)
    return tokenizer.count_tokens(text)


def make_task_prompt(config: PromptConfig | None = None) -> str:
    """Space-joined label vocabulary, e.g. ``"[S1] [S2] [S3] [S4] [S5]"``."""
    config = config or PromptConfig()
    return " ".join(config.label_format.format(n=n) for n in range(1, config.max_speakers + 1))


def truncate_context_left(
    context: str,
    budget: int,
    tokenizer: Tokenizer | None = None,
    raw: bool = False,
) -> str:
    """Keep the last ``budget`` tokens of ``context``.

    Unless ``raw`` is set, a cut that lands inside a turn gets the turn's
    label prepended (inside the budget), so the result always opens with a
    label whenever the context had one.
    """
    tokenizer = tokenizer or WhitespaceTokenizer()
    if isinstance(tokenizer, WhitespaceTokenizer):
        context = " ".join(context.split())
    if budget <= 0:
        if context:
            log.warning("context budget %d leaves no room for context", budget)
        return ""
    if tokenizer.count_tokens(context) <= budget:
        return context
    if raw:
        return tokenizer.truncate_to_last_n_tokens(context, budget)

    labels = [(m.start(), m.end()) for m in _LABEL_SPAN.finditer(context)]
    for n in range(budget, 0, -1):
        suffix = tokenizer.truncate_to_last_n_tokens(context, n)
        # suffixes from both built-in tokenizers are literal string suffixes
        cut = len(context) - len(suffix)
        governing = None
        for start, end in labels:
            if start >= cut:
                break
            governing = (start, end)
            if cut < end:
                cut = end  # a label split by the cut is dropped and re-prepended whole
        rest = context[cut:].strip()
        if not rest:
            continue
        if governing is None or _LABEL_SPAN.match(rest):
            out = rest
        else:
            out = context[governing[0] : governing[1]] + " " + rest
        if tokenizer.count_tokens(out) <= budget:
            return out
    log.warning("context budget %d cannot hold a label and one token", budget)
    return ""


def compose_prompt(
    task: str,
    context: str | None,
    config: PromptConfig | None = None,
    tokenizer: Tokenizer | None = None,
) -> str:
    """Task prompt, optionally followed by the left-truncated context."""
    config = config or PromptConfig()
    tokenizer = tokenizer or tokenizer_for(config)
    if not context or not context.strip():
        return task
    task_tokens = tokenizer.count_tokens(task)
    if config.budget_includes_task:
        if config.prompt_budget < task_tokens + 1:
            raise ValidationError(
                f"prompt_budget {config.prompt_budget} cannot hold the task prompt ({task_tokens} tokens)"
            )
        budget = config.prompt_budget - task_tokens - 1
    else:
        budget = config.prompt_budget
    while budget > 0:
        kept = truncate_context_left(context, budget, tokenizer, raw=config.raw_truncation)
        if not kept:
            return task
        prompt = task + " " + kept
        if not config.budget_includes_task or tokenizer.count_tokens(prompt) <= config.prompt_budget:
            return prompt
        # the joining space merged differently than counted; retry smaller
        budget -= 1
    return task
