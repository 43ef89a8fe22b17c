"""Run configuration: packaged defaults, a user file merged on top, flag overrides."""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .errors import ValidationError
from .prompting import PromptConfig
from .simulation import ConversationSpec, ErrorModel, ExperimentSpec


def default_config() -> dict[str, Any]:
    text = resources.files("talkturn").joinpath("data/default_config.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> dict[str, Any]:
    """Defaults, then the YAML/JSON file at ``path``, then ``overrides`` (None values skipped)."""
    config = default_config()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                user = yaml.safe_load(f) or {}
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ValidationError(f"invalid config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ValidationError(f"config {path} must be a mapping")
        unknown = set(user) - set(config)
        if unknown:
            raise ValidationError(f"unknown config key(s) in {path}: {', '.join(sorted(unknown))}")
        config = deep_merge(config, user)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = config
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return config


def prompt_config(config: dict) -> PromptConfig:
    try:
        return PromptConfig(**config["prompt"])
    except TypeError as exc:
        raise ValidationError(f"bad prompt config: {exc}") from exc


def experiment_spec(config: dict) -> ExperimentSpec:
    sim = config["simulate"]
    try:
        error_model = ErrorModel(**{**sim["error_model"], "seed": config["seed"]})
        conversation = ConversationSpec(
            n_speakers=sim["speakers_per_audio"],
            length_s=float(sim["audio_length_s"]),
            **sim.get("conversation", {}),
        )
        return ExperimentSpec(
            error_model=error_model,
            n_synthetic_audios=int(sim["n_synthetic_audios"]),
            speakers_per_audio=int(sim["speakers_per_audio"]),
            audio_length_s=float(sim["audio_length_s"]),
            horizons=tuple(None if h is None else float(h) for h in sim["horizons"]),
            propagation=sim["propagation"],
            conversation=conversation,
            chunk_limit_s=float(config["chunk_limit_s"]),
            collar_s=float(config["collar_s"]),
            seed=int(config["seed"]),
        )
    except TypeError as exc:
        raise ValidationError(f"bad simulate config: {exc}") from exc


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()
