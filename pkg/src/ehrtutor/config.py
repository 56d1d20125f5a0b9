"""Engine configuration.

A single :class:`EngineConfig` travels through the whole stack.  Values come
from dataclass defaults, optionally overridden by a JSON config file and then
by CLI flags.  Credentials never live here: only the *name* of the environment
variable that holds the provider key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import IoFailure

#: request tags, one per model-facing call site.
TAG_KEYPOINTS = "keypoint_chain"
TAG_QUESTIONS = "question_chain"
TAG_VERIFICATION = "verification_chain"
TAG_HINT = "hint_chain"
TAG_SUMMARY = "summary_chain"
TAG_ASSESSMENT = "assessment"
TAG_AGENT = "agent"
TAG_PATIENT = "patient"
TAG_JUDGE = "judge"
TAG_BASELINE = "baseline"

# Generation-flavored calls sample at 0.7; anything that verifies, grades or
# decides runs at 0.0 so its output is as stable as the provider allows.
DEFAULT_TEMPERATURES: dict[str, float] = {
    TAG_KEYPOINTS: 0.7,
    TAG_QUESTIONS: 0.7,
    TAG_HINT: 0.7,
    TAG_SUMMARY: 0.7,
    TAG_PATIENT: 0.7,
    TAG_BASELINE: 0.7,
    TAG_VERIFICATION: 0.0,
    TAG_ASSESSMENT: 0.0,
    TAG_AGENT: 0.0,
    TAG_JUDGE: 0.0,
}


@dataclass(frozen=True)
class ProviderSettings:
    """Connection settings for a chat-completion provider."""

    base_url: str = "https://api.openai.com/v1"
    model_id: str = "gpt-4"
    api_key_env: str = "EHRTUTOR_API_KEY"
    retries: int = 2
    timeout_s: float = 60.0
    backoff_s: float = 0.5


@dataclass(frozen=True)
class QualityThresholds:
    """Cut points for the quality ladder, applied to the minimum perspective
    average.  These are a convention of this implementation, not a published
    rubric."""

    excellent: float = 4.5
    good: float = 3.5
    fair: float = 2.5


@dataclass(frozen=True)
class EngineConfig:
    provider: ProviderSettings = field(default_factory=ProviderSettings)
    temperatures: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_TEMPERATURES))
    max_tokens: int = 1024
    max_hints: int = 1
    max_keypoints: int = 12
    scratchpad_token_budget: int = 2000
    transcript_tail_turns: int = 8
    baseline_turns: int = 8
    batch_parallelism: int = 1
    thresholds: QualityThresholds = field(default_factory=QualityThresholds)

    def temperature_for(self, tag: str) -> float:
        return self.temperatures.get(tag, 0.0)


def load_config(path: str | Path) -> EngineConfig:
    """Read an :class:`EngineConfig` from a JSON file.

    Unknown keys are rejected loudly — a typo in a config file should never
    silently fall back to a default.
    """
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as err:
        raise IoFailure(str(path), f"config is not valid JSON: {err.msg}", offset=err.pos)
    if not isinstance(data, dict):
        raise IoFailure(str(path), "config root must be an object")
    return config_from_dict(data, source=str(path))


def config_from_dict(data: Mapping[str, Any], source: str = "<config>") -> EngineConfig:
    known = {
        "provider",
        "temperatures",
        "max_tokens",
        "max_hints",
        "max_keypoints",
        "scratchpad_token_budget",
        "transcript_tail_turns",
        "baseline_turns",
        "batch_parallelism",
        "thresholds",
    }
    unknown = set(data) - known - {"schema_version"}
    if unknown:
        raise IoFailure(source, f"unknown config keys: {sorted(unknown)}")

    config = EngineConfig()
    if "provider" in data:
        config = replace(config, provider=ProviderSettings(**dict(data["provider"])))
    if "temperatures" in data:
        temps = dict(DEFAULT_TEMPERATURES)
        temps.update({str(k): float(v) for k, v in data["temperatures"].items()})
        config = replace(config, temperatures=temps)
    if "thresholds" in data:
        config = replace(config, thresholds=QualityThresholds(**dict(data["thresholds"])))
    for key in (
        "max_tokens",
        "max_hints",
        "max_keypoints",
        "scratchpad_token_budget",
        "transcript_tail_turns",
        "baseline_turns",
        "batch_parallelism",
    ):
        if key in data:
            config = replace(config, **{key: int(data[key])})
    return config
