from __future__ import annotations

import json

import pytest

from ehrtutor.config import (
    DEFAULT_TEMPERATURES,
    TAG_AGENT,
    TAG_KEYPOINTS,
    EngineConfig,
    config_from_dict,
    load_config,
)
from ehrtutor.errors import IoFailure


def test_defaults():
    config = EngineConfig()
    assert config.max_hints == 1
    assert config.max_keypoints == 12
    assert config.provider.model_id == "gpt-4"
    assert config.provider.api_key_env == "EHRTUTOR_API_KEY"
    assert config.thresholds.excellent == 4.5


def test_temperature_for():
    config = EngineConfig()
    assert config.temperature_for(TAG_KEYPOINTS) == 0.7
    assert config.temperature_for(TAG_AGENT) == 0.0
    # Unknown tags deliberately fall back to the deterministic end.
    assert config.temperature_for("some_future_tag") == 0.0


def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "engine.json"
    path.write_text(
        json.dumps(
            {
                "provider": {"model_id": "gpt-4o", "retries": 5},
                "temperatures": {"keypoint_chain": 0.2},
                "max_hints": 2,
                "thresholds": {"excellent": 4.8},
            }
        )
    )
    config = load_config(path)
    assert config.provider.model_id == "gpt-4o"
    assert config.provider.retries == 5
    assert config.provider.base_url == "https://api.openai.com/v1"
    assert config.max_hints == 2
    assert config.thresholds.excellent == 4.8
    assert config.thresholds.good == 3.5


def test_temperature_overlay_keeps_unmentioned_defaults():
    config = config_from_dict({"temperatures": {"keypoint_chain": 0.1}})
    assert config.temperature_for(TAG_KEYPOINTS) == 0.1
    for tag, temp in DEFAULT_TEMPERATURES.items():
        if tag != TAG_KEYPOINTS:
            assert config.temperature_for(tag) == temp


def test_unknown_key_is_loud():
    with pytest.raises(IoFailure) as err:
        config_from_dict({"max_hnits": 2}, source="engine.json")
    assert "max_hnits" in str(err.value)
    assert "engine.json" in str(err.value)


def test_schema_version_key_is_tolerated():
    config = config_from_dict({"schema_version": 1, "max_tokens": 512})
    assert config.max_tokens == 512


def test_bad_json_reports_offset(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"max_hints": }')
    with pytest.raises(IoFailure) as err:
        load_config(path)
    assert err.value.offset == 14


def test_non_object_root(tmp_path):
    path = tmp_path / "list.json"
    path.write_text("[1, 2]")
    with pytest.raises(IoFailure):
        load_config(path)


def test_config_is_frozen():
    with pytest.raises(Exception):
        EngineConfig().max_hints = 3  # type: ignore[misc]
