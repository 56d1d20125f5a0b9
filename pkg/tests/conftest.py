from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from ehrtutor.config import EngineConfig
from ehrtutor.gateway import GatewayMode, LLMGateway, load_cassette
from ehrtutor.stubprovider import StubProvider

# Property tests here do real work (template rendering, session stepping), so
# wall-clock deadlines are noise; example counts stay at the library default.
settings.register_profile(
    "ehrtutor", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ehrtutor")

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def config() -> EngineConfig:
    return EngineConfig()


@pytest.fixture
def stub_gateway() -> LLMGateway:
    """Live gateway over the deterministic offline provider."""
    return LLMGateway(GatewayMode.LIVE, provider=StubProvider())


@pytest.fixture
def scripted_gateway():
    """Factory for scripted gateways: pass {tag: [replies...]}."""

    def make(script=None) -> LLMGateway:
        gateway = LLMGateway(GatewayMode.SCRIPTED)
        if script:
            gateway.enqueue_script(script)
        return gateway

    return make


@pytest.fixture(scope="session")
def bundled_cassette():
    from importlib import resources

    with resources.as_file(
        resources.files("ehrtutor").joinpath("data/bundled_cassette.jsonl")
    ) as path:
        return load_cassette(path)


@pytest.fixture
def replay_gateway(bundled_cassette) -> LLMGateway:
    return LLMGateway(GatewayMode.REPLAY, cassette=bundled_cassette)
