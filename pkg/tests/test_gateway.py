from __future__ import annotations

import json
import threading

import pytest

from vulneval.gateway import (
    LlmGateway,
    LlmHandle,
    HttpBackend,
    MockBackend,
    ProviderConfig,
    ToolRegistry,
    ToolRoundCapError,
    TransportError,
)
from vulneval.prompts import make_bundle

PLAIN = LlmHandle(provider_id="mock", model_id="mock-1")
TOOLY = LlmHandle(provider_id="mock", model_id="mock-1", supports_tools=True)


def _registry(answers: dict[str, str]) -> ToolRegistry:
    registry = ToolRegistry()
    registry.register(
        "getFunctionDefinition",
        "Return the source of the named function.",
        {"name": {"type": "string"}},
        lambda name: answers.get(name, "not found"),
    )
    return registry


def test_temperature_validation() -> None:
    with pytest.raises(ValueError):
        LlmHandle(provider_id="p", model_id="m", temperature=-1.0)


def test_scripted_response_and_cache(tmp_path) -> None:
    backend = MockBackend()
    gateway = LlmGateway(backend, cache_dir=tmp_path / "cache", backoff_base=0)
    bundle = make_bundle("is this vulnerable?")
    backend.script(bundle.fingerprint, "yes, reentrancy, because the call precedes the update")

    first = gateway.complete(PLAIN, bundle)
    assert first.response_text.startswith("yes, reentrancy")
    assert first.cached is False

    second = gateway.complete(PLAIN, bundle)
    assert second.cached is True
    assert second.response_text == first.response_text
    assert second.usage == first.usage
    assert backend.call_count == 1


def test_cache_key_includes_seed(tmp_path) -> None:
    backend = MockBackend(default_response="answer")
    gateway = LlmGateway(backend, cache_dir=tmp_path / "cache", backoff_base=0)
    bundle = make_bundle("q")
    gateway.complete(PLAIN, bundle)
    seeded = LlmHandle(provider_id="mock", model_id="mock-1", seed=7)
    exchange = gateway.complete(seeded, bundle)
    assert exchange.cached is False
    assert backend.call_count == 2


def test_tool_loop_single_round() -> None:
    backend = MockBackend()
    gateway = LlmGateway(backend, backoff_base=0)
    registry = _registry({"pairTokensAndValue": "function pairTokensAndValue() { }"})
    bundle = make_bundle("inspect", tool_schemas=registry.schemas())
    backend.script(
        bundle.fingerprint,
        [[("getFunctionDefinition", {"name": "pairTokensAndValue"})], "no, not vulnerable"],
    )
    exchange = gateway.complete(TOOLY, bundle, tools=registry)
    assert len(exchange.tool_calls) == 1
    assert exchange.tool_calls[0].name == "getFunctionDefinition"
    assert exchange.tool_calls[0].result == "function pairTokensAndValue() { }"
    assert exchange.response_text == "no, not vulnerable"


def test_tool_round_cap() -> None:
    backend = MockBackend()
    gateway = LlmGateway(backend, backoff_base=0, tool_round_cap=3)
    registry = _registry({})
    bundle = make_bundle("loop forever", tool_schemas=registry.schemas())
    backend.script(bundle.fingerprint, [[("getFunctionDefinition", {"name": "x"})]])
    with pytest.raises(ToolRoundCapError) as excinfo:
        gateway.complete(TOOLY, bundle, tools=registry)
    assert len(excinfo.value.transcript) == 3


def test_cache_restores_tool_transcript(tmp_path) -> None:
    backend = MockBackend()
    gateway = LlmGateway(backend, cache_dir=tmp_path / "cache", backoff_base=0)
    registry = _registry({"f": "int f() { }"})
    bundle = make_bundle("with tools", tool_schemas=registry.schemas())
    backend.script(bundle.fingerprint, [[("getFunctionDefinition", {"name": "f"})], "done"])

    first = gateway.complete(TOOLY, bundle, tools=registry)
    second = gateway.complete(TOOLY, bundle, tools=registry)
    assert second.cached is True
    assert second.tool_calls == first.tool_calls
    assert second.response_text == first.response_text


def test_registry_unknown_tool_returns_error_string() -> None:
    registry = _registry({})
    assert registry.call("noSuchTool", {}).startswith("error: unknown tool")
    assert registry.call("getFunctionDefinition", {"bogus": 1}).startswith("error: bad arguments")


def test_retry_two_failures_then_success() -> None:
    backend = MockBackend()
    gateway = LlmGateway(backend, backoff_base=0)
    bundle = make_bundle("flaky")
    backend.script(bundle.fingerprint, "recovered")
    backend.fail(bundle.fingerprint, times=2)
    exchange = gateway.complete(PLAIN, bundle)
    assert exchange.response_text == "recovered"
    assert exchange.attempts == 3


def test_retry_exhaustion_raises_transport_error() -> None:
    backend = MockBackend()
    gateway = LlmGateway(backend, backoff_base=0, retry_attempts=3)
    bundle = make_bundle("always down")
    backend.script(bundle.fingerprint, "never reached")
    backend.fail(bundle.fingerprint, times=99)
    with pytest.raises(TransportError):
        gateway.complete(PLAIN, bundle)


def test_bounded_concurrency_probe() -> None:
    backend = MockBackend(default_response="ok")
    gateway = LlmGateway(backend, backoff_base=0, max_inflight=2)
    threads = [
        threading.Thread(target=lambda i=i: gateway.complete(PLAIN, make_bundle(f"q{i}")))
        for i in range(12)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert backend.call_count == 12
    assert backend.max_in_flight <= 2


def test_mock_queue_fallback() -> None:
    backend = MockBackend()
    gateway = LlmGateway(backend, backoff_base=0)
    backend.push("first")
    backend.push("second")
    assert gateway.complete(PLAIN, make_bundle("a")).response_text == "first"
    assert gateway.complete(PLAIN, make_bundle("b")).response_text == "second"
    with pytest.raises(KeyError):
        gateway.complete(PLAIN, make_bundle("c"))


def test_provider_config_round_trip(tmp_path) -> None:
    path = tmp_path / "provider.json"
    path.write_text(
        json.dumps(
            {
                "provider_id": "openai",
                "base_url": "https://api.example.com/v1/chat/completions",
                "model_id": "gpt-x",
                "auth_env": "EXAMPLE_KEY",
                "supports_tools": True,
                "supports_temperature": False,
            }
        )
    )
    config = ProviderConfig.from_file(path)
    assert config.supports_tools is True
    handle = config.handle(seed=42)
    assert handle.model_id == "gpt-x"
    assert handle.seed == 42


def test_http_payload_omits_temperature_when_unsupported() -> None:
    config = ProviderConfig(
        provider_id="openai",
        base_url="https://api.example.com",
        model_id="o-mini",
        auth_env="K",
        supports_temperature=False,
    )
    backend = HttpBackend(config)
    handle = LlmHandle(provider_id="openai", model_id="o-mini", seed=11)
    payload = backend.build_payload(handle, [{"role": "user", "content": "q"}], tools=None)
    assert "temperature" not in payload
    assert payload["seed"] == 11

    config.supports_temperature = True
    payload = HttpBackend(config).build_payload(handle, [], tools=[{"name": "report"}])
    assert payload["temperature"] == 0.0
    assert payload["tools"][0]["function"]["name"] == "report"


def test_missing_api_key_is_transport_error() -> None:
    config = ProviderConfig(provider_id="p", base_url="https://x", model_id="m", auth_env="DEFINITELY_UNSET_KEY_1")
    with pytest.raises(TransportError):
        HttpBackend(config).chat(PLAIN, make_bundle("q"), [], None)
