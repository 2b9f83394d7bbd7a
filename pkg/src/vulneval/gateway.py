"""Provider-agnostic chat access with caching, retries, and tool calling.

The mock backend is a pure map from prompt fingerprints to scripted
replies, which is what makes full-pipeline runs reproducible offline.
Responses are cached content-addressed on (model, prompt fingerprint,
seed) so an edited prompt naturally invalidates its cache entry while a
replayed run never re-pays for an answer it already has.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol

import requests

from .prompts import PromptBundle


class TransportError(RuntimeError):
    pass


class ToolRoundCapError(RuntimeError):
    def __init__(self, message: str, transcript: list["ToolCall"]):
        super().__init__(message)
        self.transcript = transcript


@dataclass(frozen=True)
class LlmHandle:
    provider_id: str
    model_id: str
    temperature: float = 0.0
    seed: int | None = None
    supports_tools: bool = False
    max_tokens: int = 4096

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class ToolCall:
    name: str
    args: dict
    result: str


@dataclass
class ChatExchange:
    bundle: PromptBundle
    response_text: str
    tool_calls: list[ToolCall] = field(default_factory=list)
    usage: tuple[int, int] = (0, 0)
    cached: bool = False
    attempts: int = 1


class ToolRegistry:
    """Named callables plus their machine-readable parameter schemas."""

    def __init__(self) -> None:
        self._tools: dict[str, tuple[dict, Callable[..., str]]] = {}

    def register(self, name: str, description: str, parameters: dict, fn: Callable[..., str]) -> None:
        schema = {
            "name": name,
            "description": description,
            "parameters": {"type": "object", "properties": parameters, "required": sorted(parameters)},
        }
        self._tools[name] = (schema, fn)

    def schemas(self) -> list[dict]:
        return [schema for schema, _ in self._tools.values()]

    def call(self, name: str, args: Mapping) -> str:
        if name not in self._tools:
            return f"error: unknown tool '{name}'"
        _, fn = self._tools[name]
        try:
            return str(fn(**dict(args)))
        except TypeError as exc:
            return f"error: bad arguments for '{name}': {exc}"


@dataclass
class BackendReply:
    text: str | None = None
    tool_requests: list[tuple[str, dict]] = field(default_factory=list)
    usage: tuple[int, int] = (0, 0)


class Backend(Protocol):
    def chat(self, handle: LlmHandle, bundle: PromptBundle, messages: list[dict], tools: list[dict] | None) -> BackendReply: ...


def _estimate_tokens(text: str) -> int:
    return max(1, len(text) // 4)


class MockBackend:
    """Deterministic scripted backend.

    Replies are looked up by prompt fingerprint. A script is either a
    final string or a list of rounds, where each round is a list of
    (tool name, args) requests or a final string; the round index is the
    number of tool-result messages already in the conversation, so the
    same fingerprint replays identically on every call. Unscripted
    fingerprints fall back to a FIFO queue, then to `default_response`.
    """

    def __init__(self, default_response: str | None = None):
        self.scripts: dict[str, list] = {}
        self.failures: dict[str, int] = {}
        self.queue: list[str] = []
        self.default_response = default_response
        self.call_count = 0
        self._lock = threading.Lock()
        self.in_flight = 0
        self.max_in_flight = 0

    def script(self, fingerprint: str, response) -> None:
        self.scripts[fingerprint] = response if isinstance(response, list) else [response]

    def fail(self, fingerprint: str, times: int) -> None:
        self.failures[fingerprint] = times

    def push(self, response: str) -> None:
        self.queue.append(response)

    def chat(self, handle: LlmHandle, bundle: PromptBundle, messages: list[dict], tools: list[dict] | None) -> BackendReply:
        with self._lock:
            self.call_count += 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
        try:
            key = bundle.fingerprint
            with self._lock:
                if self.failures.get(key, 0) > 0:
                    self.failures[key] -= 1
                    raise TransportError(f"scripted failure for {key[:12]}")
            prompt_tokens = _estimate_tokens(bundle.user_text)
            rounds = self.scripts.get(key)
            if rounds is None:
                with self._lock:
                    if self.queue:
                        text = self.queue.pop(0)
                    elif self.default_response is not None:
                        text = self.default_response
                    else:
                        raise KeyError(f"no script for fingerprint {key[:12]}… and no default response")
                return BackendReply(text=text, usage=(prompt_tokens, _estimate_tokens(text)))
            round_index = sum(1 for m in messages if m.get("role") == "tool")
            step = rounds[min(round_index, len(rounds) - 1)]
            if isinstance(step, str):
                return BackendReply(text=step, usage=(prompt_tokens, _estimate_tokens(step)))
            return BackendReply(tool_requests=[(name, dict(args)) for name, args in step], usage=(prompt_tokens, 0))
        finally:
            with self._lock:
                self.in_flight -= 1


@dataclass
class ProviderConfig:
    """Wire config for one provider; API keys live in env vars only."""

    provider_id: str
    base_url: str
    model_id: str
    auth_env: str
    supports_tools: bool = False
    supports_temperature: bool = True

    @classmethod
    def from_file(cls, path: str | Path) -> "ProviderConfig":
        row = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            provider_id=row["provider_id"],
            base_url=row.get("base_url", ""),
            model_id=row["model_id"],
            auth_env=row.get("auth_env", ""),
            supports_tools=bool(row.get("supports_tools", False)),
            supports_temperature=bool(row.get("supports_temperature", True)),
        )

    def handle(self, seed: int | None = None, temperature: float = 0.0, max_tokens: int = 4096) -> LlmHandle:
        return LlmHandle(
            provider_id=self.provider_id,
            model_id=self.model_id,
            temperature=temperature,
            seed=seed,
            supports_tools=self.supports_tools,
            max_tokens=max_tokens,
        )


class HttpBackend:
    """OpenAI-style chat-completions transport."""

    def __init__(self, config: ProviderConfig, timeout: float = 120.0, session: requests.Session | None = None):
        self.config = config
        self.timeout = timeout
        self.session = session or requests.Session()

    def build_payload(self, handle: LlmHandle, messages: list[dict], tools: list[dict] | None) -> dict:
        payload: dict = {"model": handle.model_id, "messages": messages, "max_tokens": handle.max_tokens}
        if self.config.supports_temperature:
            payload["temperature"] = handle.temperature
        if handle.seed is not None:
            payload["seed"] = handle.seed
        if tools:
            payload["tools"] = [{"type": "function", "function": schema} for schema in tools]
        return payload

    def chat(self, handle: LlmHandle, bundle: PromptBundle, messages: list[dict], tools: list[dict] | None) -> BackendReply:
        api_key = os.environ.get(self.config.auth_env, "")
        if not api_key:
            raise TransportError(f"missing API key: set ${self.config.auth_env}")
        try:
            response = self.session.post(
                self.config.base_url,
                json=self.build_payload(handle, messages, tools),
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=self.timeout,
            )
            response.raise_for_status()
            body = response.json()
        except (requests.RequestException, ValueError) as exc:
            raise TransportError(str(exc)) from exc
        choice = body["choices"][0]["message"]
        usage = body.get("usage", {})
        tool_requests = []
        for call in choice.get("tool_calls") or []:
            fn = call.get("function", {})
            try:
                args = json.loads(fn.get("arguments", "{}"))
            except ValueError:
                args = {}
            tool_requests.append((fn.get("name", ""), args))
        return BackendReply(
            text=choice.get("content"),
            tool_requests=tool_requests,
            usage=(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))),
        )


class ResponseCache:
    """File-per-key cache; writes are atomic so readers never see a torn record."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(handle: LlmHandle, bundle: PromptBundle) -> str:
        import hashlib

        return hashlib.sha256(f"{handle.model_id}\x1f{bundle.fingerprint}\x1f{handle.seed}".encode()).hexdigest()

    def get(self, key: str) -> dict | None:
        path = self.directory / f"{key}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, record: dict) -> None:
        path = self.directory / f"{key}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(record, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, path)


DEFAULT_TOOL_ROUND_CAP = 5


class LlmGateway:
    """Shared front door to all chat backends.

    Bounded per-provider parallelism, exponential-backoff retries, the
    tool-resolution loop, and the response cache all live here so callers
    only ever see a finished ChatExchange.
    """

    def __init__(
        self,
        backends: Mapping[str, Backend] | Backend,
        cache_dir: str | Path | None = None,
        max_inflight: int = 8,
        tool_round_cap: int = DEFAULT_TOOL_ROUND_CAP,
        retry_attempts: int = 3,
        backoff_base: float = 0.5,
    ):
        if not isinstance(backends, Mapping):
            backends = {"*": backends}
        self.backends = dict(backends)
        self.cache = ResponseCache(cache_dir) if cache_dir is not None else None
        self.tool_round_cap = tool_round_cap
        self.retry_attempts = retry_attempts
        self.backoff_base = backoff_base
        self._semaphores: dict[str, threading.Semaphore] = {}
        self._sem_lock = threading.Lock()
        self.max_inflight = max_inflight

    def _backend_for(self, provider_id: str) -> Backend:
        backend = self.backends.get(provider_id) or self.backends.get("*")
        if backend is None:
            raise TransportError(f"no backend registered for provider {provider_id!r}")
        return backend

    def _semaphore_for(self, provider_id: str) -> threading.Semaphore:
        with self._sem_lock:
            if provider_id not in self._semaphores:
                self._semaphores[provider_id] = threading.Semaphore(self.max_inflight)
            return self._semaphores[provider_id]

    def _chat_with_retry(self, backend, handle, bundle, messages, tool_schemas) -> tuple[BackendReply, int]:
        last_error: Exception | None = None
        for attempt in range(1, self.retry_attempts + 1):
            try:
                return backend.chat(handle, bundle, messages, tool_schemas), attempt
            except TransportError as exc:
                last_error = exc
                if attempt < self.retry_attempts and self.backoff_base > 0:
                    time.sleep(self.backoff_base * 2 ** (attempt - 1))
        raise TransportError(f"transport failed after {self.retry_attempts} attempts: {last_error}")

    def complete(self, handle: LlmHandle, bundle: PromptBundle, tools: ToolRegistry | None = None) -> ChatExchange:
        cache_key = ResponseCache.key(handle, bundle) if self.cache else None
        if self.cache and cache_key:
            hit = self.cache.get(cache_key)
            if hit is not None:
                return ChatExchange(
                    bundle=bundle,
                    response_text=hit["response_text"],
                    tool_calls=[ToolCall(*c) for c in hit.get("tool_calls", [])],
                    usage=tuple(hit.get("usage", (0, 0))),
                    cached=True,
                    attempts=0,
                )

        backend = self._backend_for(handle.provider_id)
        use_tools = tools is not None and handle.supports_tools
        tool_schemas = tools.schemas() if use_tools else None

        messages: list[dict] = []
        if bundle.system_text:
            messages.append({"role": "system", "content": bundle.system_text})
        messages.append({"role": "user", "content": bundle.user_text})

        tool_calls: list[ToolCall] = []
        total_usage = [0, 0]
        attempts_total = 0
        semaphore = self._semaphore_for(handle.provider_id)
        with semaphore:
            for round_index in range(self.tool_round_cap + 1):
                reply, attempts = self._chat_with_retry(backend, handle, bundle, messages, tool_schemas)
                attempts_total += attempts
                total_usage[0] += reply.usage[0]
                total_usage[1] += reply.usage[1]
                if not reply.tool_requests:
                    exchange = ChatExchange(
                        bundle=bundle,
                        response_text=reply.text or "",
                        tool_calls=tool_calls,
                        usage=(total_usage[0], total_usage[1]),
                        cached=False,
                        attempts=attempts_total,
                    )
                    if self.cache and cache_key:
                        self.cache.put(
                            cache_key,
                            {
                                "model_id": handle.model_id,
                                "fingerprint": bundle.fingerprint,
                                "seed": handle.seed,
                                "response_text": exchange.response_text,
                                "tool_calls": [[c.name, c.args, c.result] for c in tool_calls],
                                "usage": list(exchange.usage),
                            },
                        )
                    return exchange
                if not use_tools:
                    raise TransportError("backend requested tool calls but tools are unavailable")
                if round_index == self.tool_round_cap:
                    break
                for name, args in reply.tool_requests:
                    result = tools.call(name, args)
                    tool_calls.append(ToolCall(name=name, args=args, result=result))
                    messages.append({"role": "assistant", "content": json.dumps({"tool_call": name, "args": args})})
                    messages.append({"role": "tool", "content": result})
        raise ToolRoundCapError(f"tool rounds exceeded cap of {self.tool_round_cap}", tool_calls)


def generate_time_seed() -> int:
    """Experiment seed from the wall clock; persist it in the run manifest."""
    return time.time_ns() % (2**31 - 1)
