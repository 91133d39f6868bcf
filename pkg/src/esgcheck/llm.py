"""Chat-completion boundary with token, cost and energy accounting.

Two backends share one interface: ``RemoteBackend`` speaks the common
chat-completions JSON shape over HTTP, and ``MockBackend`` replays a script
(optionally backed by a responder function) so engine runs are reproducible
offline.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

import httpx

from .core import UsageLedger
from .errors import (
    BackendError,
    FormatError,
    InvalidInputError,
    MockScriptError,
    PricingError,
    TransportError,
)

ROLES = ("system", "user", "assistant", "tool")

# calibrated so 87,541 tokens in one call cost 0.875 USD and 0.175 kWh
BLENDED_USD_PER_1K = 0.01
DEFAULT_KWH_PER_1K_TOKENS = 0.002
DEFAULT_KWH_PER_CALL = 0.0


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise InvalidInputError(f"unknown chat role {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise InvalidInputError(f"{self.role} message must have content")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


def system(content: str) -> ChatMessage:
    return ChatMessage("system", content)


def user(content: str) -> ChatMessage:
    return ChatMessage("user", content)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    prompt_tokens: int
    completion_tokens: int
    model_id: str

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise InvalidInputError("token counts must be non-negative")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


class ChatBackend(Protocol):
    model_id: str

    def chat(self, messages: Sequence[ChatMessage]) -> ChatResponse: ...


def estimate_tokens(text: str) -> int:
    """Rough token count: one token per four characters, rounded up.

    This is an estimate for offline accounting, not a model tokenizer.
    """
    return math.ceil(len(text) / 4)


def _check_messages(messages: Sequence[ChatMessage]) -> None:
    if not messages:
        raise InvalidInputError("chat needs at least one message")
    if messages[-1].role not in ("user", "tool"):
        raise InvalidInputError("last chat message must come from the user or a tool")


def last_user_message(messages: Sequence[ChatMessage]) -> str:
    for message in reversed(messages):
        if message.role == "user":
            return message.content
    return ""


@dataclass
class ScriptEntry:
    match: str
    reply: str


Responder = Callable[[Sequence[ChatMessage]], "str | None"]


class MockBackend:
    """Scripted, deterministic chat backend.

    Each request is answered by the first not-yet-used script entry whose
    ``match`` substring occurs in the last user message; that entry is then
    consumed. When no entry matches, ``responder`` (if given) produces the
    reply. Anything else is a MockScriptError.
    """

    def __init__(
        self,
        script: Iterable[ScriptEntry | Mapping[str, str]] = (),
        *,
        responder: Responder | None = None,
        model_id: str = "mock",
    ):
        self.model_id = model_id
        self._script = [e if isinstance(e, ScriptEntry) else ScriptEntry(e["match"], e["reply"]) for e in script]
        self._used = [False] * len(self._script)
        self._responder = responder
        self._lock = threading.Lock()
        self.requests: list[str] = []

    @classmethod
    def from_file(cls, path: str | Path, **kwargs: Any) -> "MockBackend":
        return cls(load_mock_script(path), **kwargs)

    @property
    def remaining(self) -> int:
        return self._used.count(False)

    def chat(self, messages: Sequence[ChatMessage]) -> ChatResponse:
        _check_messages(messages)
        query = last_user_message(messages)
        with self._lock:
            self.requests.append(query)
            reply = None
            for n, entry in enumerate(self._script):
                if not self._used[n] and entry.match in query:
                    self._used[n] = True
                    reply = entry.reply
                    break
        if reply is None and self._responder is not None:
            reply = self._responder(messages)
        if reply is None:
            preview = query[:80].replace("\n", " ")
            raise MockScriptError(f"no scripted reply for request starting {preview!r}")
        return ChatResponse(
            content=reply,
            prompt_tokens=sum(estimate_tokens(m.content) for m in messages),
            completion_tokens=estimate_tokens(reply),
            model_id=self.model_id,
        )


def load_mock_script(path: str | Path) -> list[ScriptEntry]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid mock script", line=exc.lineno, column=exc.colno) from exc
    if not isinstance(data, list):
        raise FormatError(f"{path}: mock script must be a JSON list")
    entries = []
    for n, raw in enumerate(data):
        if not isinstance(raw, dict) or not isinstance(raw.get("match"), str) or not isinstance(raw.get("reply"), str):
            raise FormatError(f"{path}: entry {n} needs string 'match' and 'reply'")
        entries.append(ScriptEntry(raw["match"], raw["reply"]))
    return entries


RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class RemoteBackend:
    """Client for any endpoint accepting ``POST {base_url}/chat/completions``."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        *,
        client: httpx.Client | None = None,
        max_retries: int = 2,
        backoff: Sequence[float] = (1.0, 4.0),
        sleep: Callable[[float], None] = time.sleep,
        timeout: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model_id = model
        self.max_retries = max_retries
        self.backoff = tuple(backoff)
        self._sleep = sleep
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None, **kwargs: Any) -> "RemoteBackend":
        env = os.environ if environ is None else environ
        missing = [k for k in ("ESG_LLM_API_KEY", "ESG_LLM_BASE_URL", "ESG_LLM_MODEL") if not env.get(k)]
        if missing:
            raise InvalidInputError(f"remote backend needs environment variables: {', '.join(missing)}")
        return cls(env["ESG_LLM_BASE_URL"], env["ESG_LLM_MODEL"], env["ESG_LLM_API_KEY"], **kwargs)

    def chat(self, messages: Sequence[ChatMessage]) -> ChatResponse:
        _check_messages(messages)
        payload = {"model": self.model_id, "messages": [m.to_dict() for m in messages]}
        attempt = 0
        while True:
            try:
                resp = self._client.post(f"{self.base_url}/chat/completions", json=payload, headers=self._headers)
            except httpx.TransportError as exc:
                error: BackendError = TransportError(
                    f"chat request failed after {attempt} retries: {exc}", retries=attempt
                )
            else:
                if resp.status_code == 200:
                    break
                error = TransportError(
                    f"chat endpoint returned HTTP {resp.status_code} after {attempt} retries",
                    retries=attempt,
                    status=resp.status_code,
                )
                if resp.status_code not in RETRYABLE_STATUS:
                    raise error
            if attempt >= self.max_retries:
                raise error
            self._sleep(self.backoff[min(attempt, len(self.backoff) - 1)])
            attempt += 1
        try:
            body = resp.json()
            content = body["choices"][0]["message"]["content"] or ""
            usage = body.get("usage") or {}
            return ChatResponse(
                content=content,
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
                model_id=str(body.get("model") or self.model_id),
            )
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat response: {exc}", retries=attempt) from exc


@dataclass(frozen=True)
class ModelPrice:
    usd_per_1k_prompt: float
    usd_per_1k_completion: float


@dataclass(frozen=True)
class PriceTable:
    models: Mapping[str, ModelPrice]
    kwh_per_1k_tokens: float = DEFAULT_KWH_PER_1K_TOKENS
    kwh_per_call: float = DEFAULT_KWH_PER_CALL

    def __post_init__(self) -> None:
        rates = [self.kwh_per_1k_tokens, self.kwh_per_call]
        for price in self.models.values():
            rates += [price.usd_per_1k_prompt, price.usd_per_1k_completion]
        if any(r < 0 for r in rates):
            raise InvalidInputError("price and energy rates must be non-negative")

    def price(self, model_id: str) -> ModelPrice:
        try:
            return self.models[model_id]
        except KeyError:
            known = ", ".join(sorted(self.models)) or "(none)"
            raise PricingError(f"no price for model {model_id!r}; known models: {known}") from None

    @classmethod
    def default(cls) -> "PriceTable":
        blended = ModelPrice(BLENDED_USD_PER_1K, BLENDED_USD_PER_1K)
        return cls(models={"mock": blended, "gpt-5": blended})

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PriceTable":
        """Parse ``{model_id: {"prompt_per_1k": x, "completion_per_1k": y}, "_energy": {...}}``."""
        models = {}
        energy = data.get("_energy", {})
        try:
            for model_id, raw in data.items():
                if model_id == "_energy":
                    continue
                models[model_id] = ModelPrice(float(raw["prompt_per_1k"]), float(raw["completion_per_1k"]))
            return cls(
                models=models,
                kwh_per_1k_tokens=float(energy.get("kwh_per_1k_tokens", DEFAULT_KWH_PER_1K_TOKENS)),
                kwh_per_call=float(energy.get("kwh_per_call", DEFAULT_KWH_PER_CALL)),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise FormatError(f"malformed price table: {exc}") from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "PriceTable":
        text = Path(path).read_text(encoding="utf-8")
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid price table", line=exc.lineno, column=exc.colno) from exc


def account(ledger: UsageLedger, response: ChatResponse, prices: PriceTable) -> UsageLedger:
    """Return ``ledger`` plus one chat call's tokens, cost and energy."""
    price = prices.price(response.model_id)
    cost = (
        response.prompt_tokens / 1000 * price.usd_per_1k_prompt
        + response.completion_tokens / 1000 * price.usd_per_1k_completion
    )
    energy = response.total_tokens / 1000 * prices.kwh_per_1k_tokens + prices.kwh_per_call
    return UsageLedger(
        prompt_tokens=ledger.prompt_tokens + response.prompt_tokens,
        completion_tokens=ledger.completion_tokens + response.completion_tokens,
        llm_calls=ledger.llm_calls + 1,
        embed_calls=ledger.embed_calls,
        cost_usd=ledger.cost_usd + cost,
        energy_kwh=ledger.energy_kwh + energy,
    )


@dataclass
class LLMClient:
    """A backend paired with the price table used to account for its calls."""

    backend: ChatBackend
    prices: PriceTable = field(default_factory=PriceTable.default)

    def chat(self, messages: Sequence[ChatMessage]) -> ChatResponse:
        return self.backend.chat(messages)

    def account(self, ledger: UsageLedger, response: ChatResponse) -> UsageLedger:
        return account(ledger, response, self.prices)
