"""Supervisor agent: classify a request's intent and dispatch to a task agent."""

from __future__ import annotations

import enum
import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from ..core import ZERO_LEDGER, UsageLedger
from ..errors import BackendError, RoutingError
from ..llm import LLMClient, system, user
from .prompts import default_prompts, render, template

logger = logging.getLogger(__name__)


class Intent(str, enum.Enum):
    VALIDATE = "validate"
    COMPARE = "compare"
    GENERATE = "generate"
    KB_MAINTAIN = "kb_maintain"


# checked in this order when the classifier reply is unusable
FALLBACK_KEYWORDS = (
    ("validate", Intent.VALIDATE),
    ("compare", Intent.COMPARE),
    ("generate", Intent.GENERATE),
    ("knowledge", Intent.KB_MAINTAIN),
)

DEFAULT_AGENTS = {
    Intent.VALIDATE: "validation_agent",
    Intent.COMPARE: "comparison_agent",
    Intent.GENERATE: "generation_agent",
    Intent.KB_MAINTAIN: "kb_agent",
}


@dataclass(frozen=True)
class AgentRoute:
    intent: Intent
    target_agent: str
    via_fallback: bool = False


@dataclass(frozen=True)
class AgentRegistry:
    agents: Mapping[Intent, str] = field(default_factory=lambda: dict(DEFAULT_AGENTS))

    def __post_init__(self) -> None:
        if not self.agents:
            raise RoutingError("agent registry is empty")

    def target(self, intent: Intent) -> str:
        try:
            return self.agents[intent]
        except KeyError:
            raise RoutingError(f"no agent registered for intent {intent.value!r}") from None


def _keyword_intent(request: str) -> Intent | None:
    lowered = request.lower()
    for keyword, intent in FALLBACK_KEYWORDS:
        if keyword in lowered:
            return intent
    return None


def route(
    user_request: str,
    registry: AgentRegistry,
    llm: LLMClient,
    prompts: Mapping[str, str] | None = None,
) -> tuple[AgentRoute, UsageLedger]:
    """Classify ``user_request`` with one chat call, falling back to keywords.

    Returns the route and the ledger for the classification call.
    """
    prompts = prompts or default_prompts()
    messages = [
        system(template(prompts, "system").strip()),
        user(render(template(prompts, "route"), request=user_request)),
    ]
    usage = ZERO_LEDGER
    reply = ""
    try:
        response = llm.chat(messages)
    except BackendError as exc:
        logger.warning("routing call failed (%s); using keyword fallback", exc)
    else:
        usage = llm.account(usage, response)
        reply = response.content.strip().lower()
    try:
        return AgentRoute(Intent(reply), registry.target(Intent(reply))), usage
    except ValueError:
        pass
    intent = _keyword_intent(user_request)
    if intent is None:
        raise RoutingError(
            f"could not tell what {user_request!r} asks for; please say whether to "
            "validate, compare, generate a report, or maintain the knowledge base"
        )
    logger.info("classifier reply %r unusable; keyword fallback chose %s", reply, intent.value)
    return AgentRoute(intent, registry.target(intent), via_fallback=True), usage


@dataclass(frozen=True)
class Dispatch:
    route: AgentRoute
    result: Any
    usage: UsageLedger


class Supervisor:
    """Routes each request to the handler registered for its agent name.

    Handlers are plain callables taking the request payload as keyword
    arguments. The supervisor's own routing calls are tallied in ``ledger``.
    """

    def __init__(
        self,
        llm: LLMClient,
        handlers: Mapping[str, Callable[..., Any]],
        registry: AgentRegistry | None = None,
        prompts: Mapping[str, str] | None = None,
    ):
        self.llm = llm
        self.registry = registry or AgentRegistry()
        missing = [name for name in self.registry.agents.values() if name not in handlers]
        if missing:
            raise RoutingError(f"registered agents without handlers: {missing}")
        self.handlers = dict(handlers)
        self.prompts = prompts
        self._lock = threading.Lock()
        self.ledger = ZERO_LEDGER
        self.history: list[AgentRoute] = []

    def handle(self, request: str, **payload: Any) -> Dispatch:
        decision, usage = route(request, self.registry, self.llm, self.prompts)
        with self._lock:
            self.ledger = self.ledger + usage
            self.history.append(decision)
        result = self.handlers[decision.target_agent](**payload)
        return Dispatch(decision, result, usage)
