"""Deterministic stand-in for a faithful model, used as the default mock reply.

It reads the shipped prompt formats (the ``TASK:`` header line) and answers
with lexical evidence checks, so offline runs give sensible verdicts rather
than canned ones. It is a test double, not a model.
"""

from __future__ import annotations

import re
from typing import Sequence

from ..index import tokenize
from ..llm import ChatMessage, last_user_message

_TASK = re.compile(r"^TASK:\s*(\S+)", re.MULTILINE)

ROUTE_KEYWORDS = (
    (("validate", "check", "compliance", "complian"), "validate"),
    (("compare", "rank"), "compare"),
    (("generate", "draft", "write"), "generate"),
    (("knowledge", "ingest", "kb "), "kb_maintain"),
)


def _field(prompt: str, name: str) -> str:
    m = re.search(rf"^{re.escape(name)}:[ \t]*(.*)$", prompt, re.MULTILINE)
    return m.group(1).strip() if m else ""


def _after(prompt: str, marker: str) -> str:
    _, _, rest = prompt.partition(marker)
    return rest


def phrase_support(phrases: Sequence[str], requirement: str, text: str) -> tuple[bool, list[str]]:
    """Yes when at least half the evidence phrases occur (all their words) in ``text``."""
    vocab = set(tokenize(text))
    phrases = [p for p in phrases if tokenize(p)]
    if not phrases:
        words = set(tokenize(requirement))
        return bool(words) and len(words & vocab) * 2 >= len(words), []
    found = [p for p in phrases if set(tokenize(p)) <= vocab]
    return len(found) * 2 >= len(phrases), found


class HeuristicResponder:
    def __call__(self, messages: Sequence[ChatMessage]) -> str | None:
        prompt = last_user_message(messages)
        m = _TASK.search(prompt)
        if not m:
            return None
        task = m.group(1)
        if task == "route-request":
            return self.route(_field(prompt, "Request"))
        if task == "judge-item":
            return self.judge(prompt)
        if task == "validate-report":
            return self.validate(prompt)
        if task == "draft-section":
            return self.draft(prompt)
        if task == "agent-overhead":
            return "OK"
        return None

    @staticmethod
    def route(request: str) -> str:
        lowered = request.lower() + " "
        for keys, intent in ROUTE_KEYWORDS:
            if any(k in lowered for k in keys):
                return intent
        return "unknown"

    @staticmethod
    def judge(prompt: str) -> str:
        phrases = [p.strip() for p in _field(prompt, "Evidence phrases").split(";")]
        excerpts = _after(prompt, "Retrieved report excerpts:")
        ok, found = phrase_support(phrases, _field(prompt, "Requirement"), excerpts)
        if ok:
            return f"Yes - excerpts mention {', '.join(found) or 'the requirement'}"
        return "No - the excerpts do not cover this requirement"

    @staticmethod
    def validate(prompt: str) -> str:
        block = _after(prompt, "CHECKLIST (item_id | requirement | evidence phrases):")
        block, _, report = block.partition("\nREPORT:\n")
        lines = []
        for row in block.strip().splitlines():
            parts = [p.strip() for p in row.split("|")]
            if len(parts) != 3:
                continue
            item_id, requirement, phrases = parts
            ok, _ = phrase_support(phrases.split(";"), requirement, report)
            lines.append(f"{item_id}: {'Yes' if ok else 'No'}")
        return "\n".join(lines)

    @staticmethod
    def draft(prompt: str) -> str:
        requirement = _field(prompt, "Requirement")
        data = _after(prompt, "Company data:").split("\n\nWrite the disclosure", 1)[0].strip()
        return f"{requirement} {data}"
