"""Prompt templates with ``{{placeholder}}`` substitution."""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path
from typing import Mapping

from ..errors import InvalidInputError

_PLACEHOLDER = re.compile(r"\{\{\s*(\w+)\s*\}\}")

TEMPLATE_NAMES = (
    "system",
    "single_model",
    "judge_item",
    "judge_item_strict",
    "route",
    "draft_section",
    "agent_overhead",
)


def default_prompts() -> dict[str, str]:
    root = resources.files("esgcheck") / "prompts"
    return {name: (root / f"{name}.txt").read_text(encoding="utf-8") for name in TEMPLATE_NAMES}


def load_prompts(directory: str | Path | None = None) -> dict[str, str]:
    """Shipped templates, overridden by any ``<name>.txt`` found in ``directory``."""
    prompts = default_prompts()
    if directory is not None:
        for path in Path(directory).glob("*.txt"):
            prompts[path.stem] = path.read_text(encoding="utf-8")
    return prompts


def render(template: str, **values: object) -> str:
    def sub(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in values:
            raise InvalidInputError(f"prompt placeholder {{{{{name}}}}} has no value")
        return str(values[name])

    # single pass, so substituted report text is never re-scanned for placeholders
    return _PLACEHOLDER.sub(sub, template)


def placeholders(template: str) -> set[str]:
    return set(_PLACEHOLDER.findall(template))


def template(prompts: Mapping[str, str], name: str) -> str:
    try:
        return prompts[name]
    except KeyError:
        raise InvalidInputError(f"no prompt template named {name!r}") from None
