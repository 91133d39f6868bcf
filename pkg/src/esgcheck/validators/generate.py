"""Draft a standard-aligned report from per-item company data."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping

from ..core import ZERO_LEDGER, StandardChecklist, UsageLedger
from ..errors import BackendError
from ..llm import LLMClient, system, user
from .prompts import default_prompts, render, template

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratedReport:
    draft: str
    sections: tuple[tuple[str, str], ...]
    open_questions: tuple[tuple[str, str], ...]
    usage: UsageLedger
    failed_items: tuple[str, ...] = ()


def open_question(item_id: str, requirement: str) -> str:
    return f"Please provide the information needed for {item_id}: {requirement}"


def generate_report(
    esg_data: Mapping[str, str],
    checklist: StandardChecklist,
    llm: LLMClient,
    prompts: Mapping[str, str] | None = None,
    title: str | None = None,
) -> GeneratedReport:
    """One drafting call per item with data; a question for every item without.

    Blank strings count as missing data. A failed call leaves a
    ``[GENERATION FAILED: item_id]`` placeholder section.
    """
    prompts = prompts or default_prompts()
    unknown = sorted(set(esg_data) - set(checklist.item_ids))
    if unknown:
        logger.warning("ignoring data for items not in the %s checklist: %s", checklist.standard, unknown)
    usage = ZERO_LEDGER
    sections: list[tuple[str, str]] = []
    questions: list[tuple[str, str]] = []
    failed: list[str] = []
    for item in checklist.items:
        data = (esg_data.get(item.item_id) or "").strip()
        if not data:
            questions.append((item.item_id, open_question(item.item_id, item.requirement_text)))
            continue
        messages = [
            system(template(prompts, "system").strip()),
            user(
                render(
                    template(prompts, "draft_section"),
                    item_id=item.item_id,
                    requirement=item.requirement_text,
                    data=data,
                )
            ),
        ]
        try:
            response = llm.chat(messages)
        except BackendError as exc:
            logger.warning("drafting %s failed: %s", item.item_id, exc)
            failed.append(item.item_id)
            body = f"[GENERATION FAILED: {item.item_id}]"
        else:
            usage = llm.account(usage, response)
            body = response.content.strip()
        sections.append((item.item_id, f"## {item.item_id}: {item.requirement_text}\n\n{body}\n"))
    heading = title or f"# Sustainability report draft ({checklist.standard.code} {checklist.version})"
    draft = heading + "\n\n" + "\n".join(text for _, text in sections)
    return GeneratedReport(draft, tuple(sections), tuple(questions), usage, tuple(failed))
