"""The single-model, single-agent and multi-agent validation engines.

Each engine returns a ``ValidationResult`` with exactly one verdict per
checklist item; the compliance score is always the share of Yes verdicts.
"""

from __future__ import annotations

import dataclasses
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ..core import (
    ZERO_LEDGER,
    EngineKind,
    Evidence,
    ItemVerdict,
    Label,
    StandardChecklist,
    UsageLedger,
    ValidationResult,
)
from ..errors import BackendError, EngineOutputError, InvalidInputError, RoutingError, RunError
from ..index import Embedder, LexicalEmbedder, SearchHit, VectorIndex
from ..ingest import DEFAULT_CHUNK_OVERLAP, DEFAULT_CHUNK_SIZE, ReportDocument, chunk
from ..llm import ChatMessage, ChatResponse, LLMClient, system, user
from .prompts import default_prompts, render, template
from .supervisor import AgentRegistry, Intent, route

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.35
DEFAULT_TOP_K = 5
DEFAULT_PROMPT_BUDGET = 400_000  # characters of report text in the single-model prompt


@dataclass(frozen=True)
class EngineConfig:
    engine: EngineKind = EngineKind.SINGLE_AGENT
    similarity_threshold: float = DEFAULT_THRESHOLD
    top_k: int = DEFAULT_TOP_K
    prompts: Mapping[str, str] = field(default_factory=default_prompts)
    chunk_size: int = DEFAULT_CHUNK_SIZE
    chunk_overlap: int = DEFAULT_CHUNK_OVERLAP
    prompt_budget_chars: int = DEFAULT_PROMPT_BUDGET
    # chat calls the single-agent engine spends on request handling; off by default
    overhead_calls: int = 0
    jobs: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.similarity_threshold < 1.0:
            raise InvalidInputError(f"similarity_threshold must be in (0, 1), got {self.similarity_threshold}")
        if self.top_k < 1:
            raise InvalidInputError(f"top_k must be >= 1, got {self.top_k}")
        if self.jobs < 1:
            raise InvalidInputError("jobs must be >= 1")
        if self.overhead_calls < 0:
            raise InvalidInputError("overhead_calls must be >= 0")


def _messages(prompts: Mapping[str, str], name: str, **values: object) -> list[ChatMessage]:
    return [
        system(template(prompts, "system").strip()),
        user(render(template(prompts, name), **values)),
    ]


def _chat(llm: LLMClient, messages: Sequence[ChatMessage]) -> ChatResponse:
    try:
        return llm.chat(messages)
    except BackendError as exc:
        raise RunError(f"LLM call failed: {exc}") from exc


def build_report_index(
    report: ReportDocument,
    embedder: Embedder,
    size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_CHUNK_OVERLAP,
) -> tuple[VectorIndex, int]:
    """Chunk and embed a report into a temporary index; returns (index, embed calls)."""
    index = VectorIndex(embedder.dim, "temporary")
    calls = 0
    for piece in chunk(report, size, overlap):
        try:
            vector = embedder.embed(piece.text)
        except BackendError as exc:
            raise RunError(f"embedding failed for {piece.chunk_id}: {exc}") from exc
        calls += 1
        if not vector.searchable:
            logger.debug("chunk %s has no tokens; not indexed", piece.chunk_id)
            continue
        index.add(piece.chunk_id, vector, piece.text)
    return index, calls


# --- single model -----------------------------------------------------------

_VERDICT_LINE = re.compile(r"^[\s*\-•>#`]*([A-Za-z0-9][\w.\-]*)\s*[:=|]\s*\**\s*(yes|no)\b", re.IGNORECASE)


def checklist_block(checklist: StandardChecklist) -> str:
    return "\n".join(
        f"{item.item_id} | {item.requirement_text} | {'; '.join(item.keywords)}" for item in checklist.items
    )


def parse_verdict_lines(reply: str, item_ids: Sequence[str]) -> dict[str, tuple[Label, str]]:
    """Parse ``item_id: Yes|No`` lines; first line per item wins, unknown ids are ignored."""
    known = set(item_ids)
    found: dict[str, tuple[Label, str]] = {}
    for line in reply.splitlines():
        m = _VERDICT_LINE.match(line)
        if not m or m.group(1) not in known or m.group(1) in found:
            continue
        found[m.group(1)] = (Label.parse(m.group(2)), line.strip())
    return found


def validate_single_model(
    report: ReportDocument,
    checklist: StandardChecklist,
    llm: LLMClient,
    config: EngineConfig | None = None,
) -> ValidationResult:
    config = config or EngineConfig(engine=EngineKind.SINGLE_MODEL)
    warnings: list[str] = []
    text = report.text
    if len(text) > config.prompt_budget_chars:
        warnings.append(
            f"report text truncated from {len(text)} to {config.prompt_budget_chars} characters"
        )
        text = text[: config.prompt_budget_chars]
    messages = _messages(
        config.prompts,
        "single_model",
        standard=checklist.standard.code,
        checklist_block=checklist_block(checklist),
        report_text=text,
    )
    response = _chat(llm, messages)
    usage = llm.account(ZERO_LEDGER, response)
    parsed = parse_verdict_lines(response.content, checklist.item_ids)
    if not parsed:
        raise EngineOutputError(
            f"single-model reply for {report.report_id} has no parseable 'item_id: Yes|No' lines"
        )
    verdicts = []
    for item in checklist.items:
        if item.item_id in parsed:
            label, line = parsed[item.item_id]
            verdicts.append(ItemVerdict(item.item_id, label, 1.0, (Evidence(rationale=line),)))
        else:
            verdicts.append(
                ItemVerdict(item.item_id, Label.NO, 0.0, notes=("parse warning: no verdict line; defaulted to No",))
            )
    missing = len(checklist) - len(parsed)
    if missing:
        warnings.append(f"{missing} checklist items missing from model reply; defaulted to No")
    return ValidationResult.build(
        report.report_id, checklist, verdicts, usage, EngineKind.SINGLE_MODEL, warnings
    )


# --- single agent -----------------------------------------------------------


def _all_no(checklist: StandardChecklist, note: str) -> list[ItemVerdict]:
    return [ItemVerdict(item.item_id, Label.NO, 0.0, notes=(note,)) for item in checklist.items]


def validate_single_agent(
    report: ReportDocument,
    checklist: StandardChecklist,
    index: VectorIndex,
    config: EngineConfig | None = None,
    *,
    embedder: Embedder | None = None,
    llm: LLMClient | None = None,
) -> ValidationResult:
    """Label each item Yes when its best-matching chunk reaches the threshold."""
    config = config or EngineConfig()
    embedder = embedder or LexicalEmbedder(index.dim)
    usage = ZERO_LEDGER
    warnings: list[str] = []
    if len(index) == 0:
        warnings.append(f"index for {report.report_id} is empty; every item marked No")
        verdicts = _all_no(checklist, "empty index")
    else:
        verdicts = []
        for item in checklist.items:
            try:
                query = embedder.embed(item.query_text)
            except BackendError as exc:
                raise RunError(f"embedding failed for item {item.item_id}: {exc}") from exc
            usage = usage + UsageLedger(embed_calls=1)
            if not query.searchable:
                verdicts.append(ItemVerdict(item.item_id, Label.NO, 0.0, notes=("query has no tokens",)))
                continue
            hits = index.search(query, config.top_k)
            best = hits[0].similarity
            evidence = tuple(
                Evidence(h.chunk_id, h.similarity) for h in hits if h.similarity >= config.similarity_threshold
            )
            label = Label.YES if best >= config.similarity_threshold else Label.NO
            verdicts.append(ItemVerdict(item.item_id, label, min(max(best, 0.0), 1.0), evidence))
    if config.overhead_calls:
        if llm is None:
            raise InvalidInputError("overhead_calls needs a chat backend")
        for _ in range(config.overhead_calls):
            messages = _messages(
                config.prompts, "agent_overhead", report_id=report.report_id, standard=checklist.standard.code
            )
            usage = llm.account(usage, _chat(llm, messages))
    return ValidationResult.build(
        report.report_id, checklist, verdicts, usage, EngineKind.SINGLE_AGENT, warnings
    )


# --- multi agent ------------------------------------------------------------

_JUDGMENT = re.compile(r"^[\s*_#>\"'`\-]*(yes|no)\b[\s*_\"'`]*[-\u2014\u2013:.,;]?\s*(.*)$", re.IGNORECASE)


def parse_judgment(reply: str) -> tuple[Label, str] | None:
    """Read ``Yes|No - rationale`` from the first non-empty line, else None."""
    for line in reply.splitlines():
        if line.strip():
            m = _JUDGMENT.match(line.strip())
            if not m:
                return None
            return Label.parse(m.group(1)), m.group(2).strip()
    return None


def format_evidence(hits: Sequence[SearchHit]) -> str:
    return "\n\n".join(f"[{h.chunk_id}] (similarity {h.similarity:.3f})\n{h.text.strip()}" for h in hits)


@dataclass
class _ItemOutcome:
    verdict: ItemVerdict
    responses: list[ChatResponse]
    embed_calls: int


def _judge_item(item, index, embedder, llm, config) -> _ItemOutcome:
    query = embedder.embed(item.query_text)
    if not query.searchable:
        return _ItemOutcome(ItemVerdict(item.item_id, Label.NO, 0.0, notes=("query has no tokens",)), [], 1)
    hits = index.search(query, config.top_k)
    values = dict(
        item_id=item.item_id,
        requirement=item.requirement_text,
        keywords="; ".join(item.keywords),
        evidence=format_evidence(hits),
    )
    responses: list[ChatResponse] = []
    notes: list[str] = []
    for attempt, name in enumerate(("judge_item", "judge_item_strict")):
        try:
            response = llm.chat(_messages(config.prompts, name, **values))
        except BackendError as exc:
            notes.append(f"chat failed on attempt {attempt + 1}: {exc}")
            continue
        responses.append(response)
        judged = parse_judgment(response.content)
        if judged is None:
            notes.append(f"unparseable reply on attempt {attempt + 1}")
            continue
        label, rationale = judged
        evidence: tuple[Evidence, ...] = ()
        if label is Label.YES:
            evidence = tuple(Evidence(h.chunk_id, h.similarity) for h in hits) + (Evidence(rationale=rationale),)
        confidence = 1.0 if attempt == 0 else 0.75
        return _ItemOutcome(ItemVerdict(item.item_id, label, confidence, evidence, tuple(notes)), responses, 1)
    notes.append("defaulted to No after retry")
    return _ItemOutcome(ItemVerdict(item.item_id, Label.NO, 0.0, notes=tuple(notes)), responses, 1)


def validate_multi_agent(
    report: ReportDocument,
    checklist: StandardChecklist,
    index: VectorIndex,
    llm: LLMClient,
    config: EngineConfig | None = None,
    *,
    embedder: Embedder | None = None,
    registry: AgentRegistry | None = None,
) -> ValidationResult:
    """Supervisor routes to the validation agent, which judges each item with one chat call.

    Item judgments may run on ``config.jobs`` threads; ledger accounting runs
    afterwards in checklist order. With a scripted mock whose entries match
    any request, keep ``jobs=1`` so the script is consumed in a fixed order.
    """
    config = config or EngineConfig(engine=EngineKind.MULTI_AGENT)
    embedder = embedder or LexicalEmbedder(index.dim)
    request = f"validate report {report.report_id} against the {checklist.standard.code} checklist"
    decision, usage = route(request, registry or AgentRegistry(), llm, config.prompts)
    if decision.intent is not Intent.VALIDATE:
        raise RoutingError(f"supervisor routed a validation request to {decision.target_agent}")
    warnings: list[str] = []
    if len(index) == 0:
        warnings.append(f"index for {report.report_id} is empty; every item marked No")
        return ValidationResult.build(
            report.report_id, checklist, _all_no(checklist, "empty index"), usage, EngineKind.MULTI_AGENT, warnings
        )

    def judge(item):
        try:
            return _judge_item(item, index, embedder, llm, config)
        except BackendError as exc:
            raise RunError(f"embedding failed for item {item.item_id}: {exc}") from exc

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(judge, checklist.items))
    else:
        outcomes = [judge(item) for item in checklist.items]
    for outcome in outcomes:
        usage = usage + UsageLedger(embed_calls=outcome.embed_calls)
        for response in outcome.responses:
            usage = llm.account(usage, response)
        if any(n.startswith("defaulted") for n in outcome.verdict.notes):
            warnings.append(f"{outcome.verdict.item_id}: no usable judgment, defaulted to No")
    return ValidationResult.build(
        report.report_id, checklist, [o.verdict for o in outcomes], usage, EngineKind.MULTI_AGENT, warnings
    )


# --- facade -----------------------------------------------------------------


class Validator:
    """Runs the configured engine end to end, building the temporary index when needed."""

    def __init__(
        self,
        config: EngineConfig | None = None,
        llm: LLMClient | None = None,
        embedder: Embedder | None = None,
    ):
        self.config = config or EngineConfig()
        self.llm = llm
        self.embedder = embedder or LexicalEmbedder()
        if self.config.engine is not EngineKind.SINGLE_AGENT and llm is None:
            raise InvalidInputError(f"{self.config.engine.cli_name} engine needs a chat backend")

    def validate(self, report: ReportDocument, checklist: StandardChecklist) -> ValidationResult:
        if self.config.engine is EngineKind.SINGLE_MODEL:
            return validate_single_model(report, checklist, self.llm, self.config)
        index, calls = build_report_index(
            report, self.embedder, self.config.chunk_size, self.config.chunk_overlap
        )
        if self.config.engine is EngineKind.SINGLE_AGENT:
            result = validate_single_agent(
                report, checklist, index, self.config, embedder=self.embedder, llm=self.llm
            )
        else:
            result = validate_multi_agent(report, checklist, index, self.llm, self.config, embedder=self.embedder)
        return dataclasses.replace(result, usage=result.usage + UsageLedger(embed_calls=calls))
