"""Domain types and the scoring arithmetic shared by every engine.

All types here are frozen dataclasses holding tuples, so they can be shared
between worker threads without copying.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import ConsistencyError, FormatError, InvalidInputError, SchemaError

KNOWN_STANDARDS = ("GRI", "SASB", "TCFD")
_CUSTOM_CODE = re.compile(r"^[a-z0-9]+(?:-[a-z0-9]+)*$")


@dataclass(frozen=True, order=True)
class StandardId:
    code: str

    def __post_init__(self) -> None:
        if not self.code:
            raise InvalidInputError("standard code must be non-empty")
        if self.code in KNOWN_STANDARDS:
            return
        if not _CUSTOM_CODE.match(self.code):
            raise InvalidInputError(
                f"custom standard code {self.code!r} must be lowercase alphanumeric with dashes"
            )

    @classmethod
    def parse(cls, raw: str) -> "StandardId":
        raw = raw.strip()
        if raw.upper() in KNOWN_STANDARDS:
            return cls(raw.upper())
        return cls(raw)

    @property
    def slug(self) -> str:
        """File-name form used for on-disk checklists."""
        return self.code.lower()

    def __str__(self) -> str:
        return self.code


class Dimension(str, enum.Enum):
    ENVIRONMENTAL = "environmental"
    SOCIAL = "social"
    GOVERNANCE = "governance"
    GENERAL = "general"


class Label(str, enum.Enum):
    YES = "Yes"
    NO = "No"

    @classmethod
    def parse(cls, raw: str) -> "Label":
        value = raw.strip().lower()
        if value == "yes":
            return cls.YES
        if value == "no":
            return cls.NO
        raise InvalidInputError(f"label must be yes/no, got {raw!r}")


class EngineKind(str, enum.Enum):
    SINGLE_MODEL = "single_model"
    SINGLE_AGENT = "single_agent"
    MULTI_AGENT = "multi_agent"

    @classmethod
    def parse(cls, raw: str) -> "EngineKind":
        try:
            return cls(raw.strip().lower().replace("-", "_"))
        except ValueError:
            choices = ", ".join(e.value.replace("_", "-") for e in cls)
            raise InvalidInputError(f"unknown engine {raw!r} (choose from {choices})") from None

    @property
    def cli_name(self) -> str:
        return self.value.replace("_", "-")


@dataclass(frozen=True)
class ChecklistItem:
    item_id: str
    dimension: Dimension
    requirement_text: str
    keywords: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.item_id:
            raise InvalidInputError("checklist item_id must be non-empty")
        if not self.requirement_text.strip():
            raise InvalidInputError(f"checklist item {self.item_id!r} has empty requirement text")

    @property
    def query_text(self) -> str:
        """Retrieval query: requirement plus evidence phrases."""
        return " ".join((self.requirement_text, *self.keywords))


@dataclass(frozen=True)
class StandardChecklist:
    standard: StandardId
    version: str
    items: tuple[ChecklistItem, ...]

    def __post_init__(self) -> None:
        if not self.items:
            raise InvalidInputError(f"checklist for {self.standard} has no items")
        seen: set[str] = set()
        for item in self.items:
            if item.item_id in seen:
                raise InvalidInputError(f"duplicate item_id {item.item_id!r} in {self.standard} checklist")
            seen.add(item.item_id)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(item.item_id for item in self.items)

    def item(self, item_id: str) -> ChecklistItem:
        for item in self.items:
            if item.item_id == item_id:
                return item
        raise KeyError(item_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "standard": self.standard.code,
            "version": self.version,
            "items": [
                {
                    "id": item.item_id,
                    "dimension": item.dimension.value,
                    "requirement": item.requirement_text,
                    "keywords": list(item.keywords),
                }
                for item in self.items
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "StandardChecklist":
        try:
            items = []
            for n, raw in enumerate(data["items"]):
                try:
                    items.append(
                        ChecklistItem(
                            item_id=str(raw["id"]),
                            dimension=Dimension(raw["dimension"]),
                            requirement_text=str(raw["requirement"]),
                            keywords=tuple(str(k) for k in raw.get("keywords", [])),
                        )
                    )
                except (KeyError, ValueError, TypeError) as exc:
                    raise SchemaError(f"checklist items[{n}]: {exc}") from exc
            return cls(
                standard=StandardId.parse(str(data["standard"])),
                version=str(data["version"]),
                items=tuple(items),
            )
        except KeyError as exc:
            raise SchemaError(f"checklist missing field {exc}") from exc
        except TypeError as exc:
            raise SchemaError(f"checklist malformed: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


@dataclass(frozen=True)
class Evidence:
    chunk_id: str | None = None
    similarity: float | None = None
    rationale: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"chunk_id": self.chunk_id, "similarity": self.similarity, "rationale": self.rationale}


@dataclass(frozen=True)
class ItemVerdict:
    item_id: str
    label: Label
    confidence: float = 1.0
    evidence: tuple[Evidence, ...] = ()
    notes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidInputError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def is_yes(self) -> bool:
        return self.label is Label.YES

    def to_dict(self) -> dict[str, Any]:
        return {
            "item_id": self.item_id,
            "label": self.label.value,
            "confidence": self.confidence,
            "evidence": [e.to_dict() for e in self.evidence],
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class UsageLedger:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    llm_calls: int = 0
    embed_calls: int = 0
    cost_usd: float = 0.0
    energy_kwh: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise InvalidInputError(f"ledger field {f.name} must be non-negative")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def __add__(self, other: "UsageLedger") -> "UsageLedger":
        return merge_ledgers(self, other)

    def to_dict(self) -> dict[str, Any]:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "total_tokens": self.total_tokens,
            "llm_calls": self.llm_calls,
            "embed_calls": self.embed_calls,
            "cost_usd": self.cost_usd,
            "energy_kwh": self.energy_kwh,
        }


ZERO_LEDGER = UsageLedger()


def merge_ledgers(a: UsageLedger, b: UsageLedger) -> UsageLedger:
    return UsageLedger(
        prompt_tokens=a.prompt_tokens + b.prompt_tokens,
        completion_tokens=a.completion_tokens + b.completion_tokens,
        llm_calls=a.llm_calls + b.llm_calls,
        embed_calls=a.embed_calls + b.embed_calls,
        cost_usd=a.cost_usd + b.cost_usd,
        energy_kwh=a.energy_kwh + b.energy_kwh,
    )


def sum_ledgers(ledgers: Iterable[UsageLedger]) -> UsageLedger:
    total = ZERO_LEDGER
    for ledger in ledgers:
        total = merge_ledgers(total, ledger)
    return total


def compute_score(verdicts: Sequence[ItemVerdict]) -> float:
    """Fraction of verdicts labelled Yes. Items carry equal weight."""
    if not verdicts:
        raise InvalidInputError("cannot score an empty verdict list")
    yes = sum(1 for v in verdicts if v.is_yes)
    # int / int is correctly rounded, i.e. the nearest double to the exact ratio
    return yes / len(verdicts)


def _check_coverage(verdicts: Sequence[ItemVerdict], checklist: StandardChecklist) -> None:
    got = [v.item_id for v in verdicts]
    want = list(checklist.item_ids)
    if sorted(got) != sorted(want) or len(set(got)) != len(got):
        missing = sorted(set(want) - set(got))
        extra = sorted(set(got) - set(want))
        raise ConsistencyError(
            f"verdicts do not match checklist {checklist.standard}: missing={missing} extra={extra}"
        )


def missing_items(verdicts: Sequence[ItemVerdict], checklist: StandardChecklist) -> list[str]:
    """Item ids labelled No, in checklist order."""
    _check_coverage(verdicts, checklist)
    no_ids = {v.item_id for v in verdicts if not v.is_yes}
    return [item_id for item_id in checklist.item_ids if item_id in no_ids]


@dataclass(frozen=True)
class ValidationResult:
    report_id: str
    standard: StandardId
    verdicts: tuple[ItemVerdict, ...]
    compliance_score: float
    missing_items: tuple[str, ...]
    usage: UsageLedger
    engine: EngineKind
    warnings: tuple[str, ...] = ()

    @classmethod
    def build(
        cls,
        report_id: str,
        checklist: StandardChecklist,
        verdicts: Iterable[ItemVerdict],
        usage: UsageLedger,
        engine: EngineKind,
        warnings: Iterable[str] = (),
    ) -> "ValidationResult":
        by_id = {v.item_id: v for v in verdicts}
        _check_coverage(list(by_id.values()), checklist)
        ordered = tuple(by_id[item_id] for item_id in checklist.item_ids)
        return cls(
            report_id=report_id,
            standard=checklist.standard,
            verdicts=ordered,
            compliance_score=compute_score(ordered),
            missing_items=tuple(missing_items(ordered, checklist)),
            usage=usage,
            engine=engine,
            warnings=tuple(warnings),
        )

    @property
    def yes_count(self) -> int:
        return sum(1 for v in self.verdicts if v.is_yes)

    def labels(self) -> dict[str, Label]:
        return {v.item_id: v.label for v in self.verdicts}

    def to_dict(self) -> dict[str, Any]:
        return {
            "report_id": self.report_id,
            "standard": self.standard.code,
            "engine": self.engine.value,
            "compliance_score": self.compliance_score,
            "missing_items": list(self.missing_items),
            "verdicts": [v.to_dict() for v in self.verdicts],
            "usage": self.usage.to_dict(),
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class GroundTruthAnnotation:
    report_id: str
    standard: StandardId
    item_labels: Mapping[str, Label] = field(default_factory=dict)

    def check_against(self, checklist: StandardChecklist) -> None:
        """Raise ConsistencyError unless there is exactly one label per checklist item."""
        if self.standard != checklist.standard:
            raise ConsistencyError(
                f"annotation for {self.report_id} targets {self.standard}, checklist is {checklist.standard}"
            )
        unknown = sorted(set(self.item_labels) - set(checklist.item_ids))
        absent = [i for i in checklist.item_ids if i not in self.item_labels]
        if unknown or absent:
            raise ConsistencyError(
                f"annotation for {self.report_id} incomplete: unlabelled={absent} unknown={unknown}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "report_id": self.report_id,
            "standard": self.standard.code,
            "labels": {k: v.value.lower() for k, v in self.item_labels.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GroundTruthAnnotation":
        try:
            labels = {str(k): Label.parse(str(v)) for k, v in data["labels"].items()}
            return cls(
                report_id=str(data["report_id"]),
                standard=StandardId.parse(str(data["standard"])),
                item_labels=labels,
            )
        except (KeyError, AttributeError, InvalidInputError) as exc:
            raise SchemaError(f"ground-truth annotation malformed: {exc}") from exc


def _read_json(path: Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from exc


def load_checklist(path: str | Path) -> StandardChecklist:
    return StandardChecklist.from_dict(_read_json(Path(path)))


def load_annotation(path: str | Path) -> GroundTruthAnnotation:
    return GroundTruthAnnotation.from_dict(_read_json(Path(path)))
