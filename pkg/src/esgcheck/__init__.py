"""Checklist-based ESG report validation, comparison and drafting."""

from __future__ import annotations

from .core import (
    ChecklistItem,
    Dimension,
    EngineKind,
    GroundTruthAnnotation,
    ItemVerdict,
    Label,
    StandardChecklist,
    StandardId,
    UsageLedger,
    ValidationResult,
    compute_score,
    load_annotation,
    load_checklist,
    missing_items,
)
from .index import LexicalEmbedder, VectorIndex
from .ingest import Chunk, ReportDocument, chunk, load_document
from .kb import KnowledgeBase
from .llm import LLMClient, MockBackend, PriceTable, RemoteBackend

__version__ = "0.1.0"

__all__ = [
    "ChecklistItem",
    "Chunk",
    "Dimension",
    "EngineKind",
    "GroundTruthAnnotation",
    "ItemVerdict",
    "KnowledgeBase",
    "LLMClient",
    "Label",
    "LexicalEmbedder",
    "MockBackend",
    "PriceTable",
    "RemoteBackend",
    "ReportDocument",
    "StandardChecklist",
    "StandardId",
    "UsageLedger",
    "ValidationResult",
    "VectorIndex",
    "chunk",
    "compute_score",
    "load_annotation",
    "load_checklist",
    "load_document",
    "missing_items",
]
