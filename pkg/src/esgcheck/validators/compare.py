"""Rank several reports by compliance score against one checklist."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from ..core import StandardChecklist, ValidationResult
from ..errors import EsgError, InvalidInputError, RunError
from ..ingest import ReportDocument
from .engines import Validator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankedReport:
    rank: int
    report_id: str
    score: float
    result: ValidationResult


@dataclass(frozen=True)
class Comparison:
    ranking: tuple[RankedReport, ...]
    excluded: tuple[tuple[str, str], ...] = ()

    def rows(self) -> list[tuple[int, str, float]]:
        return [(r.rank, r.report_id, r.score) for r in self.ranking]


def compare_reports(
    reports: Sequence[ReportDocument],
    checklist: StandardChecklist,
    validator: Validator,
) -> Comparison:
    """Validate every report, then sort by score descending and report_id ascending.

    A report whose run fails is excluded and listed in ``excluded``.
    """
    if len(reports) < 2:
        raise InvalidInputError("comparison needs at least two reports")
    ids = [r.report_id for r in reports]
    if len(set(ids)) != len(ids):
        raise InvalidInputError(f"duplicate report ids in comparison: {ids}")
    results: list[ValidationResult] = []
    excluded: list[tuple[str, str]] = []
    for report in sorted(reports, key=lambda r: r.report_id):
        try:
            results.append(validator.validate(report, checklist))
        except EsgError as exc:
            logger.warning("excluding %s from comparison: %s", report.report_id, exc)
            excluded.append((report.report_id, str(exc)))
    if not results:
        raise RunError("every report failed validation; nothing to rank")
    results.sort(key=lambda r: (-r.compliance_score, r.report_id))
    ranking = tuple(
        RankedReport(rank, r.report_id, r.compliance_score, r) for rank, r in enumerate(results, start=1)
    )
    return Comparison(ranking, tuple(excluded))
