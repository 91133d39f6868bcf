"""Score-level MAE against ground truth, plus cost and energy reporting."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .core import (
    GroundTruthAnnotation,
    Label,
    StandardChecklist,
    StandardId,
    UsageLedger,
    ValidationResult,
    sum_ledgers,
)
from .errors import ConsistencyError, InvalidInputError

logger = logging.getLogger(__name__)

DETAIL_COLUMNS = ("engine", "dataset", "report_id", "predicted", "truth", "abs_error", "item_agreement")
AGGREGATE_ID = "__aggregate__"


def truth_score(annotation: GroundTruthAnnotation, checklist: StandardChecklist) -> float:
    annotation.check_against(checklist)
    yes = sum(1 for item_id in checklist.item_ids if annotation.item_labels[item_id] is Label.YES)
    return yes / len(checklist)


def item_agreement(result: ValidationResult, annotation: GroundTruthAnnotation) -> float:
    agree = sum(1 for v in result.verdicts if annotation.item_labels.get(v.item_id) is v.label)
    return agree / len(result.verdicts)


@dataclass(frozen=True)
class ReportEval:
    report_id: str
    predicted_score: float
    truth_score: float
    abs_error: float
    item_agreement: float


@dataclass(frozen=True)
class EvalRun:
    engine: str
    dataset: str
    per_report: tuple[ReportEval, ...]
    aggregate_mae: float
    ledger: UsageLedger
    skipped: tuple[str, ...] = ()

    @property
    def mean_agreement(self) -> float:
        return sum(r.item_agreement for r in self.per_report) / len(self.per_report)


def evaluate(
    results: Sequence[ValidationResult],
    annotations: Mapping[str, GroundTruthAnnotation],
    checklists: Mapping[StandardId, StandardChecklist],
    *,
    engine: str | None = None,
    dataset: str = "default",
) -> EvalRun:
    """Compare each result's score with its annotation's truth score.

    Reports without an annotation are skipped with a warning and left out of
    the mean. Ledgers of the evaluated reports are summed.
    """
    rows: list[ReportEval] = []
    ledgers: list[UsageLedger] = []
    skipped: list[str] = []
    for result in results:
        annotation = annotations.get(result.report_id)
        if annotation is None:
            logger.warning("no annotation for %s; excluded from MAE", result.report_id)
            skipped.append(result.report_id)
            continue
        checklist = checklists.get(result.standard)
        if checklist is None:
            raise ConsistencyError(f"no checklist for {result.standard} to score {result.report_id}")
        truth = truth_score(annotation, checklist)
        rows.append(
            ReportEval(
                report_id=result.report_id,
                predicted_score=result.compliance_score,
                truth_score=truth,
                abs_error=abs(result.compliance_score - truth),
                item_agreement=item_agreement(result, annotation),
            )
        )
        ledgers.append(result.usage)
    if not rows:
        raise InvalidInputError(f"dataset {dataset!r} has no annotated results to evaluate")
    engine_name = engine or results[0].engine.cli_name
    mae = sum(r.abs_error for r in rows) / len(rows)
    return EvalRun(engine_name, dataset, tuple(rows), mae, sum_ledgers(ledgers), tuple(skipped))


def _percent(x: float) -> str:
    return f"{x * 100:.2f}%"


@dataclass(frozen=True)
class Table:
    text: str
    csv: str


def _group(runs: Sequence[EvalRun]) -> tuple[list[str], list[str], dict[tuple[str, str], EvalRun]]:
    engines: list[str] = []
    datasets: list[str] = []
    cells: dict[tuple[str, str], EvalRun] = {}
    for run in runs:
        if run.engine not in engines:
            engines.append(run.engine)
        if run.dataset not in datasets:
            datasets.append(run.dataset)
        if (run.engine, run.dataset) in cells:
            raise InvalidInputError(f"duplicate run for engine {run.engine} on {run.dataset}")
        cells[(run.engine, run.dataset)] = run
    return engines, datasets, cells


def report_table(runs: Sequence[EvalRun]) -> Table:
    """One row per engine: MAE per dataset, then tokens, LLM calls, cost and energy.

    Cost columns sum the engine's ledgers over all of its datasets.
    """
    if not runs:
        raise InvalidInputError("report_table needs at least one run")
    engines, datasets, cells = _group(runs)
    header = ["engine", *(f"mae:{d}" for d in datasets), "tokens", "llm_calls", "cost_usd", "energy_kwh"]
    text_rows = [header]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for engine in engines:
        ledger = sum_ledgers(cells[(engine, d)].ledger for d in datasets if (engine, d) in cells)
        maes = [cells[(engine, d)].aggregate_mae if (engine, d) in cells else None for d in datasets]
        writer.writerow(
            [engine, *("" if m is None else repr(m) for m in maes), ledger.total_tokens, ledger.llm_calls,
             repr(ledger.cost_usd), repr(ledger.energy_kwh)]
        )
        text_rows.append(
            [engine, *("-" if m is None else _percent(m) for m in maes), f"{ledger.total_tokens:,}",
             str(ledger.llm_calls), f"${ledger.cost_usd:.2f}", f"{ledger.energy_kwh:.3f}"]
        )
    widths = [max(len(row[i]) for row in text_rows) for i in range(len(header))]
    lines = []
    for n, row in enumerate(text_rows):
        cells_text = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells_text).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return Table("\n".join(lines) + "\n", buf.getvalue())


def detail_csv(runs: Iterable[EvalRun]) -> str:
    """Per-report rows plus one aggregate row per (engine, dataset), full precision."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DETAIL_COLUMNS)
    for run in runs:
        for r in run.per_report:
            writer.writerow(
                [run.engine, run.dataset, r.report_id, repr(r.predicted_score), repr(r.truth_score),
                 repr(r.abs_error), repr(r.item_agreement)]
            )
        n = len(run.per_report)
        writer.writerow(
            [run.engine, run.dataset, AGGREGATE_ID,
             repr(sum(r.predicted_score for r in run.per_report) / n),
             repr(sum(r.truth_score for r in run.per_report) / n),
             repr(run.aggregate_mae), repr(run.mean_agreement)]
        )
    return buf.getvalue()


def parse_detail_csv(text: str) -> list[dict[str, object]]:
    rows = []
    for raw in csv.DictReader(io.StringIO(text)):
        row: dict[str, object] = dict(raw)
        for key in ("predicted", "truth", "abs_error", "item_agreement"):
            row[key] = float(raw[key])
        rows.append(row)
    return rows
