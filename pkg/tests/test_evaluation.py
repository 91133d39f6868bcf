from __future__ import annotations

import csv
import io

import pytest

from esgcheck.core import (
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
)
from esgcheck.errors import ConsistencyError, InvalidInputError
from esgcheck.evaluation import (
    AGGREGATE_ID,
    DETAIL_COLUMNS,
    detail_csv,
    evaluate,
    item_agreement,
    parse_detail_csv,
    report_table,
    truth_score,
)

GRI = StandardId.parse("gri")


def checklist(n: int) -> StandardChecklist:
    return StandardChecklist(GRI, "t", tuple(ChecklistItem(f"I{k}", Dimension.GENERAL, f"req {k}") for k in range(n)))


def labels(pattern: str) -> dict[str, Label]:
    return {f"I{k}": Label.YES if c == "Y" else Label.NO for k, c in enumerate(pattern)}


def annotation(report_id: str, pattern: str) -> GroundTruthAnnotation:
    return GroundTruthAnnotation(report_id, GRI, labels(pattern))


def result(report_id: str, pattern: str, usage: UsageLedger = UsageLedger(), engine=EngineKind.SINGLE_AGENT):
    verdicts = [ItemVerdict(i, lab) for i, lab in labels(pattern).items()]
    return ValidationResult.build(report_id, checklist(len(pattern)), verdicts, usage, engine)


def test_truth_score_examples(fixtures_dir, gri):
    from esgcheck.core import load_annotation

    a = load_annotation(fixtures_dir / "annotations" / "report-a.gri.json")
    b = load_annotation(fixtures_dir / "annotations" / "report-b.gri.json")
    assert truth_score(a, gri) == 1.0
    assert truth_score(b, gri) == 0.5
    assert truth_score(annotation("r", "YYNNNNN"), checklist(7)) == 2 / 7


def test_truth_score_requires_complete_annotation():
    with pytest.raises(ConsistencyError):
        truth_score(annotation("r", "YN"), checklist(3))


def test_evaluate_per_report_and_mae():
    cl = checklist(4)
    results = [result("a", "YYYY"), result("b", "YNNN")]
    anns = {"a": annotation("a", "YYYN"), "b": annotation("b", "YNNN")}
    run = evaluate(results, anns, {GRI: cl}, dataset="d")
    rows = {r.report_id: r for r in run.per_report}
    assert rows["a"].abs_error == pytest.approx(0.25)
    assert rows["a"].item_agreement == 0.75
    assert rows["b"].abs_error == 0.0 and rows["b"].item_agreement == 1.0
    assert run.aggregate_mae == pytest.approx(0.125)
    assert run.engine == "single-agent"


def test_agreement_one_implies_zero_error_but_not_conversely():
    cl = checklist(2)
    perfect = evaluate([result("a", "YN")], {"a": annotation("a", "YN")}, {GRI: cl})
    assert perfect.per_report[0].item_agreement == 1.0 and perfect.per_report[0].abs_error == 0.0
    # same score, opposite items: zero score error with zero item agreement
    swapped = evaluate([result("a", "NY")], {"a": annotation("a", "YN")}, {GRI: cl})
    assert swapped.per_report[0].abs_error == 0.0
    assert swapped.per_report[0].item_agreement == 0.0


def test_evaluate_skips_unannotated_reports(caplog):
    cl = checklist(2)
    run = evaluate([result("a", "YY"), result("x", "NN")], {"a": annotation("a", "YN")}, {GRI: cl})
    assert [r.report_id for r in run.per_report] == ["a"]
    assert run.skipped == ("x",)
    assert "x" in caplog.text
    with pytest.raises(InvalidInputError):
        evaluate([result("x", "NN")], {}, {GRI: cl})


def test_evaluate_sums_ledgers():
    cl = checklist(1)
    u1 = UsageLedger(prompt_tokens=10, llm_calls=1, cost_usd=0.1)
    u2 = UsageLedger(prompt_tokens=5, llm_calls=2, cost_usd=0.2)
    run = evaluate([result("a", "Y", u1), result("b", "N", u2)], {"a": annotation("a", "Y"), "b": annotation("b", "N")}, {GRI: cl})
    assert run.ledger.llm_calls == 3 and run.ledger.total_tokens == 15
    assert run.ledger.cost_usd == pytest.approx(0.3)


def test_item_agreement_direct():
    assert item_agreement(result("a", "YNY"), annotation("a", "YYY")) == pytest.approx(2 / 3)


def _runs():
    cl = checklist(2)
    anns = {"a": annotation("a", "YY"), "b": annotation("b", "YN")}
    runs = []
    for engine, patterns, usage in (
        ("single-model", ("YN", "YN"), UsageLedger(prompt_tokens=87_000, completion_tokens=541, llm_calls=1, cost_usd=0.87541, energy_kwh=0.175082)),
        ("single-agent", ("YY", "YN"), UsageLedger(embed_calls=4)),
    ):
        results = [result("a", patterns[0], usage), result("b", patterns[1])]
        runs.append(evaluate(results, anns, {GRI: cl}, engine=engine, dataset="synthetic"))
    return runs


def test_report_table():
    table = report_table(_runs())
    lines = table.text.splitlines()
    assert lines[0].split() == ["engine", "mae:synthetic", "tokens", "llm_calls", "cost_usd", "energy_kwh"]
    assert lines[2].split() == ["single-model", "25.00%", "87,541", "1", "$0.88", "0.175"]
    assert lines[3].split() == ["single-agent", "0.00%", "0", "0", "$0.00", "0.000"]
    rows = list(csv.DictReader(io.StringIO(table.csv)))
    assert float(rows[0]["mae:synthetic"]) == 0.25
    assert rows[0]["tokens"] == "87541"


def test_report_table_rejects_duplicates_and_empty():
    runs = _runs()
    with pytest.raises(InvalidInputError):
        report_table(runs + runs[:1])
    with pytest.raises(InvalidInputError):
        report_table([])


def test_detail_csv_roundtrip_and_aggregate_rows():
    text = detail_csv(_runs())
    assert text.splitlines()[0] == ",".join(DETAIL_COLUMNS)
    rows = parse_detail_csv(text)
    aggregates = [r for r in rows if r["report_id"] == AGGREGATE_ID]
    assert [r["engine"] for r in aggregates] == ["single-model", "single-agent"]
    assert aggregates[0]["abs_error"] == 0.25
    per_report = [r for r in rows if r["engine"] == "single-model" and r["report_id"] != AGGREGATE_ID]
    assert sum(r["abs_error"] for r in per_report) / 2 == aggregates[0]["abs_error"]
    assert all(0.0 <= r["abs_error"] <= 1.0 for r in rows)
