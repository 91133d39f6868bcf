"""Command-line entry point: validate, compare, generate, kb, eval.

Exit codes: 0 success, 2 run error, 64 usage, 65 data format, 66 not found.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence, TextIO

from .core import EngineKind, StandardChecklist, StandardId, load_annotation, load_checklist
from .errors import (
    EsgError,
    FormatError,
    InvalidInputError,
    NotFoundError,
)
from .evaluation import detail_csv, evaluate, report_table
from .index import LexicalEmbedder
from .ingest import ReportDocument, load_document
from .kb import KnowledgeBase
from .llm import LLMClient, MockBackend, PriceTable, RemoteBackend, load_mock_script
from .validators import (
    EngineConfig,
    HeuristicResponder,
    Validator,
    compare_reports,
    generate_report,
    load_prompts,
)

EXIT_OK = 0
EXIT_RUN = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_NOT_FOUND = 66

logger = logging.getLogger("esgcheck")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit 2, which is our run-error code
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--kb-root", default="kb", help="knowledge-base directory (default: ./kb)")
    p.add_argument("--engine", default="single-agent", help="single-model | single-agent | multi-agent")
    p.add_argument("--backend", default="mock", choices=("mock", "remote"))
    p.add_argument("--threshold", type=float, default=None, help="similarity threshold in (0, 1)")
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--prices", type=Path, default=None, help="price table JSON")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--mock-script", type=Path, default=None, help="JSON list of {match, reply}")
    p.add_argument("--prompts", type=Path, default=None, help="directory of prompt template overrides")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _standard_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--standard", help="gri | sasb | tcfd | custom code registered in the kb")
    g.add_argument("--checklist", type=Path, help="checklist JSON file")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="esgcheck", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", parents=[common], help="score reports against a standard")
    p.add_argument("reports", nargs="+", type=Path)
    _standard_args(p)

    p = sub.add_parser("compare", parents=[common], help="rank reports by compliance score")
    p.add_argument("reports", nargs="+", type=Path)
    _standard_args(p)

    p = sub.add_parser("generate", parents=[common], help="draft a report from item data")
    p.add_argument("data", type=Path, help="JSON map item_id -> text")
    p.add_argument("--out", type=Path, default=Path("draft.md"))
    p.add_argument("--interactive", action="store_true", help="ask for missing information on the terminal")
    _standard_args(p)

    p = sub.add_parser("kb", help="knowledge-base maintenance")
    kb_sub = p.add_subparsers(dest="kb_command", required=True, parser_class=_Parser)
    q = kb_sub.add_parser("add", parents=[common])
    q.add_argument("path", type=Path)
    q.add_argument("--id", dest="doc_id", required=True)
    q.add_argument("--as-checklist", action="store_true", help="register the file as a standard checklist")
    q = kb_sub.add_parser("remove", parents=[common])
    q.add_argument("doc_id")
    kb_sub.add_parser("list", parents=[common])

    p = sub.add_parser("eval", parents=[common], help="MAE, cost and energy over an annotated dataset")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="write the CSV here instead of stdout")
    p.add_argument("--table", action="store_true", help="also print the summary table on stderr")
    return parser


# --- configuration ---------------------------------------------------------


def _engines(raw: str) -> list[EngineKind]:
    try:
        return [EngineKind.parse(part) for part in raw.split(",") if part.strip()]
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None


def _check_flags(args: argparse.Namespace) -> None:
    """Flag validation that must happen before any file is touched."""
    if getattr(args, "engine", None):
        engines = _engines(args.engine)
        if args.command != "eval" and len(engines) != 1:
            raise UsageError("--engine takes a single engine here")
    if args.threshold is not None and not 0.0 < args.threshold < 1.0:
        raise UsageError("--threshold must be strictly between 0 and 1")
    if args.top_k is not None and args.top_k < 1:
        raise UsageError("--top-k must be >= 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if args.backend == "remote":
        if args.mock_script is not None:
            raise UsageError("--mock-script only applies to --backend mock")
        missing = [k for k in ("ESG_LLM_API_KEY", "ESG_LLM_BASE_URL", "ESG_LLM_MODEL") if not os.environ.get(k)]
        if missing:
            raise UsageError(f"--backend remote needs environment variables {', '.join(missing)}")
    if args.command in ("validate", "compare", "generate") and not (args.standard or args.checklist):
        raise UsageError("one of --standard or --checklist is required")
    if args.command == "compare" and len(args.reports) < 2:
        raise UsageError("compare needs at least two reports")
    for name in ("prices", "mock_script", "checklist"):
        path = getattr(args, name, None)
        if path is not None and not path.is_file():
            raise UsageError(f"--{name.replace('_', '-')} file not found: {path}")


def _llm(args: argparse.Namespace) -> LLMClient:
    prices = PriceTable.from_file(args.prices) if args.prices else PriceTable.default()
    if args.backend == "remote":
        backend = RemoteBackend.from_env()
    else:
        script = load_mock_script(args.mock_script) if args.mock_script else []
        backend = MockBackend(script, responder=HeuristicResponder())
    return LLMClient(backend, prices)


def _config(args: argparse.Namespace, engine: EngineKind) -> EngineConfig:
    kwargs = {"engine": engine, "prompts": load_prompts(args.prompts), "jobs": args.jobs}
    if args.threshold is not None:
        kwargs["similarity_threshold"] = args.threshold
    if args.top_k is not None:
        kwargs["top_k"] = args.top_k
    return EngineConfig(**kwargs)


def bundled_checklist(standard: StandardId) -> StandardChecklist | None:
    path = resources.files("esgcheck") / "data" / "checklists" / f"{standard.slug}.json"
    if not path.is_file():
        return None
    return StandardChecklist.from_dict(json.loads(path.read_text(encoding="utf-8")))


def resolve_checklist(args: argparse.Namespace) -> StandardChecklist:
    if args.checklist is not None:
        return load_checklist(args.checklist)
    try:
        standard = StandardId.parse(args.standard)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    kb_file = Path(args.kb_root) / "checklists" / f"{standard.slug}.json"
    if kb_file.is_file():
        return load_checklist(kb_file)
    checklist = bundled_checklist(standard)
    if checklist is None:
        raise UsageError(f"no checklist for standard {standard}: register one with 'kb add --as-checklist'")
    return checklist


def _report_ids(paths: Sequence[Path]) -> list[str]:
    ids = [p.stem for p in paths]
    if len(set(ids)) != len(ids):
        raise UsageError(f"report file names must be unique (ids come from file stems): {ids}")
    return ids


def _load_reports(paths: Sequence[Path]) -> list[ReportDocument]:
    ids = _report_ids(paths)
    for path in paths:
        if not path.is_file():
            raise NotFoundError(f"report not found: {path}")
    return [load_document(p, rid) for p, rid in zip(paths, ids)]


def _dump(obj: object, out: TextIO) -> None:
    out.write(json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


def _usage_line(usage) -> str:
    return (
        f"Usage: tokens={usage.total_tokens} (prompt={usage.prompt_tokens}, completion={usage.completion_tokens})"
        f" llm_calls={usage.llm_calls} embed_calls={usage.embed_calls}"
        f" cost_usd={usage.cost_usd:.4f} energy_kwh={usage.energy_kwh:.6f}"
    )


# --- commands --------------------------------------------------------------


def cmd_validate(args: argparse.Namespace, out: TextIO) -> int:
    checklist = resolve_checklist(args)
    (engine,) = _engines(args.engine)
    reports = _load_reports(args.reports)
    llm = _llm(args) if engine is not EngineKind.SINGLE_AGENT else None
    validator = Validator(_config(args, engine), llm, LexicalEmbedder())
    results = [validator.validate(r, checklist) for r in reports]
    if args.json:
        payload = [r.to_dict() for r in results]
        _dump(payload[0] if len(payload) == 1 else payload, out)
        return EXIT_OK
    for n, result in enumerate(results):
        if n:
            out.write("\n")
        out.write(f"Report: {result.report_id}  Standard: {checklist.standard} {checklist.version}"
                  f"  Engine: {result.engine.cli_name}\n")
        out.write(f"Compliance: {result.compliance_score * 100:.2f}%\n")
        out.write(f"Missing items ({len(result.missing_items)}):\n")
        for item_id in result.missing_items:
            out.write(f"  - {item_id}: {checklist.item(item_id).requirement_text}\n")
        out.write(_usage_line(result.usage) + "\n")
        for warning in result.warnings:
            out.write(f"Warning: {warning}\n")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, out: TextIO) -> int:
    checklist = resolve_checklist(args)
    (engine,) = _engines(args.engine)
    reports = _load_reports(args.reports)
    llm = _llm(args) if engine is not EngineKind.SINGLE_AGENT else None
    comparison = compare_reports(reports, checklist, Validator(_config(args, engine), llm, LexicalEmbedder()))
    if args.json:
        _dump(
            {
                "ranking": [
                    {"rank": r.rank, "report_id": r.report_id, "score": r.score, "result": r.result.to_dict()}
                    for r in comparison.ranking
                ],
                "excluded": [{"report_id": rid, "error": err} for rid, err in comparison.excluded],
            },
            out,
        )
        return EXIT_OK
    width = max(len("report_id"), *(len(r.report_id) for r in comparison.ranking))
    out.write(f"{'rank':>4}  {'report_id':<{width}}  {'score':>7}\n")
    for r in comparison.ranking:
        out.write(f"{r.rank:>4}  {r.report_id:<{width}}  {r.score * 100:>6.2f}%\n")
    for rid, err in comparison.excluded:
        out.write(f"excluded {rid}: {err}\n")
    return EXIT_OK


def _read_data(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise NotFoundError(f"data file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    if not isinstance(data, dict) or not all(isinstance(k, str) and isinstance(v, str) for k, v in data.items()):
        raise FormatError(f"{path}: expected a JSON object mapping item ids to text", line=1, column=1)
    return data


def cmd_generate(args: argparse.Namespace, out: TextIO, stdin: TextIO) -> int:
    checklist = resolve_checklist(args)
    data = _read_data(args.data)
    llm = _llm(args)
    prompts = load_prompts(args.prompts)
    generated = generate_report(data, checklist, llm, prompts)
    usage = generated.usage
    while args.interactive and generated.open_questions:
        answered = 0
        quit_requested = False
        for item_id, question in generated.open_questions:
            out.write(f"{question}\n> ")
            out.flush()
            line = stdin.readline()
            if not line or line.strip().lower() in ("q", "quit"):
                quit_requested = True
                break
            if line.strip():
                data[item_id] = line.strip()
                answered += 1
        if answered:
            generated = generate_report(data, checklist, llm, prompts)
            usage = usage + generated.usage
        if quit_requested or not answered:
            break
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(generated.draft, encoding="utf-8")
    if args.json:
        _dump(
            {
                "draft_path": str(args.out),
                "sections": [item_id for item_id, _ in generated.sections],
                "open_questions": [{"item_id": i, "question": q} for i, q in generated.open_questions],
                "failed_items": list(generated.failed_items),
                "usage": usage.to_dict(),
            },
            out,
        )
        return EXIT_OK
    out.write(f"Draft written to {args.out} ({len(generated.sections)} sections)\n")
    out.write(f"Open questions ({len(generated.open_questions)}):\n")
    for item_id, question in generated.open_questions:
        out.write(f"  - {question}\n")
    out.write(_usage_line(usage) + "\n")
    return EXIT_OK


def cmd_kb(args: argparse.Namespace, out: TextIO) -> int:
    kb = KnowledgeBase(args.kb_root, LexicalEmbedder())
    if args.kb_command == "add":
        if not args.path.is_file():
            raise NotFoundError(f"file not found: {args.path}")
        if args.as_checklist:
            checklist = load_checklist(args.path)
            path = kb.register_checklist(checklist)
            out.write(f"Registered {checklist.standard} checklist ({len(checklist)} items) at {path}\n")
            return EXIT_OK
        entry = kb.add(args.path, args.doc_id)
        if args.json:
            _dump(entry.to_dict(), out)
        else:
            out.write(f"Added {entry.doc_id} from {entry.source}: {entry.chunks} chunks\n")
    elif args.kb_command == "remove":
        kb.remove(args.doc_id)
        if not args.json:
            out.write(f"Removed {args.doc_id}\n")
    else:
        entries = kb.list()
        if args.json:
            _dump({"documents": [e.to_dict() for e in entries]}, out)
        else:
            for e in entries:
                out.write(f"{e.doc_id}\t{e.source}\t{e.ingested_at}\t{e.chunks}\n")
    return EXIT_OK


def _read_manifest(path: Path) -> list[dict[str, str]]:
    if not path.is_file():
        raise NotFoundError(f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    entries = data.get("entries") if isinstance(data, dict) else None
    if not isinstance(entries, list) or not entries:
        raise FormatError(f"{path}: expected {{\"entries\": [...]}} with at least one entry")
    for n, entry in enumerate(entries):
        if not isinstance(entry, dict) or not all(isinstance(entry.get(k), str) for k in ("report", "annotation")):
            raise FormatError(f"{path}: entries[{n}] needs 'report' and 'annotation' paths")
    return entries


def cmd_eval(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    engines = _engines(args.engine)
    entries = _read_manifest(args.manifest)
    base = args.manifest.parent
    datasets: dict[str, list[tuple[ReportDocument, object]]] = {}
    checklists = {}
    for entry in entries:
        annotation = load_annotation(base / entry["annotation"])
        report_path = base / entry["report"]
        if not report_path.is_file():
            raise NotFoundError(f"report not found: {report_path}")
        report = load_document(report_path, annotation.report_id)
        if annotation.standard not in checklists:
            kb_file = Path(args.kb_root) / "checklists" / f"{annotation.standard.slug}.json"
            checklist = load_checklist(kb_file) if kb_file.is_file() else bundled_checklist(annotation.standard)
            if checklist is None:
                raise NotFoundError(f"no checklist for standard {annotation.standard}")
            checklists[annotation.standard] = checklist
        dataset = entry.get("dataset") or annotation.standard.code
        datasets.setdefault(dataset, []).append((report, annotation))
    runs = []
    for engine in engines:
        llm = _llm(args) if engine is not EngineKind.SINGLE_AGENT else None
        validator = Validator(_config(args, engine), llm, LexicalEmbedder())
        for name, pairs in datasets.items():
            results = [validator.validate(report, checklists[ann.standard]) for report, ann in pairs]
            annotations = {ann.report_id: ann for _, ann in pairs}
            runs.append(evaluate(results, annotations, checklists, engine=engine.cli_name, dataset=name))
    csv_text = detail_csv(runs)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(csv_text, encoding="utf-8")
    else:
        out.write(csv_text)
    if args.table:
        err.write(report_table(runs).text)
    return EXIT_OK


def main(
    argv: Sequence[str] | None = None,
    *,
    stdout: TextIO | None = None,
    stderr: TextIO | None = None,
    stdin: TextIO | None = None,
) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=err,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _check_flags(args)
        if args.command == "validate":
            return cmd_validate(args, out)
        if args.command == "compare":
            return cmd_compare(args, out)
        if args.command == "generate":
            return cmd_generate(args, out, stdin or sys.stdin)
        if args.command == "kb":
            return cmd_kb(args, out)
        return cmd_eval(args, out, err)
    except UsageError as exc:
        parser.print_usage(err)
        err.write(f"esgcheck: error: {exc}\n")
        return EXIT_USAGE
    except NotFoundError as exc:
        err.write(f"esgcheck: not found: {exc}\n")
        return EXIT_NOT_FOUND
    except FormatError as exc:
        err.write(f"esgcheck: data error: {exc}\n")
        return EXIT_DATA
    except FileNotFoundError as exc:
        err.write(f"esgcheck: not found: {exc.filename or exc}\n")
        return EXIT_NOT_FOUND
    except (EsgError, OSError) as exc:
        err.write(f"esgcheck: error: {exc}\n")
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
