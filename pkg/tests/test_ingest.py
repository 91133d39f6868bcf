from __future__ import annotations

import json
import logging
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esgcheck.errors import ExtractionError, FormatError, InvalidInputError, ParameterError
from esgcheck.ingest import (
    SNAP_WINDOW,
    ReportDocument,
    SimplePdfExtractor,
    chunk,
    chunk_spans,
    dump_chunks,
    load_document,
    normalize_text,
)


def doc(text: str, report_id: str = "r") -> ReportDocument:
    return ReportDocument(report_id=report_id, source_name="r.txt", text=text)


# --- normalization and loading ---------------------------------------------


def test_normalize_text():
    raw = "Title  \r\nline two\t\rthree\n\n\n\n\n\nfour"
    assert normalize_text(raw) == "Title\nline two\nthree\n\n\nfour"


def test_document_requires_lf_text():
    with pytest.raises(InvalidInputError):
        doc("a\r\nb")
    with pytest.raises(InvalidInputError):
        ReportDocument(report_id="", source_name="x", text="")


def test_load_text_and_markdown(tmp_path):
    path = tmp_path / "report.md"
    path.write_bytes("﻿# Heading\r\nBody text   \r\n".encode("utf-8"))
    document = load_document(path, "rep", metadata={"year": "2024"})
    assert document.text == "# Heading\nBody text\n"
    assert document.source_name == "report.md"
    assert document.metadata == {"extension": ".md", "year": "2024"}


def test_load_rejects_unsupported_and_non_utf8(tmp_path):
    docx = tmp_path / "report.docx"
    docx.write_bytes(b"PK")
    with pytest.raises(FormatError, match="unsupported"):
        load_document(docx, "r")
    latin = tmp_path / "latin.txt"
    latin.write_bytes("caf\xe9".encode("latin-1"))
    with pytest.raises(FormatError, match="UTF-8"):
        load_document(latin, "r")


def test_empty_document_warns_and_has_no_chunks(tmp_path, caplog):
    path = tmp_path / "empty.txt"
    path.write_text("  \n\n", encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        document = load_document(path, "empty")
    assert "empty" in caplog.text
    assert document.text == "\n\n"
    assert chunk(doc("")) == []


def _write_pdf(path, lines, compress=True):
    from reportlab.pdfgen import canvas

    c = canvas.Canvas(str(path), pageCompression=1 if compress else 0)
    y = 800
    for line in lines:
        c.drawString(72, y, line)
        y -= 16
    c.showPage()
    c.save()


@pytest.mark.parametrize("compress", [True, False])
def test_pdf_text_extraction(tmp_path, compress):
    pytest.importorskip("reportlab")
    path = tmp_path / "report.pdf"
    lines = ["Scope 1 emissions: 1,200 tCO2e (GHG Protocol)", "Water withdrawal: 3.4 megalitres"]
    _write_pdf(path, lines, compress)
    document = load_document(path, "pdf")
    assert document.text.splitlines() == lines


def test_pdf_without_text_raises_with_diagnostics(tmp_path):
    pytest.importorskip("reportlab")
    from reportlab.pdfgen import canvas

    path = tmp_path / "scan.pdf"
    c = canvas.Canvas(str(path))
    c.rect(100, 100, 200, 200, fill=1)  # drawing only, like a scanned page without OCR
    c.showPage()
    c.save()
    with pytest.raises(ExtractionError) as info:
        load_document(path, "scan")
    assert any("OCR" in d for d in info.value.diagnostics)


def test_pdf_rejects_non_pdf(tmp_path):
    path = tmp_path / "fake.pdf"
    path.write_bytes(b"hello")
    with pytest.raises(ExtractionError):
        SimplePdfExtractor().extract(path)


def test_custom_extractor_failures_are_wrapped(tmp_path):
    path = tmp_path / "x.pdf"
    path.write_bytes(b"%PDF-1.4")

    class Broken:
        def extract(self, path):
            raise RuntimeError("boom")

    with pytest.raises(ExtractionError, match="extractor failed"):
        load_document(path, "x", extractor=Broken())


# --- chunking examples ------------------------------------------------------


def test_stride_arithmetic_without_snapping():
    data = b"x" * 1000
    assert chunk_spans(data, 400, 100) == [(0, 400), (300, 700), (600, 1000), (900, 1000)]


def test_short_document_is_one_chunk():
    assert chunk_spans(b"0123456789", 400, 100) == [(0, 10)]


def test_zero_overlap_partitions():
    assert chunk_spans(b"y" * 800, 400, 0) == [(0, 400), (400, 800)]


def test_empty_document_yields_no_chunks():
    assert chunk_spans(b"", 10, 2) == []


@pytest.mark.parametrize("size,overlap", [(0, 0), (10, 10), (10, 12), (10, -1)])
def test_bad_parameters(size, overlap):
    with pytest.raises(ParameterError):
        chunk_spans(b"abc", size, overlap)


def test_boundaries_snap_back_to_whitespace():
    text = "alpha beta gamma delta epsilon zeta eta theta"
    spans = chunk_spans(text.encode(), 20, 0)
    for start, _ in spans[1:]:
        assert text[start - 1] == " "
    assert "".join(text[s:e] for s, e in spans) == text


def test_snapping_never_reaches_past_window():
    text = "a " + "b" * 100
    spans = chunk_spans(text.encode(), 50, 0)
    # the only space is 48 bytes before the raw boundary at 50, outside the window
    assert spans[1][0] == 50


def test_multibyte_characters_are_never_split():
    text = "€" * 50  # 3 bytes each, no whitespace
    document = doc(text)
    pieces = chunk(document, 10, 4)
    for piece in pieces:
        assert piece.text == text.encode()[piece.start : piece.end].decode()
        assert piece.start % 3 == 0 and (piece.end % 3 == 0)


def test_chunk_ids_and_dump():
    pieces = chunk(doc("one two three four five six", "rep"), 10, 3)
    assert pieces[0].chunk_id == "rep#0"
    assert all(p.chunk_id == f"rep#{p.start}" for p in pieces)
    lines = dump_chunks(pieces).splitlines()
    assert [json.loads(line)["chunk_id"] for line in lines] == [p.chunk_id for p in pieces]
    assert set(json.loads(lines[0])) == {"chunk_id", "start", "end", "text"}


# --- properties ------------------------------------------------------------

texts = st.text(alphabet=st.sampled_from(list("abc xyz\n\t.é€😀")), max_size=1500)
params = st.integers(1, 300).flatmap(lambda size: st.tuples(st.just(size), st.integers(0, size - 1)))


@settings(max_examples=300, deadline=None)
@given(texts, params)
def test_chunk_properties(text, size_overlap):
    size, overlap = size_overlap
    data = text.encode("utf-8")
    spans = chunk_spans(data, size, overlap)
    assert spans == chunk_spans(data, size, overlap)
    if not data:
        assert spans == []
        return
    assert spans[0][0] == 0 and spans[-1][1] == len(data)
    counts = [0] * len(data)
    for n, (s, e) in enumerate(spans):
        assert 0 <= s < e <= len(data)
        if n:
            assert s > spans[n - 1][0]
            assert spans[n - 1][1] >= s  # no gap
        for i in range(s, e):
            counts[i] += 1
    assert min(counts) >= 1
    assert max(counts) <= math.ceil(size / (size - overlap))
    # chunks never start in the middle of a character
    for s, e in spans:
        data[s:e].decode("utf-8")


@settings(max_examples=200, deadline=None)
@given(texts, st.integers(1, 300))
def test_zero_overlap_reconstruction(text, size):
    pieces = chunk(doc(text), size, 0)
    assert "".join(p.text for p in pieces) == text


@settings(max_examples=100, deadline=None)
@given(st.binary(max_size=800), params)
def test_multiplicity_bound_on_arbitrary_bytes(data, size_overlap):
    size, overlap = size_overlap
    spans = chunk_spans(data, size, overlap)
    counts = [0] * len(data)
    for s, e in spans:
        for i in range(s, e):
            counts[i] += 1
    assert all(1 <= c <= math.ceil(size / (size - overlap)) for c in counts)


def test_snap_window_constant():
    assert SNAP_WINDOW == 32
