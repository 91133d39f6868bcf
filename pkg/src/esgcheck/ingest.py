"""Document loading, text normalization and byte-offset chunking.

Reports go to a temporary per-run index, while standards and regulations go
to the permanent knowledge base. Both use the loaders and chunker defined
here.
"""

from __future__ import annotations

import base64
import json
import logging
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol

from .errors import ExtractionError, FormatError, InvalidInputError, ParameterError

logger = logging.getLogger(__name__)

SUPPORTED_EXTENSIONS = (".txt", ".md", ".pdf")
DEFAULT_CHUNK_SIZE = 1200
DEFAULT_CHUNK_OVERLAP = 200
SNAP_WINDOW = 32

_WHITESPACE_BYTES = frozenset(b" \t\n\r\f\v")
_TRAILING_WS = re.compile(r"[^\S\n]+$", re.MULTILINE)
_EXCESS_BLANKS = re.compile(r"\n{4,}")


@dataclass(frozen=True)
class ReportDocument:
    report_id: str
    source_name: str
    text: str
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.report_id:
            raise InvalidInputError("report_id must be non-empty")
        if "\r" in self.text:
            raise InvalidInputError("document text must use LF newlines only")


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    start: int
    end: int
    text: str

    def to_dict(self) -> dict:
        return {"chunk_id": self.chunk_id, "start": self.start, "end": self.end, "text": self.text}


def normalize_text(text: str) -> str:
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = _TRAILING_WS.sub("", text)
    return _EXCESS_BLANKS.sub("\n\n\n", text)


class TextExtractor(Protocol):
    def extract(self, path: Path) -> str: ...


_PDF_STREAM = re.compile(rb"<<(.*?)>>\s*stream\r?\n(.*?)(?:\r?\n)?endstream", re.DOTALL)
_PDF_TOKEN = re.compile(
    rb"\((?:\\.|[^\\)])*\)"  # literal string (no nested parens)
    rb"|<[0-9A-Fa-f\s]*>"  # hex string
    rb"|\[|\]"
    rb"|[A-Za-z'\"*]+"  # operators
    rb"|[-+]?\d*\.?\d+",
    re.DOTALL,
)
_PDF_ESCAPES = {b"n": b"\n", b"r": b"\r", b"t": b"\t", b"b": b"\b", b"f": b"\f"}


def _pdf_literal(raw: bytes) -> bytes:
    body = raw[1:-1]
    out = bytearray()
    i = 0
    while i < len(body):
        c = body[i : i + 1]
        if c != b"\\":
            out += c
            i += 1
            continue
        nxt = body[i + 1 : i + 2]
        if nxt in _PDF_ESCAPES:
            out += _PDF_ESCAPES[nxt]
            i += 2
        elif nxt.isdigit():
            digits = re.match(rb"[0-7]{1,3}", body[i + 1 : i + 4]).group(0)
            out.append(int(digits, 8) & 0xFF)
            i += 1 + len(digits)
        elif nxt in (b"\n", b"\r"):
            i += 2
        else:
            out += nxt
            i += 2
    return bytes(out)


_PDF_FILTER = re.compile(rb"/Filter\s*(\[[^\]]*\]|/\w+)")


def _decode_stream(header: bytes, stream: bytes) -> bytes:
    """Apply the stream's filter chain; only ASCII85 and Flate are supported."""
    m = _PDF_FILTER.search(header)
    if not m:
        return stream
    for name in re.findall(rb"/(\w+)", m.group(1)):
        if name == b"FlateDecode":
            try:
                stream = zlib.decompress(stream)
            except zlib.error as exc:
                raise ValueError(f"inflate failed ({exc})") from None
        elif name == b"ASCII85Decode":
            body = stream.strip().removeprefix(b"<~").removesuffix(b"~>")
            try:
                stream = base64.a85decode(body, ignorechars=b" \t\r\n")
            except ValueError as exc:
                raise ValueError(f"ASCII85 decode failed ({exc})") from None
        else:
            raise ValueError(f"unsupported filter {name.decode('latin-1')}")
    return stream


class SimplePdfExtractor:
    """Text extraction for text-based PDFs with plain, Flate or ASCII85 streams.

    Reads the show-text operators (Tj, TJ, ', ") of every content stream and
    starts a new line on text positioning operators. Scanned pages have no
    text operators and fail with an ExtractionError, since OCR is a
    separate extractor.
    """

    def extract(self, path: Path) -> str:
        data = Path(path).read_bytes()
        if not data.startswith(b"%PDF"):
            raise ExtractionError(f"{path} is not a PDF", ["missing %PDF header"])
        diagnostics: list[str] = []
        pieces: list[str] = []
        for n, match in enumerate(_PDF_STREAM.finditer(data)):
            header, stream = match.group(1), match.group(2)
            try:
                stream = _decode_stream(header, stream)
            except ValueError as exc:
                diagnostics.append(f"stream {n}: {exc}")
                continue
            text = self._show_text(stream)
            if text:
                pieces.append(text)
        if not pieces:
            diagnostics.append("no text operators found (scanned PDF needs an OCR extractor)")
            raise ExtractionError(f"no extractable text in {path}", diagnostics)
        return "\n".join(pieces)

    @staticmethod
    def _show_text(stream: bytes) -> str:
        lines: list[str] = []
        current: list[str] = []
        in_text = False
        operands: list[bytes] = []
        for tok in _PDF_TOKEN.findall(stream):
            if tok.startswith(b"(") or tok.startswith(b"<") or tok in (b"[", b"]") or tok[:1] in b"+-.0123456789":
                operands.append(tok)
                continue
            op = tok
            if op == b"BT":
                in_text = True
            elif op == b"ET":
                in_text = False
                if current:
                    lines.append("".join(current))
                    current = []
            elif in_text and op in (b"Td", b"TD", b"T*", b"Tm", b"'", b'"') and current:
                lines.append("".join(current))
                current = []
            if in_text and op in (b"Tj", b"TJ", b"'", b'"'):
                for operand in operands:
                    if operand.startswith(b"("):
                        current.append(_pdf_literal(operand).decode("latin-1"))
                    elif operand.startswith(b"<"):
                        hexdigits = re.sub(rb"\s", b"", operand[1:-1])
                        current.append(bytes.fromhex(hexdigits.decode()).decode("latin-1"))
            operands = []
        if current:
            lines.append("".join(current))
        return "\n".join(lines)


def load_document(
    path: str | Path,
    report_id: str,
    *,
    extractor: TextExtractor | None = None,
    metadata: Mapping[str, str] | None = None,
) -> ReportDocument:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in SUPPORTED_EXTENSIONS:
        raise FormatError(f"unsupported file type {suffix or '(none)'} for {path.name}")
    if suffix == ".pdf":
        if not path.is_file():
            raise OSError(f"cannot read {path}")
        try:
            raw = (extractor or SimplePdfExtractor()).extract(path)
        except ExtractionError:
            raise
        except Exception as exc:
            raise ExtractionError(f"extractor failed on {path.name}", [repr(exc)]) from exc
    else:
        data = path.read_bytes()
        try:
            raw = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path.name} is not valid UTF-8 (byte {exc.start})") from exc
    text = normalize_text(raw)
    if not text.strip():
        logger.warning("document %s (%s) is empty", report_id, path.name)
    meta = {"extension": suffix}
    meta.update(metadata or {})
    return ReportDocument(report_id=report_id, source_name=path.name, text=text, metadata=meta)


def _char_start(data: bytes, pos: int) -> int:
    while pos < len(data) and (data[pos] & 0xC0) == 0x80:
        pos += 1
    return pos


def _snap(data: bytes, pos: int, lower: int) -> int:
    """Move ``pos`` back to just after a whitespace byte, staying above ``lower``."""
    floor = max(pos - SNAP_WINDOW, lower + 1)
    for p in range(pos, floor - 1, -1):
        if data[p - 1] in _WHITESPACE_BYTES:
            return p
    return _char_start(data, pos)


def chunk_spans(data: bytes, size: int, overlap: int) -> list[tuple[int, int]]:
    """Byte spans for ``chunk``; exposed for callers that already hold bytes."""
    if size <= 0:
        raise ParameterError(f"chunk size must be positive, got {size}")
    if overlap < 0 or size <= overlap:
        raise ParameterError(f"need size > overlap >= 0, got size={size} overlap={overlap}")
    n = len(data)
    stride = size - overlap
    raw = [(s, min(s + size, n)) for s in range(0, n, stride)]
    if not raw:
        return []
    # how many raw chunks can hold one byte; start k+m must not precede end k
    reach = -(-size // stride)

    starts: list[int] = []
    ends: list[int | None] = []
    raw_ends: list[int] = []
    for raw_start, raw_end in raw:
        if not starts:
            s = 0
        else:
            lower = starts[-1]
            back = len(starts) - reach
            if reach > 1 and back >= 0:
                lower = max(lower, ends[back] - 1)
            s = _snap(data, raw_start, lower)
            if s >= n or s <= starts[-1]:
                continue
            prev_start, prev_raw_end = starts[-1], raw_ends[-1]
            if prev_raw_end == raw_start:
                e = s
            elif prev_raw_end >= n:
                e = n
            else:
                e = max(_snap(data, prev_raw_end, max(prev_start, s - 1)), s)
            ends[-1] = e
        starts.append(s)
        ends.append(None)
        raw_ends.append(raw_end)
    ends[-1] = n
    return list(zip(starts, ends))


def chunk(
    document: ReportDocument,
    size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_CHUNK_OVERLAP,
) -> list[Chunk]:
    data = document.text.encode("utf-8")
    return [
        Chunk(
            chunk_id=f"{document.report_id}#{start}",
            start=start,
            end=end,
            text=data[start:end].decode("utf-8"),
        )
        for start, end in chunk_spans(data, size, overlap)
    ]


def dump_chunks(chunks: Iterable[Chunk]) -> str:
    """JSON-lines debug dump, one chunk per line."""
    return "".join(json.dumps(c.to_dict(), ensure_ascii=False) + "\n" for c in chunks)
