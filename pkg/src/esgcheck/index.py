"""Embeddings and an exact in-memory cosine index with JSON persistence."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Literal, Protocol, Sequence

import httpx
import numpy as np

from .errors import BackendError, InvalidInputError, SchemaError, TransportError

logger = logging.getLogger(__name__)

DEFAULT_DIM = 512
StoreKind = Literal["temporary", "permanent"]
_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True, eq=False)
class Embedding:
    values: np.ndarray
    searchable: bool = True

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise InvalidInputError("embedding must be a non-empty 1-d vector")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("embedding contains NaN or Inf")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def zeros(cls, dim: int) -> "Embedding":
        """The reserved embedding for text with no tokens; never searchable."""
        return cls(np.zeros(dim), searchable=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return self.searchable == other.searchable and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> Embedding: ...


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


class LexicalEmbedder:
    """Feature-hashed bag of words, L2-normalized.

    Pure function of the input text and ``dim``; no vocabulary, no state.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim <= 0:
            raise InvalidInputError("embedding dim must be positive")
        self.dim = dim

    def embed(self, text: str) -> Embedding:
        counts = np.zeros(self.dim)
        tokens = tokenize(text)
        if not tokens:
            return Embedding.zeros(self.dim)
        for token in tokens:
            counts[bucket(token, self.dim)] += 1.0
        return Embedding(counts / math.sqrt(float((counts * counts).sum())))


class RemoteEmbedder:
    """Embedding endpoint speaking the common ``/embeddings`` JSON shape."""

    def __init__(
        self,
        base_url: str,
        model: str,
        dim: int,
        api_key: str | None = None,
        *,
        client: httpx.Client | None = None,
        max_retries: int = 2,
        backoff: Sequence[float] = (1.0, 4.0),
        sleep: Callable[[float], None] = time.sleep,
        timeout: float = 30.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim
        self.max_retries = max_retries
        self.backoff = tuple(backoff)
        self._sleep = sleep
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = headers

    def embed(self, text: str) -> Embedding:
        if not text.strip():
            return Embedding.zeros(self.dim)
        attempt = 0
        while True:
            try:
                resp = self._client.post(
                    f"{self.base_url}/embeddings",
                    json={"model": self.model, "input": text},
                    headers=self._headers,
                )
            except httpx.TransportError as exc:
                error: BackendError = TransportError(f"embedding request failed: {exc}", retries=attempt)
            else:
                if resp.status_code == 200:
                    break
                error = BackendError(
                    f"embedding endpoint returned HTTP {resp.status_code}",
                    retries=attempt,
                    status=resp.status_code,
                )
                if resp.status_code != 429 and resp.status_code < 500:
                    raise error
            if attempt >= self.max_retries:
                raise error
            self._sleep(self.backoff[min(attempt, len(self.backoff) - 1)])
            attempt += 1
        try:
            vector = resp.json()["data"][0]["embedding"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed embedding response: {exc}", retries=attempt) from exc
        if len(vector) != self.dim:
            raise BackendError(f"embedding has dim {len(vector)}, expected {self.dim}", retries=attempt)
        return Embedding(np.asarray(vector, dtype=np.float64))


def _row_dots(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    # elementwise product + per-row reduction: no BLAS, so a row's value does not
    # depend on its position in the matrix
    return (matrix * query).sum(axis=1)


def cosine(a: Embedding, b: Embedding) -> float:
    if a.dim != b.dim:
        raise InvalidInputError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if not a.searchable or not b.searchable:
        raise InvalidInputError("cosine undefined for the reserved zero embedding")
    # rescale by the largest magnitude so tiny vectors do not underflow when squared
    sa, sb = float(np.abs(a.values).max()), float(np.abs(b.values).max())
    if sa == 0.0 or sb == 0.0:
        raise InvalidInputError("cosine undefined for a zero vector")
    va, vb = a.values / sa, b.values / sb
    na = math.sqrt(float((va * va).sum()))
    nb = math.sqrt(float((vb * vb).sum()))
    return float((va * vb).sum()) / (na * nb)


@dataclass(frozen=True)
class IndexEntry:
    chunk_id: str
    embedding: Embedding
    text: str


@dataclass(frozen=True)
class SearchHit:
    chunk_id: str
    similarity: float
    text: str


class VectorIndex:
    """Brute-force cosine index.

    Searches take a snapshot under the lock and score outside it, so many
    readers can run at once; mutations hold the lock.
    """

    def __init__(self, dim: int, kind: StoreKind = "temporary", entries: Iterable[IndexEntry] = ()):
        if dim <= 0:
            raise InvalidInputError("index dim must be positive")
        if kind not in ("temporary", "permanent"):
            raise InvalidInputError(f"unknown store kind {kind!r}")
        self.dim = dim
        self.kind: StoreKind = kind
        self._entries: list[IndexEntry] = []
        self._ids: set[str] = set()
        self._lock = threading.Lock()
        self._cache: tuple[np.ndarray, np.ndarray] | None = None
        for entry in entries:
            self.add(entry.chunk_id, entry.embedding, entry.text)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[IndexEntry, ...]:
        return tuple(self._entries)

    @property
    def chunk_ids(self) -> list[str]:
        return [e.chunk_id for e in self._entries]

    def add(self, chunk_id: str, embedding: Embedding, text: str) -> None:
        if embedding.dim != self.dim:
            raise InvalidInputError(f"embedding dim {embedding.dim} != index dim {self.dim}")
        if not embedding.searchable:
            raise InvalidInputError(f"chunk {chunk_id!r} has the reserved zero embedding")
        with self._lock:
            if chunk_id in self._ids:
                raise InvalidInputError(f"duplicate chunk_id {chunk_id!r}")
            self._entries.append(IndexEntry(chunk_id, embedding, text))
            self._ids.add(chunk_id)
            self._cache = None

    def remove_where(self, predicate: Callable[[str], bool]) -> int:
        with self._lock:
            keep = [e for e in self._entries if not predicate(e.chunk_id)]
            removed = len(self._entries) - len(keep)
            self._entries = keep
            self._ids = {e.chunk_id for e in keep}
            self._cache = None
        return removed

    def _snapshot(self) -> tuple[list[IndexEntry], np.ndarray, np.ndarray]:
        with self._lock:
            entries = list(self._entries)
            if self._cache is None and entries:
                matrix = np.stack([e.embedding.values for e in entries])
                norms = np.sqrt((matrix * matrix).sum(axis=1))
                self._cache = (matrix, norms)
            cache = self._cache
        if not entries:
            return entries, np.empty((0, self.dim)), np.empty(0)
        return entries, cache[0], cache[1]

    def similarities(self, query: Embedding) -> list[tuple[str, float]]:
        """Cosine of the query against every entry, in insertion order."""
        self._check_query(query)
        entries, matrix, norms = self._snapshot()
        if not entries:
            return []
        qnorm = math.sqrt(float((query.values * query.values).sum()))
        sims = _row_dots(matrix, query.values) / (norms * qnorm)
        return [(e.chunk_id, float(s)) for e, s in zip(entries, sims)]

    def _check_query(self, query: Embedding) -> None:
        if query.dim != self.dim:
            raise InvalidInputError(f"query dim {query.dim} != index dim {self.dim}")
        if not query.searchable:
            raise InvalidInputError("cannot search with the reserved zero embedding")

    def search(self, query: Embedding, k: int) -> list[SearchHit]:
        if k < 1:
            raise InvalidInputError(f"k must be >= 1, got {k}")
        self._check_query(query)
        entries, matrix, norms = self._snapshot()
        if not entries:
            logger.warning("search on empty %s index", self.kind)
            return []
        qnorm = math.sqrt(float((query.values * query.values).sum()))
        sims = _row_dots(matrix, query.values) / (norms * qnorm)
        order = sorted(range(len(entries)), key=lambda i: (-sims[i], entries[i].chunk_id))
        return [
            SearchHit(entries[i].chunk_id, float(sims[i]), entries[i].text)
            for i in order[:k]
        ]

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "kind": self.kind,
            "entries": [
                {"chunk_id": e.chunk_id, "vector": e.embedding.values.tolist(), "text": e.text}
                for e in self._entries
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VectorIndex":
        if not isinstance(data, dict):
            raise SchemaError("index file must hold a JSON object")
        dim, kind, raw_entries = data.get("dim"), data.get("kind"), data.get("entries")
        if not isinstance(dim, int) or isinstance(dim, bool) or dim <= 0:
            raise SchemaError(f"index field 'dim' must be a positive integer, got {dim!r}")
        if kind not in ("temporary", "permanent"):
            raise SchemaError(f"index field 'kind' must be temporary|permanent, got {kind!r}")
        if not isinstance(raw_entries, list):
            raise SchemaError("index field 'entries' must be a list")
        index = cls(dim, kind)
        for n, raw in enumerate(raw_entries):
            where = f"entries[{n}]"
            if not isinstance(raw, dict):
                raise SchemaError(f"{where}: not an object")
            chunk_id, vector, text = raw.get("chunk_id"), raw.get("vector"), raw.get("text")
            if not isinstance(chunk_id, str) or not chunk_id:
                raise SchemaError(f"{where}: missing chunk_id")
            where = f"{where} ({chunk_id})"
            if not isinstance(text, str):
                raise SchemaError(f"{where}: text must be a string")
            if not isinstance(vector, list) or len(vector) != dim:
                raise SchemaError(f"{where}: vector must be a list of {dim} numbers")
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in vector):
                raise SchemaError(f"{where}: vector holds non-numeric values")
            if not any(vector):
                raise SchemaError(f"{where}: zero vector is not searchable")
            try:
                index.add(chunk_id, Embedding(np.asarray(vector, dtype=np.float64)), text)
            except InvalidInputError as exc:
                raise SchemaError(f"{where}: {exc}") from exc
        return index


def atomic_write_text(path: Path, text: str) -> None:
    """Write ``text`` to a sibling temp file, fsync, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def persist(index: VectorIndex, path: str | Path) -> None:
    # json writes floats with repr(), which round-trips every double exactly
    atomic_write_text(Path(path), json.dumps(index.to_dict(), ensure_ascii=False))


def load(path: str | Path) -> VectorIndex:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: corrupt index file: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    return VectorIndex.from_dict(data)
