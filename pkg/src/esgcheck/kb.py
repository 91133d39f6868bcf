"""Permanent knowledge base of standards, regulations and checklists.

On-disk layout under the kb root::

    manifest.json              {"documents": [{"doc_id", "source", "ingested_at", "chunks"}]}
    index.json                 permanent VectorIndex
    checklists/<standard>.json

Every file is replaced atomically (temp file + rename). The manifest is the
commit point: ``add`` writes the index before the manifest and ``remove``
writes the manifest before the index, and loading drops index entries whose
document is not in the manifest. A write interrupted between the two renames
therefore loads as the state before the operation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from filelock import FileLock

from .core import StandardChecklist, StandardId, load_checklist
from .errors import ConflictError, InvalidInputError, NotFoundError, SchemaError
from .index import Embedder, LexicalEmbedder, SearchHit, VectorIndex, atomic_write_text
from .index import load as load_index
from .index import persist as persist_index
from .ingest import DEFAULT_CHUNK_OVERLAP, DEFAULT_CHUNK_SIZE, chunk, load_document

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
INDEX = "index.json"
CHECKLISTS = "checklists"
LOCK = ".lock"


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass(frozen=True)
class ManifestEntry:
    doc_id: str
    source: str
    ingested_at: str
    chunks: int

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "source": self.source, "ingested_at": self.ingested_at, "chunks": self.chunks}


def doc_of(chunk_id: str) -> str:
    return chunk_id.rsplit("#", 1)[0]


class KnowledgeBase:
    def __init__(
        self,
        root: str | Path,
        embedder: Embedder | None = None,
        *,
        clock: Callable[[], str] = utc_now,
    ):
        self.root = Path(root)
        self.embedder = embedder or LexicalEmbedder()
        self.clock = clock
        self.documents: list[ManifestEntry] = []
        self.index = VectorIndex(self.embedder.dim, "permanent")
        self.checklists: dict[StandardId, StandardChecklist] = {}
        self.reload()

    @property
    def lock(self) -> FileLock:
        self.root.mkdir(parents=True, exist_ok=True)
        return FileLock(str(self.root / LOCK), timeout=30)

    # --- loading ---------------------------------------------------------

    def reload(self) -> None:
        """Replace in-memory state with the last committed on-disk state."""
        self.documents = self._read_manifest()
        index_path = self.root / INDEX
        if index_path.exists():
            index = load_index(index_path)
            if index.kind != "permanent":
                raise SchemaError(f"{index_path}: expected a permanent index, found {index.kind}")
            if index.dim != self.embedder.dim:
                raise SchemaError(f"{index_path}: dim {index.dim} does not match embedder dim {self.embedder.dim}")
            known = {d.doc_id for d in self.documents}
            orphans = index.remove_where(lambda cid: doc_of(cid) not in known)
            if orphans:
                logger.warning("dropped %d uncommitted index entries in %s", orphans, self.root)
            self.index = index
        else:
            self.index = VectorIndex(self.embedder.dim, "permanent")
        counts: dict[str, int] = {}
        for cid in self.index.chunk_ids:
            counts[doc_of(cid)] = counts.get(doc_of(cid), 0) + 1
        for entry in self.documents:
            if counts.get(entry.doc_id, 0) != entry.chunks:
                raise SchemaError(
                    f"{self.root}: manifest lists {entry.chunks} chunks for {entry.doc_id}, "
                    f"index holds {counts.get(entry.doc_id, 0)}"
                )
        self.checklists = {}
        for path in sorted((self.root / CHECKLISTS).glob("*.json")):
            checklist = load_checklist(path)
            self.checklists[checklist.standard] = checklist

    def _read_manifest(self) -> list[ManifestEntry]:
        path = self.root / MANIFEST
        if not path.exists():
            return []
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            entries = [
                ManifestEntry(str(d["doc_id"]), str(d["source"]), str(d["ingested_at"]), int(d["chunks"]))
                for d in data["documents"]
            ]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: corrupt manifest: {exc}") from exc
        if len({e.doc_id for e in entries}) != len(entries):
            raise SchemaError(f"{path}: duplicate doc_id in manifest")
        return entries

    def _write_manifest(self, documents: list[ManifestEntry]) -> None:
        payload = {"documents": [d.to_dict() for d in documents]}
        atomic_write_text(self.root / MANIFEST, json.dumps(payload, indent=2, ensure_ascii=False) + "\n")

    # --- operations ------------------------------------------------------

    def list(self) -> list[ManifestEntry]:
        return sorted(self.documents, key=lambda d: (d.ingested_at, d.doc_id))

    def add(
        self,
        path: str | Path,
        doc_id: str,
        *,
        size: int = DEFAULT_CHUNK_SIZE,
        overlap: int = DEFAULT_CHUNK_OVERLAP,
    ) -> ManifestEntry:
        if not doc_id or "#" in doc_id:
            raise InvalidInputError(f"doc_id must be non-empty and free of '#': {doc_id!r}")
        with self.lock:
            self.reload()
            if any(d.doc_id == doc_id for d in self.documents):
                raise ConflictError(f"document {doc_id!r} is already in the knowledge base")
            document = load_document(path, doc_id)
            staged = VectorIndex(self.index.dim, "permanent", self.index.entries)
            count = 0
            for piece in chunk(document, size, overlap):
                vector = self.embedder.embed(piece.text)
                if vector.searchable:
                    staged.add(piece.chunk_id, vector, piece.text)
                    count += 1
            entry = ManifestEntry(doc_id, document.source_name, self.clock(), count)
            persist_index(staged, self.root / INDEX)
            self._write_manifest([*self.documents, entry])
            self.index = staged
            self.documents = [*self.documents, entry]
            return entry

    def remove(self, doc_id: str) -> None:
        with self.lock:
            self.reload()
            if not any(d.doc_id == doc_id for d in self.documents):
                raise NotFoundError(f"document {doc_id!r} is not in the knowledge base")
            remaining = [d for d in self.documents if d.doc_id != doc_id]
            staged = VectorIndex(self.index.dim, "permanent", self.index.entries)
            staged.remove_where(lambda cid: doc_of(cid) == doc_id)
            self._write_manifest(remaining)
            persist_index(staged, self.root / INDEX)
            self.documents = remaining
            self.index = staged

    def register_checklist(self, checklist: StandardChecklist) -> Path:
        with self.lock:
            path = self.root / CHECKLISTS / f"{checklist.standard.slug}.json"
            atomic_write_text(path, checklist.dumps())
            self.checklists[checklist.standard] = checklist
            return path

    def checklist(self, standard: StandardId) -> StandardChecklist:
        try:
            return self.checklists[standard]
        except KeyError:
            raise NotFoundError(f"no checklist registered for {standard}") from None

    def search(self, text: str, k: int = 5) -> list[SearchHit]:
        query = self.embedder.embed(text)
        if not query.searchable:
            raise InvalidInputError("query has no searchable tokens")
        return self.index.search(query, k)


def kb_add(path: str | Path, doc_id: str, kb: KnowledgeBase) -> ManifestEntry:
    return kb.add(path, doc_id)


def kb_remove(doc_id: str, kb: KnowledgeBase) -> None:
    kb.remove(doc_id)


def kb_list(kb: KnowledgeBase) -> list[ManifestEntry]:
    return kb.list()
