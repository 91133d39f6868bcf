from __future__ import annotations

import json
import threading
from datetime import datetime
from itertools import count

import pytest

from esgcheck.core import StandardId
from esgcheck.errors import ConflictError, FormatError, InvalidInputError, NotFoundError, SchemaError
from esgcheck.kb import KnowledgeBase, kb_add, kb_list, kb_remove


@pytest.fixture
def ticking_clock():
    ticks = count()
    return lambda: f"2026-01-01T00:00:{next(ticks):02d}.000000Z"


@pytest.fixture
def docs(tmp_path):
    folder = tmp_path / "docs"
    folder.mkdir()
    texts = {
        "alpha": "Alpha standard on groundwater aquifer recharge and wetland protection.",
        "beta": "Beta regulation covering boardroom gender parity and executive pay ratios.",
        "gamma": "Gamma guidance for shipping fuel sulphur limits and port emissions.",
    }
    paths = {}
    for name, text in texts.items():
        path = folder / f"{name}.txt"
        path.write_text(text + "\n", encoding="utf-8")
        paths[name] = path
    return paths


def test_empty_kb_lists_nothing(tmp_path):
    assert kb_list(KnowledgeBase(tmp_path / "kb")) == []


def test_add_standard_text(tmp_path, fixtures_dir):
    kb = KnowledgeBase(tmp_path / "kb")
    entry = kb_add(fixtures_dir / "standards" / "gri-subset.txt", "gri-2021", kb)
    assert entry.chunks > 0
    assert entry.source == "gri-subset.txt"
    assert kb.list() == [entry]
    assert len(kb.index) == entry.chunks
    # RFC 3339 UTC timestamp
    assert entry.ingested_at.endswith("Z")
    datetime.fromisoformat(entry.ingested_at.removesuffix("Z"))
    manifest = json.loads((tmp_path / "kb" / "manifest.json").read_text())
    assert manifest == {"documents": [entry.to_dict()]}


def test_duplicate_add_conflicts_and_leaves_kb_unchanged(tmp_path, docs):
    root = tmp_path / "kb"
    kb = KnowledgeBase(root)
    kb.add(docs["alpha"], "alpha")
    before = {p.name: p.read_bytes() for p in root.iterdir() if p.is_file()}
    with pytest.raises(ConflictError):
        kb.add(docs["beta"], "alpha")
    assert {p.name: p.read_bytes() for p in root.iterdir() if p.is_file()} == before


def test_query_unique_phrase_hits_its_document(tmp_path, docs):
    kb = KnowledgeBase(tmp_path / "kb")
    for name, path in docs.items():
        kb.add(path, name)
    assert kb.search("aquifer recharge", 1)[0].chunk_id.startswith("alpha#")
    assert kb.search("gender parity executive pay", 1)[0].chunk_id.startswith("beta#")
    assert kb.search("sulphur limits", 1)[0].chunk_id.startswith("gamma#")
    with pytest.raises(InvalidInputError):
        kb.search("...", 1)


def test_add_then_remove_restores_search(tmp_path, docs):
    kb = KnowledgeBase(tmp_path / "kb")
    kb.add(docs["alpha"], "alpha")
    before = kb.search("wetland protection aquifer", 5)
    kb.add(docs["beta"], "beta")
    kb_remove("beta", kb)
    assert kb.search("wetland protection aquifer", 5) == before
    assert KnowledgeBase(tmp_path / "kb").search("wetland protection aquifer", 5) == before


def test_remove_one_of_two_keeps_the_other(tmp_path, docs):
    kb = KnowledgeBase(tmp_path / "kb")
    kb.add(docs["alpha"], "alpha")
    kb.add(docs["beta"], "beta")
    kb.remove("alpha")
    reloaded = KnowledgeBase(tmp_path / "kb")
    assert [d.doc_id for d in reloaded.list()] == ["beta"]
    assert all(cid.startswith("beta#") for cid in reloaded.index.chunk_ids)
    assert reloaded.search("boardroom gender parity", 1)[0].chunk_id.startswith("beta#")


def test_remove_then_readd(tmp_path, docs):
    kb = KnowledgeBase(tmp_path / "kb")
    kb.add(docs["alpha"], "alpha")
    kb.remove("alpha")
    kb.add(docs["alpha"], "alpha")
    assert [d.doc_id for d in kb.list()] == ["alpha"]


def test_remove_unknown(tmp_path):
    with pytest.raises(NotFoundError, match="ghost"):
        KnowledgeBase(tmp_path / "kb").remove("ghost")


def test_list_order_and_stability(tmp_path, docs, ticking_clock):
    kb = KnowledgeBase(tmp_path / "kb", clock=ticking_clock)
    for name in ("gamma", "alpha", "beta"):
        kb.add(docs[name], name)
    assert [d.doc_id for d in kb.list()] == ["gamma", "alpha", "beta"]
    assert KnowledgeBase(tmp_path / "kb").list() == kb.list()


def test_list_breaks_timestamp_ties_by_doc_id(tmp_path, docs):
    kb = KnowledgeBase(tmp_path / "kb", clock=lambda: "2026-01-01T00:00:00.000000Z")
    for name in ("gamma", "alpha", "beta"):
        kb.add(docs[name], name)
    assert [d.doc_id for d in kb.list()] == ["alpha", "beta", "gamma"]


def test_chunk_counts_sum_to_index_size(tmp_path, docs, fixtures_dir):
    kb = KnowledgeBase(tmp_path / "kb")
    for name, path in docs.items():
        kb.add(path, name)
    kb.add(fixtures_dir / "reports" / "report-a.md", "report-a")
    assert sum(d.chunks for d in kb.list()) == len(kb.index)


def test_invalid_doc_ids(tmp_path, docs):
    kb = KnowledgeBase(tmp_path / "kb")
    for bad in ("", "a#b"):
        with pytest.raises(InvalidInputError):
            kb.add(docs["alpha"], bad)


def test_failed_load_changes_nothing(tmp_path):
    kb = KnowledgeBase(tmp_path / "kb")
    bad = tmp_path / "bad.txt"
    bad.write_bytes(b"\xff\xfe")
    with pytest.raises(FormatError):
        kb.add(bad, "bad")
    assert kb.list() == [] and not (tmp_path / "kb" / "manifest.json").exists()


def test_corrupt_manifest_and_count_mismatch(tmp_path, docs):
    root = tmp_path / "kb"
    KnowledgeBase(root).add(docs["alpha"], "alpha")
    manifest = json.loads((root / "manifest.json").read_text())
    manifest["documents"][0]["chunks"] += 1
    (root / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(SchemaError, match="alpha"):
        KnowledgeBase(root)
    (root / "manifest.json").write_text("{not json")
    with pytest.raises(SchemaError, match="manifest"):
        KnowledgeBase(root)


def test_checklist_registry_persists(tmp_path, gri):
    kb = KnowledgeBase(tmp_path / "kb")
    path = kb.register_checklist(gri)
    assert path == tmp_path / "kb" / "checklists" / "gri.json"
    assert KnowledgeBase(tmp_path / "kb").checklist(StandardId.parse("gri")) == gri
    with pytest.raises(NotFoundError):
        kb.checklist(StandardId.parse("tcfd"))


def test_concurrent_writers_are_serialized(tmp_path, docs):
    root = tmp_path / "kb"
    errors = []

    def add(name):
        try:
            KnowledgeBase(root).add(docs[name], name)
        except Exception as exc:  # surfaced below
            errors.append(exc)

    threads = [threading.Thread(target=add, args=(name,)) for name in docs]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert errors == []
    kb = KnowledgeBase(root)
    assert sorted(d.doc_id for d in kb.list()) == sorted(docs)
    assert sum(d.chunks for d in kb.list()) == len(kb.index)
