"""Vulnerability-knowledge store with two retrieval modes.

Raw mode embeds each report together with its vulnerable code and is
queried with the embedded target code; the payload handed to the model is
the report text only, never the stored code. Summarized mode embeds an
LLM-written functionality summary and is queried with the target's own
functionality summary; the payload is the "KeyConcept:..." root-cause
abstract. Similarity is an unnormalized dot product and ties break on
lexicographic item id, so retrieval is exact and deterministic.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Protocol

import numpy as np

from . import prompts
from .lexer import Language, identifiers


class KnowledgeSource(str, Enum):
    AUDIT_REPORT = "audit_report"
    CWE_SYNTHESIZED = "cwe_synthesized"


class EmbedMode(str, Enum):
    CODE = "code"
    FUNCTIONALITY = "functionality"


class RetrievalMode(str, Enum):
    RAW = "raw"
    SUMMARIZED = "summarized"


EMBED_FOR_RETRIEVAL = {RetrievalMode.RAW: EmbedMode.CODE, RetrievalMode.SUMMARIZED: EmbedMode.FUNCTIONALITY}
RETRIEVAL_FOR_EMBED = {v: k for k, v in EMBED_FOR_RETRIEVAL.items()}

KEY_CONCEPT_MARKER = "KeyConcept"


class PreconditionError(ValueError):
    """An operation was invoked before its required inputs existed."""


class MalformedSummaryError(ValueError):
    """The summarizing LLM returned output without the expected markers."""


class DimensionMismatchError(ValueError):
    pass


@dataclass
class KnowledgeItem:
    id: str
    language: Language
    report_text: str
    vulnerable_code: str
    functionality: str | None = None
    key_concept: str | None = None
    source: KnowledgeSource = KnowledgeSource.AUDIT_REPORT
    code_embedding: list[float] | None = None
    functionality_embedding: list[float] | None = None

    def __post_init__(self) -> None:
        self.language = Language(self.language)
        self.source = KnowledgeSource(self.source)

    @property
    def summarized(self) -> bool:
        return bool(self.functionality) and bool(self.key_concept)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "language": self.language.value,
            "report_text": self.report_text,
            "vulnerable_code": self.vulnerable_code,
            "functionality": self.functionality,
            "key_concept": self.key_concept,
            "source": self.source.value,
        }

    @classmethod
    def from_record(cls, row: Mapping) -> "KnowledgeItem":
        return cls(
            id=row["id"],
            language=Language(row["language"]),
            report_text=row["report_text"],
            vulnerable_code=row["vulnerable_code"],
            functionality=row.get("functionality"),
            key_concept=row.get("key_concept"),
            source=KnowledgeSource(row.get("source", "audit_report")),
        )


def validate_item(item: KnowledgeItem, dimension: int | None = None) -> list[str]:
    """Invariant violations for one item (empty list means clean)."""
    problems: list[str] = []
    if item.key_concept and not item.functionality:
        problems.append("key_concept set without functionality")
    for name, vec in (("code_embedding", item.code_embedding), ("functionality_embedding", item.functionality_embedding)):
        if vec is not None and dimension is not None and len(vec) != dimension:
            problems.append(f"{name} has length {len(vec)}, store dimension is {dimension}")
    if item.key_concept:
        leaked = key_concept_identifier_leaks(item)
        if leaked:
            problems.append("key_concept leaks identifiers: " + ", ".join(sorted(leaked)))
    return problems


def key_concept_identifier_leaks(item: KnowledgeItem) -> set[str]:
    """Identifiers from the vulnerable code that appear in the key concept.

    Scanned as whole words; single-character identifiers are skipped since
    they match ordinary prose far too easily to be a useful signal.
    """
    if not item.key_concept:
        return set()
    leaks = set()
    for ident in identifiers(item.vulnerable_code):
        if len(ident) < 2:
            continue
        if re.search(rf"\b{re.escape(ident)}\b", item.key_concept):
            leaks.add(ident)
    return leaks


class EmbedderHandle(Protocol):
    dimension: int

    def embed(self, text: str) -> list[float]: ...


class HashEmbedder:
    """Deterministic embedder for tests and offline runs.

    Each component is derived from a SHA-256 of (salt, text, index), mapped
    into [-1, 1). Stable across platforms and processes, which makes the
    whole embed-and-retrieve path a pure function of its inputs.
    """

    def __init__(self, dimension: int = 16, salt: str = ""):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.salt = salt

    def embed(self, text: str) -> list[float]:
        out = []
        for i in range(self.dimension):
            digest = hashlib.sha256(f"{self.salt}\x1f{text}\x1f{i}".encode()).digest()
            (value,) = struct.unpack(">Q", digest[:8])
            out.append(value / 2**63 - 1.0)
        return out


@dataclass
class VectorStore:
    dimension: int
    ids: list[str] = field(default_factory=list)
    modes: list[EmbedMode] = field(default_factory=list)
    matrix: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.matrix is None:
            self.matrix = np.zeros((0, self.dimension), dtype=np.float64)

    def __len__(self) -> int:
        return len(self.ids)

    def upsert(self, item_id: str, mode: EmbedMode, vector: Iterable[float]) -> None:
        vec = np.asarray(list(vector), dtype=np.float64)
        if vec.shape != (self.dimension,):
            raise DimensionMismatchError(
                f"vector for item {item_id!r} has length {vec.shape[0] if vec.ndim else 0}, store dimension is {self.dimension}"
            )
        for i, (existing_id, existing_mode) in enumerate(zip(self.ids, self.modes)):
            if existing_id == item_id and existing_mode == mode:
                self.matrix[i] = vec
                return
        self.ids.append(item_id)
        self.modes.append(mode)
        self.matrix = np.vstack([self.matrix, vec[None, :]])

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, item_id in enumerate(self.ids):
                fh.write(
                    json.dumps(
                        {"id": item_id, "mode": self.modes[i].value, "dim": self.dimension, "values": list(map(float, self.matrix[i]))}
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path: str | Path) -> "VectorStore":
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))
        if not rows:
            raise ValueError(f"empty vector file: {path}")
        store = cls(dimension=int(rows[0]["dim"]))
        for row in rows:
            if int(row["dim"]) != store.dimension:
                raise DimensionMismatchError(f"mixed dimensions in {path}")
            store.upsert(row["id"], EmbedMode(row["mode"]), row["values"])
        return store


@dataclass(frozen=True)
class RetrievedKnowledge:
    item_id: str
    rank: int
    score: float
    mode: RetrievalMode
    payload: str


def check_result_invariants(results: list[RetrievedKnowledge]) -> None:
    for i, r in enumerate(results):
        if r.rank != i + 1:
            raise ValueError(f"ranks not contiguous from 1: {[x.rank for x in results]}")
        if i and results[i - 1].score < r.score - 1e-12:
            raise ValueError("scores increase with rank")


def embedding_text(item: KnowledgeItem, mode: EmbedMode) -> str:
    if mode is EmbedMode.CODE:
        return item.report_text + "\n" + item.vulnerable_code
    if not item.functionality:
        raise PreconditionError(f"item {item.id} has no functionality summary; summarize before embedding")
    return item.functionality


def embed_items(items: Iterable[KnowledgeItem], embedder: EmbedderHandle, mode: EmbedMode | str) -> VectorStore:
    """One vector per item for the given mode; re-embedding replaces entries."""
    mode = EmbedMode(mode)
    store = VectorStore(dimension=embedder.dimension)
    for item in items:
        vector = embedder.embed(embedding_text(item, mode))
        if len(vector) != embedder.dimension:
            raise DimensionMismatchError(
                f"embedder returned length {len(vector)} for item {item.id!r}, declared dimension is {embedder.dimension}"
            )
        store.upsert(item.id, mode, vector)
        if mode is EmbedMode.CODE:
            item.code_embedding = list(map(float, vector))
        else:
            item.functionality_embedding = list(map(float, vector))
    return store


def retrieve(
    query_vector: Iterable[float],
    store: VectorStore,
    k: int,
    items: Mapping[str, KnowledgeItem] | None = None,
) -> list[RetrievedKnowledge]:
    """Exact top-k by dot product, descending, ties broken by item id.

    Returns every entry when the store holds fewer than k. When an item
    mapping is supplied, payloads follow the mode rules (report text for
    raw, key concept for summarized); otherwise payloads are empty.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    query = np.asarray(list(query_vector), dtype=np.float64)
    if query.shape != (store.dimension,):
        raise DimensionMismatchError(f"query has length {query.shape[0] if query.ndim else 0}, store dimension is {store.dimension}")
    # Per-row dot products rather than one matvec: BLAS reassociates sums,
    # and exactness here is pinned against a per-row brute-force oracle.
    scores = [float(np.dot(store.matrix[i], query)) for i in range(len(store))]
    order = sorted(range(len(store)), key=lambda i: (-scores[i], store.ids[i]))
    results = []
    for rank, i in enumerate(order[:k], start=1):
        mode = RETRIEVAL_FOR_EMBED[store.modes[i]]
        payload = ""
        if items is not None and store.ids[i] in items:
            item = items[store.ids[i]]
            payload = item.report_text if mode is RetrievalMode.RAW else (item.key_concept or "")
        results.append(RetrievedKnowledge(item_id=store.ids[i], rank=rank, score=float(scores[i]), mode=mode, payload=payload))
    return results


def _parse_functionality(text: str) -> str:
    marker = "Functionality:"
    idx = text.find(marker)
    summary = text[idx + len(marker):].strip() if idx >= 0 else text.strip()
    if not summary:
        raise MalformedSummaryError("empty functionality summary")
    return summary


def _parse_key_concept(text: str) -> str:
    idx = text.find(KEY_CONCEPT_MARKER)
    if idx < 0:
        raise MalformedSummaryError(f"summary lacks the '{KEY_CONCEPT_MARKER}:' marker")
    return text[idx:].strip()


def summarize_case_functionality(case, llm, gateway) -> str:
    """Fill and return the case's cached functionality summary."""
    if getattr(case, "functionality_summary", None):
        return case.functionality_summary
    bundle = prompts.make_bundle(prompts.FUNCTIONALITY_PROMPT + "\n\nCode:\n" + case.code)
    exchange = gateway.complete(llm, bundle)
    case.functionality_summary = _parse_functionality(exchange.response_text)
    return case.functionality_summary


class KnowledgeBase:
    """Items plus their per-mode vector stores, persisted as JSONL files.

    Layout under the store directory: `knowledge.jsonl` (one item per
    line), `vectors-code.jsonl` and `vectors-functionality.jsonl` (one
    sidecar line per vector: id, mode, dim, values).

    Builds are single-writer; once the stores exist, retrieval is safe
    under any number of concurrent readers (queries never mutate state).
    """

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory is not None else None
        self.items: dict[str, KnowledgeItem] = {}
        self.stores: dict[EmbedMode, VectorStore] = {}
        self.embedders: dict[EmbedMode, EmbedderHandle] = {}
        if self.directory is not None and (self.directory / "knowledge.jsonl").exists():
            self._load()

    def _knowledge_path(self) -> Path:
        assert self.directory is not None
        return self.directory / "knowledge.jsonl"

    def _vector_path(self, mode: EmbedMode) -> Path:
        assert self.directory is not None
        return self.directory / f"vectors-{mode.value}.jsonl"

    def _load(self) -> None:
        with open(self._knowledge_path(), encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    item = KnowledgeItem.from_record(json.loads(line))
                    self.items[item.id] = item
        for mode in EmbedMode:
            path = self._vector_path(mode)
            if path.exists():
                self.stores[mode] = VectorStore.load(path)

    def save(self) -> None:
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        with open(self._knowledge_path(), "w", encoding="utf-8") as fh:
            for item in self.items.values():
                fh.write(json.dumps(item.to_record()) + "\n")
        for mode, store in self.stores.items():
            store.save(self._vector_path(mode))

    def ingest_report(
        self,
        report_text: str,
        vulnerable_code: str,
        language: Language | str,
        source: KnowledgeSource = KnowledgeSource.AUDIT_REPORT,
    ) -> KnowledgeItem:
        """Add one report+code pair; summaries and embeddings stay unset."""
        if not report_text or not report_text.strip():
            raise ValueError("report_text must be non-empty")
        language = Language(language)
        digest = hashlib.sha1(f"{language.value}\x1f{report_text}\x1f{vulnerable_code}".encode()).hexdigest()
        item = KnowledgeItem(
            id=f"ki-{digest[:12]}",
            language=language,
            report_text=report_text,
            vulnerable_code=vulnerable_code,
            source=source,
        )
        self.items[item.id] = item
        self.save()
        return item

    def add(self, item: KnowledgeItem) -> None:
        self.items[item.id] = item
        self.save()

    def summarize_item(self, item: KnowledgeItem, llm, gateway) -> KnowledgeItem:
        """Populate functionality and key concept via the two summary prompts.

        Idempotent: an already-summarized item returns unchanged with zero
        LLM calls. A response without the KeyConcept marker raises
        MalformedSummaryError and leaves the item untouched.
        """
        if item.summarized:
            return item
        suffix = f"\n\nVulnerability description:\n{item.report_text}\n\nVulnerableCode:\n{item.vulnerable_code}"
        func_reply = gateway.complete(llm, prompts.make_bundle(prompts.FUNCTIONALITY_PROMPT + suffix))
        concept_reply = gateway.complete(llm, prompts.make_bundle(prompts.KEY_CONCEPT_PROMPT + suffix))
        functionality = _parse_functionality(func_reply.response_text)
        key_concept = _parse_key_concept(concept_reply.response_text)
        updated = replace(item, functionality=functionality, key_concept=key_concept)
        self.items[updated.id] = updated
        self.save()
        return updated

    def embed_items(self, embedder: EmbedderHandle, mode: EmbedMode | str) -> VectorStore:
        mode = EmbedMode(mode)
        store = embed_items(self.items.values(), embedder, mode)
        self.stores[mode] = store
        self.embedders[mode] = embedder
        self.save()
        return store

    def retrieve_for_case(self, case, mode: RetrievalMode | str, k: int = 3) -> list[RetrievedKnowledge]:
        """Top-k knowledge for a target case in the requested mode.

        Raw mode embeds the case code and queries the code store;
        summarized mode requires the case's cached functionality summary
        and queries the functionality store. k defaults to the harness's
        standard top-3.
        """
        mode = RetrievalMode(mode)
        embed_mode = EMBED_FOR_RETRIEVAL[mode]
        store = self.stores.get(embed_mode)
        embedder = self.embedders.get(embed_mode)
        if store is None or embedder is None:
            raise PreconditionError(f"no {embed_mode.value} store built; run embed_items first")
        if mode is RetrievalMode.RAW:
            query = embedder.embed(case.code)
        else:
            summary = getattr(case, "functionality_summary", None)
            if not summary:
                raise PreconditionError(f"case {getattr(case, 'id', '?')} has no cached functionality summary")
            query = embedder.embed(summary)
        results = retrieve(query, store, k, items=self.items)
        check_result_invariants(results)
        return results
