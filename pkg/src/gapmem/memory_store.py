"""Three-layer conversational memory.

* Raw layer: verbatim dialogue turns.
* Index layer: atomic (subject, predicate, object, event_time) tuples with
  embeddings, each linked to its source turn.
* Edge layer: undirected links between tuples, either because they came from
  the same turn (weight 1.0) or because their embeddings are close (weight =
  cosine similarity).

Retrieval is an exhaustive cosine scan; expansion is exactly one hop.
The store is built once and then read concurrently; writers are not
synchronised.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dates import normalize_time
from .providers.base import CallLog, EmbeddingProvider, LLMProvider, ProviderError, call_llm
from .providers.prompts import parse_extraction_response, render_extraction_prompt

logger = logging.getLogger(__name__)

SNAPSHOT_FORMAT = "gapmem.snapshot"
SNAPSHOT_VERSION = 1
DEFAULT_EDGE_THRESHOLD = 0.80
# Similarities are rounded so that mathematically equal cosines tie exactly
# and fall back to tuple_id order instead of float noise.
SCORE_DECIMALS = 12


class StoreError(Exception):
    pass


class DuplicateTurnError(StoreError, ValueError):
    pass


class UnknownTupleError(StoreError, KeyError):
    pass


class SnapshotError(StoreError, ValueError):
    pass


class UnknownTurnWarning(UserWarning):
    pass


class ExtractionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RawTurn:
    turn_id: str
    speaker: str
    timestamp: str
    text: str


@dataclass(frozen=True)
class IndexTuple:
    tuple_id: str
    subject: str
    predicate: str
    object: str
    source_turn: str
    embedding: tuple[float, ...]
    event_time: str | None = None

    def render(self) -> str:
        base = f"{self.subject} {self.predicate} {self.object}"
        return f"{base} (time: {self.event_time})" if self.event_time else base

    def dedup_key(self) -> tuple[str, str, str, str | None]:
        return tuple_key(self.subject, self.predicate, self.object, self.event_time)


def tuple_key(subject: str, predicate: str, obj: str, event_time: str | None):
    norm = lambda s: " ".join(s.lower().split())  # noqa: E731
    return norm(subject), norm(predicate), norm(obj), event_time


def embedding_text(subject: str, predicate: str, obj: str, event_time: str | None) -> str:
    base = f"{subject} {predicate} {obj}"
    return f"{base} ({event_time})" if event_time else base


class EdgeKind(str, Enum):
    SAME_SOURCE = "SAME_SOURCE"
    SEMANTIC = "SEMANTIC"


@dataclass(frozen=True)
class EdgeLink:
    source: str
    target: str
    kind: EdgeKind
    weight: float

    def other(self, tuple_id: str) -> str:
        return self.target if tuple_id == self.source else self.source


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity; zero vectors give 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class MemoryStore:
    def __init__(self, dimension: int | None = None, edge_threshold: float = DEFAULT_EDGE_THRESHOLD):
        self.dimension = dimension
        self.edge_threshold = edge_threshold
        self.raw: dict[str, RawTurn] = {}
        self.index: dict[str, IndexTuple] = {}
        self._adj: dict[str, dict[str, EdgeLink]] = {}
        self._by_turn: dict[str, list[str]] = {}
        self._keys: dict[tuple, str] = {}
        self._matrix: np.ndarray | None = None
        self._ids: list[str] = []

    def __len__(self) -> int:
        return len(self.index)

    # ------------------------------------------------------------------
    # Writing
    # ------------------------------------------------------------------
    def add_turn(self, turn: RawTurn) -> None:
        if turn.turn_id in self.raw:
            raise DuplicateTurnError(f"turn {turn.turn_id!r} already stored")
        self.raw[turn.turn_id] = turn
        self._by_turn[turn.turn_id] = []

    def add_tuple(
        self,
        subject: str,
        predicate: str,
        obj: str,
        source_turn: str,
        embedding: Sequence[float],
        event_time: str | None = None,
    ) -> IndexTuple | None:
        """Add one tuple and its same-source edges. Returns None for a
        duplicate of an existing tuple (same normalised triple and time)."""
        subject, predicate, obj = subject.strip(), predicate.strip(), obj.strip()
        if not (subject and predicate and obj):
            raise ValueError("subject, predicate and object must be non-empty")
        if source_turn not in self.raw:
            raise KeyError(f"source turn {source_turn!r} is not in the raw layer")
        vec = tuple(float(x) for x in embedding)
        if self.dimension is None:
            self.dimension = len(vec)
        if len(vec) != self.dimension:
            raise ValueError(f"embedding has dimension {len(vec)}, store expects {self.dimension}")
        key = tuple_key(subject, predicate, obj, event_time)
        if key in self._keys:
            return None
        tup = IndexTuple(
            tuple_id=f"t{len(self.index):06d}",
            subject=subject,
            predicate=predicate,
            object=obj,
            source_turn=source_turn,
            embedding=vec,
            event_time=event_time,
        )
        self.index[tup.tuple_id] = tup
        self._keys[key] = tup.tuple_id
        self._adj[tup.tuple_id] = {}
        for sibling in self._by_turn[source_turn]:
            self._link(EdgeLink(sibling, tup.tuple_id, EdgeKind.SAME_SOURCE, 1.0))
        self._by_turn[source_turn].append(tup.tuple_id)
        self._matrix = None
        return tup

    def _link(self, edge: EdgeLink) -> None:
        self._adj[edge.source][edge.target] = edge
        self._adj[edge.target][edge.source] = edge

    def ingest_turn(
        self,
        turn: RawTurn,
        extractor: LLMProvider,
        embedder: EmbeddingProvider,
        log: CallLog | None = None,
        retries: int = 1,
    ) -> list[IndexTuple]:
        """Store ``turn`` verbatim and index the tuples the extractor finds.

        Extractor failure keeps the raw turn, adds no tuples and emits an
        ExtractionWarning.
        """
        self.add_turn(turn)
        if not turn.text.strip():
            return []
        request = render_extraction_prompt(turn.speaker, turn.timestamp, turn.text)
        try:
            items = parse_extraction_response(call_llm(extractor, request, log, retries).text)
        except (ProviderError, ValueError) as exc:
            warnings.warn(f"extraction failed for turn {turn.turn_id}: {exc}", ExtractionWarning, stacklevel=2)
            return []
        added = []
        for item in items:
            event_time = normalize_time(item["time"], turn.timestamp) if item["time"] else None
            text = embedding_text(item["subject"], item["predicate"], item["object"], event_time)
            tup = self.add_tuple(
                item["subject"], item["predicate"], item["object"], turn.turn_id, embedder.embed(text), event_time
            )
            if tup is not None:
                added.append(tup)
        return added

    def build_semantic_edges(self, threshold: float | None = None) -> int:
        """(Re)build SEMANTIC edges between tuples of distinct turns whose
        cosine similarity is at least ``threshold``. Returns the edge count."""
        threshold = self.edge_threshold if threshold is None else threshold
        if not -1.0 <= threshold <= 1.0:
            raise ValueError(f"threshold must lie in [-1, 1], got {threshold}")
        self.edge_threshold = threshold
        for tid, nbrs in self._adj.items():
            self._adj[tid] = {n: e for n, e in nbrs.items() if e.kind is EdgeKind.SAME_SOURCE}
        ids, unit = self._unit_matrix()
        if len(ids) < 2:
            return 0
        sims = np.round(unit @ unit.T, SCORE_DECIMALS)
        turns = np.array([self.index[t].source_turn for t in ids], dtype=object)
        ii, jj = np.nonzero(np.triu(sims >= threshold, k=1))
        count = 0
        for i, j in zip(ii.tolist(), jj.tolist()):
            if turns[i] == turns[j]:
                continue
            self._link(EdgeLink(ids[i], ids[j], EdgeKind.SEMANTIC, float(sims[i, j])))
            count += 1
        return count

    # ------------------------------------------------------------------
    # Reading
    # ------------------------------------------------------------------
    def _unit_matrix(self) -> tuple[list[str], np.ndarray]:
        if self._matrix is None:
            self._ids = sorted(self.index)
            if not self._ids:
                self._matrix = np.zeros((0, self.dimension or 0))
            else:
                m = np.array([self.index[t].embedding for t in self._ids], dtype=float)
                norms = np.linalg.norm(m, axis=1, keepdims=True)
                self._matrix = np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)
        return self._ids, self._matrix

    def warm(self) -> None:
        """Build the retrieval matrix now so concurrent readers never race to build it."""
        self._unit_matrix()

    def retrieve_scored(self, query_embedding: Sequence[float], k: int) -> list[tuple[IndexTuple, float]]:
        if k < 1:
            raise ValueError("k must be at least 1")
        ids, unit = self._unit_matrix()
        if not ids:
            return []
        q = np.asarray(query_embedding, dtype=float)
        qn = np.linalg.norm(q)
        scores = np.round(unit @ (q / qn), SCORE_DECIMALS) if qn > 0 else np.zeros(len(ids))
        order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))[:k]
        return [(self.index[ids[i]], float(scores[i])) for i in order]

    def retrieve(self, query_embedding: Sequence[float], k: int) -> list[IndexTuple]:
        """Top ``min(k, len)`` tuples by descending cosine, ties by tuple_id."""
        return [t for t, _ in self.retrieve_scored(query_embedding, k)]

    def neighbors(self, tuple_id: str) -> list[EdgeLink]:
        if tuple_id not in self._adj:
            raise UnknownTupleError(tuple_id)
        return [self._adj[tuple_id][n] for n in sorted(self._adj[tuple_id])]

    def graph_expand(self, seeds: Iterable[str]) -> list[IndexTuple]:
        """One-hop neighbours of ``seeds`` (both edge kinds), seeds excluded,
        sorted by tuple_id."""
        seed_set = set(seeds)
        unknown = seed_set - self._adj.keys()
        if unknown:
            raise UnknownTupleError(f"unknown tuple ids: {sorted(unknown)}")
        found: set[str] = set()
        for s in seed_set:
            found.update(self._adj[s])
        return [self.index[t] for t in sorted(found - seed_set)]

    def get_raw(self, turn_ids: Iterable[str]) -> list[RawTurn]:
        """Known turns in input order; each unknown id raises an
        UnknownTurnWarning and is skipped."""
        out = []
        for tid in turn_ids:
            turn = self.raw.get(tid)
            if turn is None:
                warnings.warn(f"unknown turn id {tid!r}", UnknownTurnWarning, stacklevel=2)
                continue
            out.append(turn)
        return out

    @property
    def edges(self) -> list[EdgeLink]:
        seen = {}
        for nbrs in self._adj.values():
            for e in nbrs.values():
                seen[(e.source, e.target)] = e
        return [seen[k] for k in sorted(seen)]

    def check(self) -> None:
        """Raise SnapshotError if an invariant is broken."""
        for t in self.index.values():
            if t.source_turn not in self.raw:
                raise SnapshotError(f"tuple {t.tuple_id} references unknown turn {t.source_turn}")
            if self.dimension is not None and len(t.embedding) != self.dimension:
                raise SnapshotError(f"tuple {t.tuple_id} has wrong embedding dimension")
        for tid, nbrs in self._adj.items():
            if tid not in self.index:
                raise SnapshotError(f"edge endpoint {tid} is not a tuple")
            for n, e in nbrs.items():
                if n not in self.index or tid not in self._adj[n]:
                    raise SnapshotError(f"dangling or one-sided edge {tid}-{n}")
                if e.kind is EdgeKind.SAME_SOURCE and self.index[tid].source_turn != self.index[n].source_turn:
                    raise SnapshotError(f"same-source edge {tid}-{n} crosses turns")

    # ------------------------------------------------------------------
    # Snapshot
    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "config": {"dimension": self.dimension, "edge_threshold": self.edge_threshold},
            "raw": [
                {"turn_id": t.turn_id, "speaker": t.speaker, "timestamp": t.timestamp, "text": t.text}
                for t in self.raw.values()
            ],
            "index": [
                {
                    "tuple_id": t.tuple_id,
                    "subject": t.subject,
                    "predicate": t.predicate,
                    "object": t.object,
                    "event_time": t.event_time,
                    "source_turn": t.source_turn,
                    "embedding": list(t.embedding),
                }
                for t in self.index.values()
            ],
            "edges": [
                {"source": e.source, "target": e.target, "kind": e.kind.value, "weight": e.weight}
                for e in self.edges
            ],
        }

    def save(self, path: str | os.PathLike) -> None:
        """Write a versioned JSON snapshot atomically (temp file + rename)."""
        self.check()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=1)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def from_dict(cls, data: dict) -> MemoryStore:
        if not isinstance(data, dict) or data.get("format") != SNAPSHOT_FORMAT:
            raise SnapshotError("not a gapmem snapshot")
        if data.get("version") != SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported snapshot version {data.get('version')!r}, expected {SNAPSHOT_VERSION}")
        try:
            cfg = data["config"]
            store = cls(dimension=cfg["dimension"], edge_threshold=cfg["edge_threshold"])
            for r in data["raw"]:
                store.add_turn(RawTurn(r["turn_id"], r["speaker"], r["timestamp"], r["text"]))
            for t in data["index"]:
                tup = IndexTuple(
                    tuple_id=t["tuple_id"],
                    subject=t["subject"],
                    predicate=t["predicate"],
                    object=t["object"],
                    source_turn=t["source_turn"],
                    embedding=tuple(float(x) for x in t["embedding"]),
                    event_time=t["event_time"],
                )
                if tup.tuple_id in store.index or tup.source_turn not in store.raw:
                    raise SnapshotError(f"bad tuple record {tup.tuple_id}")
                store.index[tup.tuple_id] = tup
                store._keys[tup.dedup_key()] = tup.tuple_id
                store._adj[tup.tuple_id] = {}
                store._by_turn[tup.source_turn].append(tup.tuple_id)
            for e in data["edges"]:
                if e["source"] not in store.index or e["target"] not in store.index:
                    raise SnapshotError(f"dangling edge {e['source']}-{e['target']}")
                store._link(EdgeLink(e["source"], e["target"], EdgeKind(e["kind"]), float(e["weight"])))
        except SnapshotError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SnapshotError(f"malformed snapshot: {exc!r}") from exc
        store.check()
        return store

    @classmethod
    def load(cls, path: str | os.PathLike) -> MemoryStore:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SnapshotError(f"snapshot {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MemoryStore):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None  # type: ignore[assignment]


def build_store(
    turns: Iterable[RawTurn],
    extractor: LLMProvider,
    embedder: EmbeddingProvider,
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD,
    log: CallLog | None = None,
    retries: int = 1,
) -> MemoryStore:
    """Ingest ``turns`` in order, then build semantic edges once."""
    store = MemoryStore(dimension=embedder.dimension, edge_threshold=edge_threshold)
    for turn in turns:
        store.ingest_turn(turn, extractor, embedder, log, retries)
    store.build_semantic_edges()
    return store
