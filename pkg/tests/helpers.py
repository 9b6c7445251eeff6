"""Shared builders for tests."""

from __future__ import annotations

import json
import random
import time
from pathlib import Path

from gapmem.memory_store import IndexTuple, MemoryStore, RawTurn, embedding_text
from gapmem.providers import CachingEmbedder, HashEmbeddingProvider
from gapmem.providers.base import CallRole, ProviderError

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = FIXTURES / "golden"
CASES = FIXTURES / "cases"
PACKAGE_FIXTURE = Path(__file__).parents[1] / "src" / "gapmem" / "fixtures" / "mini_locomo.json"


def embedder(dim: int = 256) -> CachingEmbedder:
    return CachingEmbedder(HashEmbeddingProvider(dim))


def store_from_spec(path: Path, emb=None) -> MemoryStore:
    emb = emb or embedder()
    spec = json.loads(Path(path).read_text())
    store = MemoryStore(dimension=emb.dimension)
    for t in spec["turns"]:
        store.add_turn(RawTurn(t["turn_id"], t["speaker"], t["timestamp"], t["text"]))
    for t in spec["tuples"]:
        text = embedding_text(t["subject"], t["predicate"], t["object"], t["time"])
        store.add_tuple(t["subject"], t["predicate"], t["object"], t["turn"], emb.embed(text), t["time"])
    store.build_semantic_edges()
    return store


def case_store() -> MemoryStore:
    return store_from_spec(CASES / "jon_gina_store.json")


def make_tuples(texts, turn_prefix="D1"):
    """IndexTuples from "subject|predicate|object[|time]" strings, one turn each."""
    out = []
    for n, text in enumerate(texts):
        parts = text.split("|")
        s, p, o = parts[:3]
        out.append(IndexTuple(f"t{n:06d}", s, p, o, f"{turn_prefix}:{n + 1}", (0.0,), parts[3] if len(parts) > 3 else None))
    return out


class ListRetriever:
    """Token-overlap search over a fixed tuple list; score ties break by id.

    ``edges`` maps a tuple id to neighbour ids for expansion (weight 1).
    Records every query it was asked.
    """

    def __init__(self, tuples, edges=None):
        self.tuples = list(tuples)
        self.by_id = {t.tuple_id: t for t in self.tuples}
        self.edges = edges or {}
        self.queries: list[tuple[str, int]] = []
        self.expansions = 0

    def search(self, query, k):
        self.queries.append((query, k))
        q = set(query.lower().replace("?", " ").split())
        scored = [(t, len(q & set(t.render().lower().split())) / 10) for t in self.tuples]
        scored.sort(key=lambda ts: (-ts[1], ts[0].tuple_id))
        return scored[:k]

    def expand(self, seeds):
        self.expansions += 1
        best = {}
        for seed, score in seeds.items():
            for other in self.edges.get(seed, ()):
                if other not in seeds:
                    best[other] = max(best.get(other, float("-inf")), score)
        return [(self.by_id[i], best[i]) for i in sorted(best)]


class RandomLLM:
    """Seeded chaos provider: random tiers, garbage, empty replies and failures."""

    def __init__(self, seed: int, fail_rate: float = 0.1):
        self.rng = random.Random(seed)
        self.fail_rate = fail_rate
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        r = self.rng
        if r.random() < self.fail_rate:
            raise ProviderError("random failure")
        role = request.role
        if role is CallRole.EXTRACT:
            return r.choice(["Jon, Gina", "none", "Caroline", ""])
        if role is CallRole.SUFFICIENCY:
            if r.random() < 0.15:
                return r.choice(["", "garbage", "EXACT: maybe"])
            tier = r.choice(["EXACT", "INFERRABLE", "PARTIAL", "NONE"])
            flags = "\n".join(f"{t}: {'yes' if t == tier else 'no'}" for t in ("EXACT", "INFERRABLE", "PARTIAL"))
            return f"{flags}\nCONFIDENCE: {r.choice([0.0, 0.1, 0.15, 0.4, 0.5, 0.7, 0.75, 0.85, 0.9, 1.0])}\nMISSING: x"
        if role is CallRole.REFINE:
            return r.choice(["", "Jon dance", "Gina store opening", "festival date"])
        if role is CallRole.REASON:
            return r.choice(["TYPE: DIRECT", "TYPE: MULTI-HOP\nStep 1: a\nStep 2: b", "???"])
        return r.choice(["", "an answer", "February 2023"])


def replay_case(name: str, store=None):
    """Run a scripted case against the shared Jon/Gina store.

    Returns (QuestionResult, expected dict, provider, seconds).
    """
    from gapmem.iris import IndexRetriever, IrisConfig
    from gapmem.pipeline import answer_question
    from gapmem.providers.scripted import ScriptedProvider

    spec = json.loads((CASES / f"{name}.json").read_text())
    emb = embedder()
    store = store or store_from_spec(CASES / "jon_gina_store.json", emb)
    llm = ScriptedProvider(spec["entries"], strict=spec.get("strict", True))
    config = IrisConfig(entity_delta=spec.get("delta", IrisConfig().entity_delta))
    start = time.perf_counter()
    result = answer_question(spec["question"], IndexRetriever(store, emb), llm, config)
    return result, spec["expected"], llm, time.perf_counter() - start
