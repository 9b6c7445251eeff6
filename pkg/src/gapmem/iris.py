"""Closed-loop retrieval driven by evidence-sufficiency signals.

Each iteration retrieves along an anchor path (the original question) and a
refinement path (the current refined query), expands the union one hop over
the edge layer, accumulates the new facts, asks the evaluator whether the
whole accumulated set answers the question, calibrates the verdict and either
stops or asks for a refined query aimed at what the evaluator said is
missing.
"""

from __future__ import annotations

import logging
import re
import time
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, Sequence

from .memory_store import IndexTuple, MemoryStore
from .providers.base import CallLog, EmbeddingProvider, LLMProvider, ProviderError, call_llm
from .providers.heuristic import regex_names
from .providers.prompts import (
    PARSE_FAILURE,
    parse_entity_list,
    parse_refined_query,
    parse_sufficiency_response,
    render_entity_prompt,
    render_refinement_prompt,
    render_sufficiency_prompt,
)
from .tiers import SufficiencyResult, Tier

logger = logging.getLogger(__name__)

DEFAULT_TEMPORAL_KEYWORDS = (
    "when", "date", "year", "month", "time", "how long", "before", "after",
    "while", "since", "until", "first time", "last time",
)

STRATEGIES = {
    (True, 1): "Focus on DATE, TIME, and temporal keywords (when, started, launched, opened).",
    (True, 2): "Search for specific DATE FORMATS and temporal relations (as of, after, before).",
    (True, 3): "Try broader temporal context: related events, milestones, timeframes.",
    (False, 1): "Focus on specific keywords, entity names, and key concepts.",
    (False, 2): "Try different angle: related events, attributes, or contextual information.",
    (False, 3): "Use synonyms, broader concepts, or implied relationships.",
}


class TerminationReason(str, Enum):
    SUFFICIENT = "SUFFICIENT"
    BUDGET_EXHAUSTED = "BUDGET_EXHAUSTED"


@dataclass
class IrisConfig:
    max_iterations: int = 3
    base_retrieval: int = 10
    budget_step: int = 3
    theta_general: float = 0.7
    theta_temporal: float = 0.85
    entity_delta: int = 2
    exact_floor: float = 0.85
    inferrable_cap: float = 0.75
    partial_cap: float = 0.50
    entity_cap: float = 0.6
    abstention_floor: float = 0.15
    # "exact_only": the temporal threshold gates EXACT only, INFERRABLE uses
    # the general one. "all_tiers": the temporal threshold gates both.
    temporal_threshold_applies_to: str = "exact_only"
    max_rendered_facts: int = 60
    chain_fact_limit: int = 15
    temperature: float = 0.3
    retries: int = 1
    temporal_keywords: tuple[str, ...] = DEFAULT_TEMPORAL_KEYWORDS
    # Feature switches; all on is the full system.
    iterative: bool = True
    tiered: bool = True
    temporal_adaptation: bool = True
    entity_tracking: bool = True
    dual_path: bool = True
    abstention: bool = True
    reasoning_chain: bool = True
    graph_expansion: bool = True

    def __post_init__(self) -> None:
        self.temporal_keywords = tuple(self.temporal_keywords)
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.base_retrieval < 1 or self.budget_step < 0:
            raise ValueError("retrieval budget must be positive and non-decreasing")
        if self.temporal_threshold_applies_to not in ("exact_only", "all_tiers"):
            raise ValueError("temporal_threshold_applies_to must be 'exact_only' or 'all_tiers'")
        for name in ("theta_general", "theta_temporal", "exact_floor", "inferrable_cap",
                     "partial_cap", "entity_cap", "abstention_floor"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.entity_delta < 0:
            raise ValueError("entity_delta must be non-negative")


@dataclass(frozen=True)
class QuestionContext:
    question: str
    entities: tuple[str, ...] = ()
    temporal: bool = False
    category: str | None = None
    temporal_keyword: str | None = None


# --------------------------------------------------------------------------
# Retrieval backends
# --------------------------------------------------------------------------


class Retriever(Protocol):
    def search(self, query: str, k: int) -> list[tuple[IndexTuple, float]]: ...

    def expand(self, seeds: dict[str, float]) -> list[tuple[IndexTuple, float]]: ...


class IndexRetriever:
    """Cosine search over the index layer plus one-hop edge expansion.

    An expanded neighbour is scored ``max(seed score * edge weight)`` so that
    it ranks below the seed that reached it.
    """

    def __init__(self, store: MemoryStore, embedder: EmbeddingProvider):
        self.store = store
        self.embedder = embedder

    def search(self, query: str, k: int) -> list[tuple[IndexTuple, float]]:
        return self.store.retrieve_scored(self.embedder.embed(query), k)

    def expand(self, seeds: dict[str, float]) -> list[tuple[IndexTuple, float]]:
        found = self.store.graph_expand(seeds)
        best: dict[str, float] = {}
        for seed, score in seeds.items():
            for edge in self.store.neighbors(seed):
                other = edge.other(seed)
                if other not in seeds:
                    best[other] = max(best.get(other, float("-inf")), score * edge.weight)
        return [(t, best[t.tuple_id]) for t in found]


# --------------------------------------------------------------------------
# Loop state and traces
# --------------------------------------------------------------------------


@dataclass
class IterationTrace:
    iteration: int
    budget: int
    anchor_query: str | None
    refinement_query: str
    anchor_ids: list[str]
    refinement_ids: list[str]
    expanded_ids: list[str]
    new_ids: list[str]
    ranked_turns: list[str] = field(default_factory=list)
    graph_expanded: bool = False
    raw: SufficiencyResult | None = None
    calibrated: SufficiencyResult | None = None
    evidence_size: int = 0
    evidence_turns: list[str] = field(default_factory=list)
    entity_counts: dict[str, int] = field(default_factory=dict)
    refined_query: str | None = None
    strategy: str | None = None
    timings: dict[str, float] = field(default_factory=dict)

    def to_dict(self, timings: bool = True) -> dict:
        out = {
            "iteration": self.iteration,
            "budget": self.budget,
            "anchor_query": self.anchor_query,
            "refinement_query": self.refinement_query,
            "anchor_ids": self.anchor_ids,
            "refinement_ids": self.refinement_ids,
            "expanded_ids": self.expanded_ids,
            "new_ids": self.new_ids,
            "graph_expanded": self.graph_expanded,
            "evidence_size": self.evidence_size,
            "entity_counts": self.entity_counts,
            "sufficiency": self.raw.to_dict() if self.raw else None,
            "calibrated": self.calibrated.to_dict() if self.calibrated else None,
            "strategy": self.strategy,
            "refined_query": self.refined_query,
        }
        if timings:
            out["timings"] = self.timings
        return out


@dataclass
class LoopState:
    query: str
    iteration: int = 0
    evidence: list[IndexTuple] = field(default_factory=list)
    scores: dict[str, float] = field(default_factory=dict)
    entity_facts: dict[str, set[str]] = field(default_factory=dict)
    log: CallLog = field(default_factory=CallLog)
    terminated_reason: TerminationReason | None = None
    traces: list[IterationTrace] = field(default_factory=list)
    retrieval_rounds: int = 0
    graph_expansions: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def evidence_ids(self) -> set[str]:
        return {t.tuple_id for t in self.evidence}

    def sparse_entities(self, delta: int) -> list[str]:
        return [e for e, ids in self.entity_facts.items() if len(ids) < delta]

    def evidence_turns(self) -> list[str]:
        return list(dict.fromkeys(t.source_turn for t in self.evidence))


@dataclass
class LoopOutcome:
    evidence: list[IndexTuple]
    result: SufficiencyResult
    state: LoopState


# --------------------------------------------------------------------------
# Preprocessing
# --------------------------------------------------------------------------


def _dedup_names(names: Sequence[str]) -> tuple[str, ...]:
    seen: dict[str, str] = {}
    for name in names:
        name = re.sub(r"['’]s$", "", name.strip())
        if name and name.lower() not in seen:
            seen[name.lower()] = name
    return tuple(seen.values())


def detect_temporal(question: str, keywords: Sequence[str]) -> str | None:
    """The first configured keyword found as a whole word/phrase, or None."""
    lowered = question.lower()
    hits = []
    for kw in keywords:
        m = re.search(rf"(?<!\w){re.escape(kw.lower())}(?!\w)", lowered)
        if m:
            hits.append((m.start(), kw))
    return min(hits)[1] if hits else None


def preprocess(
    question: str,
    extractor: LLMProvider | None = None,
    config: IrisConfig | None = None,
    log: CallLog | None = None,
    category: str | None = None,
) -> QuestionContext:
    """Entities from capitalised-name patterns plus the LLM extractor;
    temporal intent from keyword matching."""
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    config = config or IrisConfig()
    names = regex_names(question)
    if extractor is not None:
        try:
            reply = call_llm(extractor, render_entity_prompt(question, config.temperature), log, config.retries)
            names += parse_entity_list(reply.text)
        except ProviderError as exc:
            warnings.warn(f"entity extraction failed, using pattern matches only: {exc}", stacklevel=2)
    keyword = detect_temporal(question, config.temporal_keywords)
    if keyword:
        logger.debug("temporal keyword %r fired for %r", keyword, question)
    return QuestionContext(
        question=question,
        entities=_dedup_names(names),
        temporal=keyword is not None,
        category=category,
        temporal_keyword=keyword,
    )


# --------------------------------------------------------------------------
# Pure decision rules
# --------------------------------------------------------------------------


def retrieval_budget(i: int, config: IrisConfig | None = None) -> int:
    config = config or IrisConfig()
    if not 1 <= i <= config.max_iterations:
        raise ValueError(f"iteration {i} outside 1..{config.max_iterations}")
    return config.base_retrieval + config.budget_step * (i - 1)


def _temporal(ctx: QuestionContext, config: IrisConfig) -> bool:
    return ctx.temporal and config.temporal_adaptation


def calibrate(
    result: SufficiencyResult,
    ctx: QuestionContext,
    state: LoopState,
    config: IrisConfig | None = None,
) -> SufficiencyResult:
    """Temporal floors/caps, then the entity-coverage downgrade."""
    config = config or IrisConfig()
    tier, c, missing = result.tier, result.confidence, result.missing
    if _temporal(ctx, config):
        if tier is Tier.EXACT:
            c = max(c, config.exact_floor)
        elif tier is Tier.INFERRABLE:
            c = min(c, config.inferrable_cap)
        elif tier is Tier.PARTIAL:
            c = min(c, config.partial_cap)
    if config.entity_tracking:
        sparse = [e for e in ctx.entities if len(state.entity_facts.get(e, ())) < config.entity_delta]
        if sparse:
            if tier is not Tier.NONE:
                tier = Tier.PARTIAL
            c = min(c, config.entity_cap)
            hint = f"need more about: {', '.join(sparse)}"
            missing = f"{missing}; {hint}" if missing else hint
    return SufficiencyResult(tier, c, missing, parse_failed=result.parse_failed)


def sufficient(tier: Tier, confidence: float, ctx: QuestionContext, config: IrisConfig | None = None) -> bool:
    config = config or IrisConfig()
    if tier not in (Tier.EXACT, Tier.INFERRABLE):
        return False
    temporal = _temporal(ctx, config)
    if config.temporal_threshold_applies_to == "exact_only":
        theta = config.theta_temporal if temporal and tier is Tier.EXACT else config.theta_general
    else:
        theta = config.theta_temporal if temporal else config.theta_general
    return confidence >= theta


def select_strategy(temporal: bool, i: int) -> str:
    if i < 1:
        raise ValueError("iteration must be at least 1")
    return STRATEGIES[(bool(temporal), min(i, 3))]


def mentions(fact: IndexTuple, entity: str) -> bool:
    """Whole-token, case-insensitive match of ``entity`` in subject or object."""
    pattern = rf"(?<!\w){re.escape(entity.lower())}(?!\w)"
    return any(re.search(pattern, s.lower()) for s in (fact.subject, fact.object))


def collapse_binary(result: SufficiencyResult) -> SufficiencyResult:
    """Single-level sufficiency: any sufficient flag becomes EXACT, anything
    else PARTIAL."""
    tier = Tier.EXACT if result.tier.is_sufficient_kind else Tier.PARTIAL
    return SufficiencyResult(tier, result.confidence, result.missing, result.parse_failed)


# --------------------------------------------------------------------------
# The loop
# --------------------------------------------------------------------------


def gather(
    ctx: QuestionContext,
    state: LoopState,
    retriever: Retriever,
    config: IrisConfig,
) -> IterationTrace:
    """Retrieval and entity-tracking phases of one iteration."""
    i = state.iteration + 1
    state.iteration = i
    k_ret = retrieval_budget(i, config)
    t0 = time.perf_counter()
    anchor = retriever.search(ctx.question, k_ret) if config.dual_path else []
    refined = retriever.search(state.query, k_ret)
    state.retrieval_rounds += 1
    merged: dict[str, tuple[IndexTuple, float]] = {}
    for tup, score in anchor + refined:
        if tup.tuple_id not in merged or score > merged[tup.tuple_id][1]:
            merged[tup.tuple_id] = (tup, score)
    ranked = sorted(merged.values(), key=lambda ts: (-ts[1], ts[0].tuple_id))
    t1 = time.perf_counter()
    expanded: list[tuple[IndexTuple, float]] = []
    if config.graph_expansion and merged:
        expanded = retriever.expand({tid: s for tid, (_, s) in merged.items()})
        state.graph_expansions += 1
    t2 = time.perf_counter()

    round_facts = ranked + [(t, s) for t, s in expanded if t.tuple_id not in merged]
    known = state.evidence_ids
    new_ids = []
    for tup, score in round_facts:
        state.scores[tup.tuple_id] = max(state.scores.get(tup.tuple_id, float("-inf")), score)
        if tup.tuple_id not in known:
            state.evidence.append(tup)
            known.add(tup.tuple_id)
            new_ids.append(tup.tuple_id)
    for entity in ctx.entities:
        bucket = state.entity_facts.setdefault(entity, set())
        bucket.update(t.tuple_id for t, _ in round_facts if mentions(t, entity))

    trace = IterationTrace(
        iteration=i,
        budget=k_ret,
        anchor_query=ctx.question if config.dual_path else None,
        refinement_query=state.query,
        anchor_ids=[t.tuple_id for t, _ in anchor],
        refinement_ids=[t.tuple_id for t, _ in refined],
        expanded_ids=[t.tuple_id for t, _ in expanded],
        new_ids=new_ids,
        ranked_turns=list(dict.fromkeys(t.source_turn for t, _ in round_facts)),
        graph_expanded=config.graph_expansion and bool(merged),
        evidence_size=len(state.evidence),
        evidence_turns=state.evidence_turns(),
        entity_counts={e: len(ids) for e, ids in state.entity_facts.items()},
    )
    trace.timings = {"retrieve": t1 - t0, "expand": t2 - t1}
    state.traces.append(trace)
    return trace


def facts_for_evaluation(state: LoopState, limit: int) -> list[IndexTuple]:
    """At most ``limit`` facts: the highest-scored ones, kept in accumulation order."""
    if len(state.evidence) <= limit:
        return list(state.evidence)
    order = {t.tuple_id: n for n, t in enumerate(state.evidence)}
    top = sorted(state.evidence, key=lambda t: (-state.scores.get(t.tuple_id, 0.0), order[t.tuple_id]))[:limit]
    return sorted(top, key=lambda t: order[t.tuple_id])


def evaluate(ctx: QuestionContext, state: LoopState, llm: LLMProvider, config: IrisConfig) -> SufficiencyResult:
    facts = facts_for_evaluation(state, config.max_rendered_facts)
    request = render_sufficiency_prompt(
        ctx.question, facts, _temporal(ctx, config), total=len(state.evidence), temperature=config.temperature
    )
    try:
        result = parse_sufficiency_response(call_llm(llm, request, state.log, config.retries).text)
    except ProviderError as exc:
        state.warnings.append(f"sufficiency call failed: {exc}")
        result = SufficiencyResult(Tier.PARTIAL, 0.0, PARSE_FAILURE, parse_failed=True)
    if result.parse_failed:
        state.warnings.append(f"iteration {state.iteration}: unparseable sufficiency response")
    return result


def iterate_once(
    ctx: QuestionContext,
    state: LoopState,
    retriever: Retriever,
    llm: LLMProvider,
    config: IrisConfig,
) -> tuple[LoopState, SufficiencyResult]:
    if state.iteration >= config.max_iterations:
        raise ValueError("iteration budget already exhausted")
    trace = gather(ctx, state, retriever, config)
    t0 = time.perf_counter()
    raw = evaluate(ctx, state, llm, config)
    if not config.tiered:
        raw = collapse_binary(raw)
    calibrated = calibrate(raw, ctx, state, config)
    trace.raw, trace.calibrated = raw, calibrated
    trace.timings["evaluate"] = time.perf_counter() - t0
    return state, calibrated


def entity_hint(state: LoopState, ctx: QuestionContext, config: IrisConfig) -> str:
    if not config.entity_tracking:
        return ""
    sparse = [e for e in ctx.entities if len(state.entity_facts.get(e, ())) < config.entity_delta]
    if not sparse:
        return ""
    listed = ", ".join(f"{e} ({len(state.entity_facts.get(e, ()))})" for e in sparse)
    return f"Need more about: {listed}. Include entity names in query."


def refine_query(
    ctx: QuestionContext,
    state: LoopState,
    result: SufficiencyResult,
    llm: LLMProvider,
    config: IrisConfig,
) -> str:
    """Ask for the next refinement-path query. On provider failure the
    current query is kept. The original question is never touched."""
    strategy = select_strategy(_temporal(ctx, config), state.iteration)
    request = render_refinement_prompt(
        original=ctx.question,
        current=state.query,
        missing=result.missing,
        iteration=state.iteration,
        max_iter=config.max_iterations,
        strategy=strategy,
        entity_hint=entity_hint(state, ctx, config),
        temperature=config.temperature,
    )
    trace = state.traces[-1] if state.traces else None
    if trace is not None:
        trace.strategy = strategy
    t0 = time.perf_counter()
    try:
        refined = parse_refined_query(call_llm(llm, request, state.log, config.retries).text)
    except ProviderError as exc:
        state.warnings.append(f"refinement failed, keeping query: {exc}")
        refined = None
    if refined:
        state.query = refined
    if trace is not None:
        trace.refined_query = state.query
        trace.timings["refine"] = time.perf_counter() - t0
    return state.query


def run(
    ctx: QuestionContext,
    retriever: Retriever,
    llm: LLMProvider,
    config: IrisConfig | None = None,
    log: CallLog | None = None,
) -> LoopOutcome:
    """Iterate until the calibrated verdict is sufficient or the budget of
    ``max_iterations`` rounds is spent. No refinement happens after the last
    round."""
    config = config or IrisConfig()
    state = LoopState(query=ctx.question, log=log or CallLog())
    state.entity_facts = {e: set() for e in ctx.entities}
    result = SufficiencyResult(Tier.NONE, 0.0, "")
    while state.iteration < config.max_iterations:
        state, result = iterate_once(ctx, state, retriever, llm, config)
        if sufficient(result.tier, result.confidence, ctx, config):
            state.terminated_reason = TerminationReason.SUFFICIENT
            break
        if state.iteration == config.max_iterations:
            state.terminated_reason = TerminationReason.BUDGET_EXHAUSTED
            break
        refine_query(ctx, state, result, llm, config)
    return LoopOutcome(evidence=list(state.evidence), result=result, state=state)


def single_pass(
    ctx: QuestionContext,
    retriever: Retriever,
    config: IrisConfig | None = None,
    log: CallLog | None = None,
) -> LoopOutcome:
    """One retrieval round (with expansion if enabled) and no evaluation."""
    config = config or IrisConfig()
    state = LoopState(query=ctx.question, log=log or CallLog())
    state.entity_facts = {e: set() for e in ctx.entities}
    gather(ctx, state, retriever, config)
    state.terminated_reason = TerminationReason.BUDGET_EXHAUSTED
    result = SufficiencyResult(Tier.EXACT, 1.0, "")
    return LoopOutcome(evidence=list(state.evidence), result=result, state=state)
