"""Post-loop generation: abstention, reasoning chains, tier-adaptive answers."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .iris import IrisConfig, LoopState, QuestionContext, facts_for_evaluation
from .memory_store import IndexTuple
from .providers.base import CallLog, LLMProvider, ProviderError, call_llm
from .providers.prompts import parse_answer, render_answer_prompt, render_reasoning_prompt
from .tiers import SufficiencyResult, Tier

ABSTENTION = "Not mentioned in the conversation."


class ChainKind(str, Enum):
    DIRECT = "DIRECT"
    MULTI_HOP = "MULTI_HOP"


@dataclass(frozen=True)
class ReasoningChain:
    kind: ChainKind = ChainKind.DIRECT
    steps: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind is ChainKind.MULTI_HOP and len(self.steps) < 2:
            raise ValueError("a multi-hop chain needs at least two steps")
        if self.kind is ChainKind.DIRECT and self.steps:
            raise ValueError("a direct chain has no steps")


DIRECT = ReasoningChain()


@dataclass
class FinalAnswer:
    text: str
    abstained: bool
    tier: Tier
    confidence: float
    evidence_turn_ids: list[str] = field(default_factory=list)
    chain: ReasoningChain = DIRECT
    diagnostic: str = ""

    def __post_init__(self) -> None:
        if self.abstained and self.text != ABSTENTION:
            raise ValueError("an abstained answer must carry the abstention string")
        if not self.abstained and not self.text:
            raise ValueError("a generated answer must be non-empty")

    def to_dict(self) -> dict:
        return {
            "answer": self.text,
            "abstained": self.abstained,
            "tier": self.tier.value,
            "confidence": self.confidence,
            "evidence_turn_ids": self.evidence_turn_ids,
            "reasoning_steps": list(self.chain.steps),
            "diagnostic": self.diagnostic,
        }


def should_abstain(result: SufficiencyResult, state: LoopState | None = None, config: IrisConfig | None = None) -> bool:
    config = config or IrisConfig()
    if not config.abstention:
        return False
    return result.tier is Tier.NONE or result.confidence < config.abstention_floor


_TYPE_RE = re.compile(r"TYPE\s*:\s*MULTI[-_ ]?HOP", re.IGNORECASE)
_STEP_RE = re.compile(r"^\s*(?:Step\s*)?(\d+)\s*[:.)]\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)


def parse_reasoning_chain(text: str) -> ReasoningChain:
    """``TYPE: MULTI-HOP`` followed by numbered steps; anything else is DIRECT."""
    if not _TYPE_RE.search(text or ""):
        return DIRECT
    steps = tuple(m.group(2) for m in _STEP_RE.finditer(text))
    if len(steps) < 2:
        return DIRECT
    return ReasoningChain(ChainKind.MULTI_HOP, steps)


def _ranked_state(evidence: list[IndexTuple], state: LoopState | None) -> LoopState:
    if state is not None:
        return state
    return LoopState(query="", evidence=list(evidence))


def build_reasoning_chain(
    ctx: QuestionContext,
    evidence: list[IndexTuple],
    provider: LLMProvider,
    config: IrisConfig | None = None,
    log: CallLog | None = None,
    state: LoopState | None = None,
) -> ReasoningChain:
    config = config or IrisConfig()
    facts = facts_for_evaluation(_ranked_state(evidence, state), config.chain_fact_limit)
    request = render_reasoning_prompt(ctx.question, ctx.entities, facts, temperature=config.temperature)
    try:
        reply = call_llm(provider, request, log, config.retries)
    except ProviderError:
        return DIRECT
    return parse_reasoning_chain(reply.text)


def _unique(facts: list[IndexTuple]) -> list[IndexTuple]:
    seen: dict[str, IndexTuple] = {}
    for f in facts:
        seen.setdefault(f.render(), f)
    return list(seen.values())


def abstain(result: SufficiencyResult, diagnostic: str = "") -> FinalAnswer:
    return FinalAnswer(ABSTENTION, True, result.tier, result.confidence, [], DIRECT, diagnostic)


def generate_answer(
    ctx: QuestionContext,
    evidence: list[IndexTuple],
    result: SufficiencyResult,
    chain: ReasoningChain | None,
    provider: LLMProvider,
    config: IrisConfig | None = None,
    log: CallLog | None = None,
    state: LoopState | None = None,
) -> FinalAnswer:
    """Render the tier-adapted answer prompt and return the reply. A failed or
    empty reply turns into an abstention with a diagnostic."""
    config = config or IrisConfig()
    facts = _unique(facts_for_evaluation(_ranked_state(evidence, state), config.max_rendered_facts))
    chain = chain or DIRECT
    temporal = ctx.temporal and config.temporal_adaptation
    tier = result.tier if config.tiered else (Tier.EXACT if result.tier.is_sufficient_kind else Tier.PARTIAL)
    request = render_answer_prompt(
        ctx.question,
        facts,
        tier,
        result.confidence,
        temporal,
        reasoning_chain=chain.steps or None,
        temperature=config.temperature,
    )
    try:
        text = parse_answer(call_llm(provider, request, log, config.retries).text)
    except ProviderError as exc:
        return abstain(result, f"answer generation failed: {exc}")
    if not text:
        return abstain(result, "empty answer")
    turns = list(dict.fromkeys(f.source_turn for f in facts))
    return FinalAnswer(text, False, result.tier, result.confidence, turns, chain)


def answer(
    ctx: QuestionContext,
    evidence: list[IndexTuple],
    result: SufficiencyResult,
    provider: LLMProvider,
    config: IrisConfig | None = None,
    log: CallLog | None = None,
    state: LoopState | None = None,
) -> FinalAnswer:
    """Abstain, or build a chain for INFERRABLE/PARTIAL and then answer."""
    config = config or IrisConfig()
    if should_abstain(result, state, config):
        return abstain(result, "insufficient evidence")
    chain = DIRECT
    if config.reasoning_chain and result.tier in (Tier.INFERRABLE, Tier.PARTIAL):
        chain = build_reasoning_chain(ctx, evidence, provider, config, log, state)
    return generate_answer(ctx, evidence, result, chain, provider, config, log, state)
