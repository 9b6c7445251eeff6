"""Prompt templates and strict parsers for structured LLM responses.

The sufficiency, refinement, answer and judge templates are reproduced
verbatim; only placeholders are substituted. Extraction, entity and
reasoning-chain prompts are our own construction.
"""

from __future__ import annotations

import json
import re
from typing import Iterable, Protocol, Sequence

from ..tiers import SufficiencyResult, Tier
from .base import DEFAULT_TEMPERATURE, CallRole, LLMRequest


class Renderable(Protocol):
    def render(self) -> str: ...


def _fact_lines(facts: Iterable[Renderable | str]) -> list[str]:
    return ["- " + (f if isinstance(f, str) else f.render()) for f in facts]


# --------------------------------------------------------------------------
# Sufficiency evaluation
# --------------------------------------------------------------------------

SUFFICIENCY_SYSTEM = "You are a helpful assistant that evaluates information sufficiency."

SUFFICIENCY_TEMPORAL_BLOCK = """IMPORTANT: This is a TEMPORAL question asking for specific dates/times.
- EXACT_MATCH: Has precise date/time (e.g., "January 19, 2023")
- INFERRABLE: Has temporal clues that allow reasonable inference
  * "as of February 2023" -> event likely in February 2023
  * "after opening in January" -> subsequent events after January
- PARTIAL_MATCH: Has related but insufficient temporal information
- Vague terms like "recently" are PARTIAL, not EXACT.

"""

SUFFICIENCY_TEMPLATE = """Question: {question}

Retrieved Facts:
{facts}

{temporal_block}Evaluate if these facts can answer the question:
1. EXACT_MATCH:    Can answer precisely?            (yes/no)
2. INFERRABLE:     Can reasonably infer the answer? (yes/no)
3. PARTIAL_MATCH:  Related but insufficient?        (yes/no)
4. CONFIDENCE:     0.0-1.0
5. MISSING:        what specific information is missing? (or "none")

Respond in EXACTLY this format:
EXACT: yes/no
INFERRABLE: yes/no
PARTIAL: yes/no
CONFIDENCE: 0.0-1.0
MISSING: <missing information or "none">"""


def render_sufficiency_prompt(
    question: str,
    facts: Sequence[Renderable | str],
    temporal: bool,
    total: int | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
    model_tag: str = "light",
) -> LLMRequest:
    """Facts are rendered one per line in the given order. When ``total``
    exceeds the number rendered, a ``... [N facts total]`` line is appended."""
    lines = _fact_lines(facts)
    if total is not None and total > len(lines):
        lines.append(f"... [{total} facts total]")
    user = SUFFICIENCY_TEMPLATE.format(
        question=question,
        facts="\n".join(lines),
        temporal_block=SUFFICIENCY_TEMPORAL_BLOCK if temporal else "",
    )
    return LLMRequest(
        user=user,
        role=CallRole.SUFFICIENCY,
        system=SUFFICIENCY_SYSTEM,
        temperature=temperature,
        model_tag=model_tag,
    )


_FLAG_RE = re.compile(r"\b(EXACT|INFERRABLE|PARTIAL)(?:_MATCH)?\s*:\s*(yes|no)\b", re.IGNORECASE)
_CONF_RE = re.compile(r"\bCONFIDENCE\s*:\s*([-+]?(?:\d+(?:\.\d*)?|\.\d+))", re.IGNORECASE)
_MISSING_RE = re.compile(r"\bMISSING\s*:[ \t]*(.*)", re.IGNORECASE)

PARSE_FAILURE = "parse failure"


def _is_none_marker(text: str) -> bool:
    return text.strip().strip("\"'<>.").strip().lower() in {"none", "n/a", "nothing", ""}


def parse_sufficiency_response(text: str) -> SufficiencyResult:
    """Parse an evaluator reply. Never raises.

    When several flags say yes the strictest wins (EXACT > INFERRABLE >
    PARTIAL); all-no is NONE. Replies without a tier flag or a confidence
    value fall back to (PARTIAL, 0.0, "parse failure") with ``parse_failed``
    set, which can never end the loop.
    """
    try:
        flags: dict[str, bool] = {}
        for name, value in _FLAG_RE.findall(text or ""):
            flags.setdefault(name.upper(), value.lower() == "yes")
        conf_match = _CONF_RE.search(text or "")
        if not flags or conf_match is None:
            return SufficiencyResult(Tier.PARTIAL, 0.0, PARSE_FAILURE, parse_failed=True)
        confidence = min(1.0, max(0.0, float(conf_match.group(1))))
        if flags.get("EXACT"):
            tier = Tier.EXACT
        elif flags.get("INFERRABLE"):
            tier = Tier.INFERRABLE
        elif flags.get("PARTIAL"):
            tier = Tier.PARTIAL
        else:
            tier = Tier.NONE
        missing_match = _MISSING_RE.search(text)
        missing = missing_match.group(1).strip() if missing_match else ""
        if _is_none_marker(missing):
            missing = ""
        return SufficiencyResult(tier, confidence, missing)
    except Exception:  # totality: any surprise maps to the fail-safe triple
        return SufficiencyResult(Tier.PARTIAL, 0.0, PARSE_FAILURE, parse_failed=True)


def format_sufficiency_response(result: SufficiencyResult) -> str:
    """Write a reply in the exact format the evaluator is asked for."""
    yes = lambda flag: "yes" if flag else "no"  # noqa: E731
    return (
        f"EXACT: {yes(result.tier is Tier.EXACT)}\n"
        f"INFERRABLE: {yes(result.tier is Tier.INFERRABLE)}\n"
        f"PARTIAL: {yes(result.tier is Tier.PARTIAL)}\n"
        f"CONFIDENCE: {result.confidence}\n"
        f"MISSING: {result.missing or 'none'}"
    )


# --------------------------------------------------------------------------
# Query refinement
# --------------------------------------------------------------------------

REFINE_SYSTEM = "You are a helpful assistant that refines search queries."

REFINE_TEMPLATE = """Original question:    {original_question}
Current search query: {current_query}
Missing information:  {missing_info}
Iteration:            {iteration}/{max_iterations}

Strategy: {strategy}
{entity_line}
Generate an improved search query to find the missing information.
Keep it concise and focused. Return ONLY the query (no explanation)."""


def render_refinement_prompt(
    original: str,
    current: str,
    missing: str,
    iteration: int,
    max_iter: int,
    strategy: str,
    entity_hint: str = "",
    temperature: float = DEFAULT_TEMPERATURE,
    model_tag: str = "light",
) -> LLMRequest:
    entity_line = f"Entity context: {entity_hint}\n" if entity_hint else ""
    user = REFINE_TEMPLATE.format(
        original_question=original,
        current_query=current,
        missing_info=missing or "none",
        iteration=iteration,
        max_iterations=max_iter,
        strategy=strategy,
        entity_line=entity_line,
    )
    return LLMRequest(
        user=user, role=CallRole.REFINE, system=REFINE_SYSTEM, temperature=temperature, model_tag=model_tag
    )


def parse_refined_query(text: str) -> str | None:
    for line in (text or "").splitlines():
        line = line.strip()
        if not line:
            continue
        line = re.sub(r"^(?:refined\s+)?(?:search\s+)?query\s*:\s*", "", line, flags=re.IGNORECASE)
        line = line.strip().strip("\"'`").strip()
        if line:
            return line
    return None


# --------------------------------------------------------------------------
# Answer generation
# --------------------------------------------------------------------------

ANSWER_SYSTEM = "You are a helpful assistant that answers questions based on provided facts."

INSTRUCTION_TEMPORAL_EXACT = """Answer with the PRECISE date/time. Use formats like
"January 19, 2023" or "2023-01-19". Do NOT use vague
terms like "around" or "approximately"."""

INSTRUCTION_TEMPORAL_INFERRABLE = """Make a careful inference from temporal clues. Use "in"
or "around" if inferring timeframe; do NOT overuse
"it is likely that" or "based on the facts"."""

INSTRUCTION_CONFIDENT = """Answer directly and confidently. Do NOT hedge with
"likely", "it seems", "probably", "based on the facts"."""

INSTRUCTION_REASONED = """Answer based on reasonable inference. Use "Based on
the facts, [answer]" or state the answer with brief
reasoning. Avoid overusing uncertainty markers."""

INSTRUCTION_LOW_CONFIDENCE = """Answer based on available facts. If key information is
missing, state it concisely."""

CONFIDENT_FLOOR = 0.75
REASONED_FLOOR = 0.50


def select_instruction(tier: Tier, confidence: float, temporal: bool) -> str:
    """Exactly one instruction block for every (tier, confidence, temporal)."""
    if temporal and tier is Tier.EXACT:
        return INSTRUCTION_TEMPORAL_EXACT
    if temporal and tier is Tier.INFERRABLE:
        return INSTRUCTION_TEMPORAL_INFERRABLE
    if tier is Tier.EXACT or (tier is Tier.INFERRABLE and confidence >= CONFIDENT_FLOOR):
        return INSTRUCTION_CONFIDENT
    if tier is Tier.INFERRABLE or (tier is Tier.PARTIAL and confidence >= REASONED_FLOOR):
        return INSTRUCTION_REASONED
    return INSTRUCTION_LOW_CONFIDENCE


ANSWER_TEMPLATE = """{instruction}
{chain_line}
Question: {question}

Relevant Facts:
{facts}

Answer (be concise and direct):"""


def format_reasoning_steps(steps: Sequence[str]) -> str:
    return "Reasoning steps: " + " ".join(f"{i}. {s}" for i, s in enumerate(steps, 1))


def render_answer_prompt(
    question: str,
    facts: Sequence[Renderable | str],
    tier: Tier,
    confidence: float,
    temporal: bool,
    reasoning_chain: Sequence[str] | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
    model_tag: str = "full",
) -> LLMRequest:
    chain_line = format_reasoning_steps(reasoning_chain) + "\n" if reasoning_chain else ""
    user = ANSWER_TEMPLATE.format(
        instruction=select_instruction(tier, confidence, temporal),
        chain_line=chain_line,
        question=question,
        facts="\n".join(_fact_lines(facts)),
    )
    return LLMRequest(
        user=user, role=CallRole.ANSWER, system=ANSWER_SYSTEM, temperature=temperature, model_tag=model_tag
    )


def parse_answer(text: str) -> str:
    answer = (text or "").strip()
    answer = re.sub(r"^\**answer\**\s*:\s*", "", answer, flags=re.IGNORECASE)
    return answer.strip()


# --------------------------------------------------------------------------
# Judge
# --------------------------------------------------------------------------

JUDGE_TEMPLATE = """You are an impartial judge evaluating if an AI assistant's
answer is correct.

**Question**:     {question}
**Ground Truth**: {truth}
**Prediction**:   {prediction}

**Evaluation Criteria**:
1. The prediction must convey the same core information
   as the ground truth.
2. Different wording is acceptable if the meaning is
   preserved.
3. For dates: "May 7, 2023" and "7 May 2023" are
   equivalent.
4. If prediction says "I don't know" but ground truth
   exists, it is WRONG.
5. Partial answers that miss the key point are WRONG.

**Output Format**:
Return ONLY a JSON object:
{{"score": 1 or 0, "reason": "Brief explanation"}}"""


def render_judge_prompt(
    question: str,
    truth: str,
    prediction: str,
    temperature: float = DEFAULT_TEMPERATURE,
    model_tag: str = "light",
) -> LLMRequest:
    user = JUDGE_TEMPLATE.format(question=question, truth=truth, prediction=prediction)
    return LLMRequest(user=user, role=CallRole.JUDGE, temperature=temperature, model_tag=model_tag)


def parse_judge_response(text: str) -> tuple[int, str] | None:
    """(score, reason), or None when the reply is not a usable JSON object."""
    candidates = [text or ""]
    m = re.search(r"\{.*\}", text or "", flags=re.DOTALL)
    if m:
        candidates.append(m.group(0))
    for candidate in candidates:
        try:
            obj = json.loads(candidate)
        except (json.JSONDecodeError, TypeError):
            continue
        if not isinstance(obj, dict) or "score" not in obj:
            continue
        score = obj["score"]
        if isinstance(score, bool):
            score = int(score)
        if isinstance(score, str) and score.strip() in {"0", "1"}:
            score = int(score.strip())
        if isinstance(score, (int, float)) and score in (0, 1):
            return int(score), str(obj.get("reason", ""))
    return None


# --------------------------------------------------------------------------
# Our own prompts: turn extraction, question entities, reasoning chain
# --------------------------------------------------------------------------

EXTRACT_SYSTEM = "You extract atomic facts from dialogue."

EXTRACT_TEMPLATE = """Speaker: {speaker}
Session date: {timestamp}
Utterance: {text}

Rewrite the utterance as atomic (subject, predicate, object, time) tuples.
- Replace first-person references with the speaker's name.
- Express opinions as speaker-grounded relations (e.g. "X is beautiful" -> "{speaker} thinks X is beautiful").
- Copy any temporal expression into "time" exactly as written, or use null.
Return ONLY a JSON array of objects with keys "subject", "predicate", "object", "time"."""


def render_extraction_prompt(
    speaker: str, timestamp: str, text: str, temperature: float = DEFAULT_TEMPERATURE
) -> LLMRequest:
    user = EXTRACT_TEMPLATE.format(speaker=speaker, timestamp=timestamp, text=text)
    return LLMRequest(user=user, role=CallRole.EXTRACT, system=EXTRACT_SYSTEM, temperature=temperature)


def parse_extraction_response(text: str) -> list[dict]:
    """Items with non-empty subject/predicate/object. Raises ValueError when
    no JSON array can be found."""
    m = re.search(r"\[.*\]", text or "", flags=re.DOTALL)
    if not m:
        raise ValueError("no JSON array in extractor response")
    try:
        items = json.loads(m.group(0))
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed extractor response: {exc}") from exc
    out = []
    for item in items:
        if not isinstance(item, dict):
            continue
        fields = [str(item.get(k) or "").strip() for k in ("subject", "predicate", "object")]
        if all(fields):
            time = item.get("time", item.get("event_time"))
            out.append(
                {
                    "subject": fields[0],
                    "predicate": fields[1],
                    "object": fields[2],
                    "time": str(time).strip() if time not in (None, "") else None,
                }
            )
    return out


ENTITY_SYSTEM = "You extract named entities from questions."

ENTITY_TEMPLATE = """Extract the names of people, places, organisations and other named entities in the question.

Question: {question}

Return ONLY a comma-separated list of names, or "none"."""


def render_entity_prompt(question: str, temperature: float = DEFAULT_TEMPERATURE) -> LLMRequest:
    return LLMRequest(
        user=ENTITY_TEMPLATE.format(question=question),
        role=CallRole.EXTRACT,
        system=ENTITY_SYSTEM,
        temperature=temperature,
    )


def parse_entity_list(text: str) -> list[str]:
    line = next((ln.strip() for ln in (text or "").splitlines() if ln.strip()), "")
    if _is_none_marker(line):
        return []
    names = [n.strip().strip("\"'[]") for n in line.split(",")]
    return [n for n in names if n and not _is_none_marker(n)]


REASON_SYSTEM = "You are a helpful assistant that plans multi-step reasoning over facts."

REASON_TEMPLATE = """Analyze if multi-hop reasoning is needed.

Question: {question}
Entities: {entities}

Facts:
{facts}

If answering requires combining several facts, respond:
TYPE: MULTI-HOP
Step 1: <first inference step>
Step 2: <next inference step>
(add further steps as needed)
Otherwise respond:
TYPE: DIRECT"""


def render_reasoning_prompt(
    question: str,
    entities: Sequence[str],
    facts: Sequence[Renderable | str],
    temperature: float = DEFAULT_TEMPERATURE,
    model_tag: str = "light",
) -> LLMRequest:
    user = REASON_TEMPLATE.format(
        question=question,
        entities=", ".join(sorted(entities, key=str.lower)) or "none",
        facts="\n".join(_fact_lines(facts)),
    )
    return LLMRequest(
        user=user, role=CallRole.REASON, system=REASON_SYSTEM, temperature=temperature, model_tag=model_tag
    )
