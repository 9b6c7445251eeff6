"""Coverage-based sufficiency oracle and classifier validation statistics."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Protocol, Sequence

from ..memory_store import IndexTuple
from ..providers.base import CallLog, CallRole, LLMProvider, LLMRequest, ProviderError, call_llm
from ..tiers import Tier
from .locomo import QARecord
from .metrics import pr_auc, spearman


class OracleTier(str, Enum):
    EXACT = "EXACT"
    INFERRABLE = "INFERRABLE"
    PARTIAL_OR_NONE = "PARTIAL_OR_NONE"

    @property
    def ordinal(self) -> int:
        return {"EXACT": 2, "INFERRABLE": 1, "PARTIAL_OR_NONE": 0}[self.value]

    @property
    def sufficient(self) -> bool:
        return self is not OracleTier.PARTIAL_OR_NONE


@dataclass(frozen=True)
class OracleLabel:
    tier: OracleTier
    checker_failed: bool = False


class InferenceChecker(Protocol):
    def __call__(self, record: QARecord, facts: Sequence[IndexTuple], covered: set[str]) -> bool: ...


class CoverageChecker:
    """Offline stand-in: affirms when at least ``min_fraction`` of the gold
    turns are covered."""

    def __init__(self, min_fraction: float = 0.5):
        self.min_fraction = min_fraction

    def __call__(self, record: QARecord, facts: Sequence[IndexTuple], covered: set[str]) -> bool:
        gold = set(record.evidence_dia_ids)
        if not gold:
            return False
        return len(gold & covered) / len(gold) >= self.min_fraction


class TableChecker:
    """Scripted verdicts keyed by question id; unknown ids raise KeyError."""

    def __init__(self, verdicts: dict[str, bool]):
        self.verdicts = dict(verdicts)

    def __call__(self, record: QARecord, facts: Sequence[IndexTuple], covered: set[str]) -> bool:
        return self.verdicts[record.qid]


INFERENCE_CHECK_TEMPLATE = """Question: {question}
Gold answer: {answer}

Retrieved facts:
{facts}

Can the gold answer be inferred from the retrieved facts alone, even if it is not stated verbatim?
Return JSON: {{"inferable": true}} or {{"inferable": false}}"""


class LLMChecker:
    """Asks a provider whether the gold answer is inferable from the facts."""

    def __init__(self, provider: LLMProvider, log: CallLog | None = None, max_facts: int = 60):
        self.provider = provider
        self.log = log
        self.max_facts = max_facts

    def __call__(self, record: QARecord, facts: Sequence[IndexTuple], covered: set[str]) -> bool:
        lines = "\n".join("- " + f.render() for f in list(facts)[: self.max_facts]) or "(none)"
        request = LLMRequest(
            user=INFERENCE_CHECK_TEMPLATE.format(question=record.question, answer=record.gold_answer, facts=lines),
            role=CallRole.JUDGE,
        )
        text = call_llm(self.provider, request, self.log).text
        m = re.search(r"\{.*\}", text, flags=re.DOTALL)
        if m:
            try:
                return bool(json.loads(m.group(0)).get("inferable"))
            except (json.JSONDecodeError, AttributeError):
                pass
        lowered = text.strip().lower()
        if lowered.startswith(("yes", "true")):
            return True
        if lowered.startswith(("no", "false")):
            return False
        raise ValueError(f"unreadable inference verdict: {text!r}")


def oracle_label(
    facts: Iterable[IndexTuple] | Iterable[str],
    record: QARecord,
    checker: InferenceChecker | None = None,
) -> OracleLabel:
    """EXACT iff every gold turn is a source turn of the retrieved facts.

    ``facts`` may be tuples or already-projected turn ids.
    """
    facts = list(facts)
    covered = {f if isinstance(f, str) else f.source_turn for f in facts}
    tuples = [f for f in facts if not isinstance(f, str)]
    gold = set(record.evidence_dia_ids)
    if gold and gold <= covered:
        return OracleLabel(OracleTier.EXACT)
    if checker is None:
        return OracleLabel(OracleTier.PARTIAL_OR_NONE)
    try:
        ok = checker(record, tuples, covered)
    except (ProviderError, ValueError, KeyError):
        return OracleLabel(OracleTier.PARTIAL_OR_NONE, checker_failed=True)
    return OracleLabel(OracleTier.INFERRABLE if ok else OracleTier.PARTIAL_OR_NONE)


@dataclass(frozen=True)
class ValidationRow:
    tier: Tier
    confidence: float
    oracle: OracleTier

    @property
    def claimed(self) -> bool:
        return self.tier.is_sufficient_kind


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def validate_classifier(rows: Sequence[ValidationRow], thresholds: Sequence[float] = (0.85, 0.7)) -> dict:
    """Agreement, precision/recall of sufficiency claims, EXACT precision,
    precision at confidence thresholds, Spearman rho and PR-AUC.

    Precision figures score a commitment as correct when the oracle says
    EXACT or INFERRABLE. ``exact_precision_strict`` requires oracle EXACT.
    Undefined values are None.
    """
    n = len(rows)
    claimed = [r for r in rows if r.claimed]
    truly = [r for r in rows if r.oracle.sufficient]
    exact = [r for r in rows if r.tier is Tier.EXACT]
    conf = [r.confidence for r in rows]
    ordinal = [r.oracle.ordinal for r in rows]
    rho = spearman(conf, ordinal) if n >= 2 else None
    stats = {
        "rows": n,
        "binary_agreement": _ratio(sum(r.claimed == r.oracle.sufficient for r in rows), n),
        "precision": _ratio(sum(r.oracle.sufficient for r in claimed), len(claimed)),
        "recall": _ratio(sum(r.claimed for r in truly), len(truly)),
        "exact_precision": _ratio(sum(r.oracle.sufficient for r in exact), len(exact)),
        "exact_precision_strict": _ratio(sum(r.oracle is OracleTier.EXACT for r in exact), len(exact)),
        "spearman": rho,
        "spearman_defined": rho is not None,
        "pr_auc": pr_auc([r.oracle.sufficient for r in rows], conf) if n else None,
        "pr_auc_random": _ratio(len(truly), n),
    }
    for theta in thresholds:
        committed = [r for r in claimed if r.confidence >= theta]
        stats[f"precision_at_{theta:g}"] = _ratio(sum(r.oracle.sufficient for r in committed), len(committed))
        stats[f"commitments_at_{theta:g}"] = len(committed)
    return stats
