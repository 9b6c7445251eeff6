"""Sufficiency tiers and the (tier, confidence, missing) triple shared across modules."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Tier(str, Enum):
    EXACT = "EXACT"
    INFERRABLE = "INFERRABLE"
    PARTIAL = "PARTIAL"
    NONE = "NONE"

    @property
    def is_sufficient_kind(self) -> bool:
        return self in (Tier.EXACT, Tier.INFERRABLE)


@dataclass(frozen=True)
class SufficiencyResult:
    tier: Tier
    confidence: float
    missing: str = ""
    parse_failed: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")

    def to_dict(self) -> dict:
        return {
            "tier": self.tier.value,
            "confidence": self.confidence,
            "missing": self.missing,
            "parse_failed": self.parse_failed,
        }
