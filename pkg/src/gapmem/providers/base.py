"""Provider interfaces, request/response records and call accounting."""

from __future__ import annotations

import logging
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, runtime_checkable

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.3


class CallRole(str, Enum):
    EXTRACT = "EXTRACT"
    SUFFICIENCY = "SUFFICIENCY"
    REFINE = "REFINE"
    REASON = "REASON"
    ANSWER = "ANSWER"
    JUDGE = "JUDGE"


# Roles counted against the per-question 2..3k+3 call budget.
LOOP_ROLES = frozenset({CallRole.SUFFICIENCY, CallRole.REFINE, CallRole.REASON, CallRole.ANSWER})


class ProviderError(RuntimeError):
    """A provider could not produce a response. Callers may retry."""


@dataclass(frozen=True)
class LLMRequest:
    user: str
    role: CallRole
    system: str | None = None
    temperature: float = DEFAULT_TEMPERATURE
    model_tag: str = "light"

    def __post_init__(self) -> None:
        if not self.user:
            raise ValueError("LLMRequest.user must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must lie in [0, 2], got {self.temperature}")


@dataclass(frozen=True)
class LLMResponse:
    text: str
    latency: float
    call_role: CallRole


@runtime_checkable
class LLMProvider(Protocol):
    def complete(self, request: LLMRequest) -> str: ...


@runtime_checkable
class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


@dataclass
class CallLog:
    """Ordered record of every LLM call made on behalf of one question."""

    entries: list[LLMResponse] = field(default_factory=list)
    failures: list[CallRole] = field(default_factory=list)

    def record(self, response: LLMResponse) -> None:
        self.entries.append(response)

    @property
    def roles(self) -> list[CallRole]:
        return [e.call_role for e in self.entries]

    def count(self, role: CallRole | None = None) -> int:
        if role is None:
            return len(self.entries)
        return sum(1 for e in self.entries if e.call_role is role)

    def by_role(self) -> dict[str, int]:
        counts = Counter(r.value for r in self.roles)
        return {r.value: counts.get(r.value, 0) for r in CallRole}

    def loop_calls(self) -> int:
        return sum(1 for r in self.roles if r in LOOP_ROLES)


def call_llm(
    provider: LLMProvider,
    request: LLMRequest,
    log: CallLog | None = None,
    retries: int = 1,
) -> LLMResponse:
    """Send ``request``; retry ``retries`` times on ProviderError, then re-raise.

    Only successful calls are recorded in ``log``; each attempt that failed is
    noted in ``log.failures``.
    """
    last: Exception | None = None
    for attempt in range(retries + 1):
        start = time.perf_counter()
        try:
            text = provider.complete(request)
        except ProviderError as exc:
            last = exc
            if log is not None:
                log.failures.append(request.role)
            logger.warning("%s call failed (attempt %d): %s", request.role.value, attempt + 1, exc)
            continue
        response = LLMResponse(text=text, latency=time.perf_counter() - start, call_role=request.role)
        if log is not None:
            log.record(response)
        return response
    raise ProviderError(f"{request.role.value} call failed after {retries + 1} attempts") from last


class CachingEmbedder:
    """Memoise an embedding provider; safe to share across threads."""

    def __init__(self, inner: EmbeddingProvider):
        self.inner = inner
        self.dimension = inner.dimension
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def embed(self, text: str) -> np.ndarray:
        with self._lock:
            hit = self._cache.get(text)
        if hit is not None:
            return hit
        vec = np.asarray(self.inner.embed(text), dtype=float)
        with self._lock:
            self._cache[text] = vec
        return vec

