"""Deterministic scripted LLM provider for offline traces and tests."""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .base import CallRole, LLMProvider, LLMRequest, ProviderError


class UnmatchedRequestError(AssertionError):
    """A strict script received a request it has no entry for."""


@dataclass
class ScriptEntry:
    role: CallRole
    response: str = ""
    pattern: str | None = None  # regex searched in the user prompt
    repeat: bool = False
    error: bool = False  # raise ProviderError instead of answering

    def matches(self, request: LLMRequest) -> bool:
        if self.role is not request.role:
            return False
        return self.pattern is None or re.search(self.pattern, request.user) is not None

    @classmethod
    def from_dict(cls, data: dict) -> ScriptEntry:
        return cls(
            role=CallRole(data["role"].upper()),
            response=data.get("response", ""),
            pattern=data.get("pattern"),
            repeat=bool(data.get("repeat", False)),
            error=bool(data.get("error", False)),
        )


class ScriptedProvider:
    """Answers each request with the first unconsumed entry whose role (and
    optional prompt pattern) matches. ``repeat`` entries are never consumed.

    Unmatched requests go to ``fallback`` if given; otherwise strict mode
    raises UnmatchedRequestError and lenient mode answers with "".
    """

    def __init__(
        self,
        entries: Iterable[ScriptEntry | dict],
        strict: bool = True,
        fallback: LLMProvider | None = None,
    ):
        self.entries = [e if isinstance(e, ScriptEntry) else ScriptEntry.from_dict(e) for e in entries]
        self.strict = strict
        self.fallback = fallback
        self.requests: list[LLMRequest] = []
        self._consumed = [False] * len(self.entries)
        self._lock = threading.Lock()

    @classmethod
    def from_json(cls, path: str | Path, strict: bool = True, fallback: LLMProvider | None = None):
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(data, dict):
            strict = data.get("strict", strict)
            data = data["entries"]
        return cls(data, strict=strict, fallback=fallback)

    def complete(self, request: LLMRequest) -> str:
        with self._lock:
            self.requests.append(request)
            for i, entry in enumerate(self.entries):
                if self._consumed[i] or not entry.matches(request):
                    continue
                if not entry.repeat:
                    self._consumed[i] = True
                if entry.error:
                    raise ProviderError(f"scripted failure for {request.role.value}")
                return entry.response
        if self.fallback is not None:
            return self.fallback.complete(request)
        if self.strict:
            raise UnmatchedRequestError(
                f"no script entry for {request.role.value} request:\n{request.user[:500]}"
            )
        return ""

    def remaining(self) -> list[ScriptEntry]:
        return [e for e, used in zip(self.entries, self._consumed) if not used and not e.repeat]
