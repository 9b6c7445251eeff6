"""Answer-string normalisation shared by metrics and the rule judge."""

from __future__ import annotations

import string

_PUNCT = str.maketrans({c: " " for c in string.punctuation})


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, replace punctuation with spaces, split on whitespace."""
    return (text or "").lower().translate(_PUNCT).split()


def normalize_text(text: str) -> str:
    return " ".join(normalize_tokens(text))
