"""Offline text embedding: hashed bag of words."""

from __future__ import annotations

import hashlib
import re

import numpy as np

TOKEN_RE = re.compile(r"[a-z0-9]+")

STOPWORDS = frozenset(
    """
    a an the and or but if of to in on at by for with from as is are was were be been being
    am do does did have has had i me my we our you your he him his she her it its they them
    their this that these those what which who whom when where why how both all any some
    can could would should will shall may might must not no yes so than then there here
    about into over under up down out off again just also too very s t like
    """.split()
)


def tokenize(text: str, drop_stopwords: bool = True) -> list[str]:
    tokens = TOKEN_RE.findall(text.lower())
    if drop_stopwords:
        tokens = [t for t in tokens if t not in STOPWORDS]
    return tokens


class HashEmbeddingProvider:
    """Deterministic lexical embedder.

    Each content token is hashed (blake2b) to a bucket and a sign; counts are
    accumulated and the vector is scaled to unit length. Text with no content
    tokens maps to the zero vector, which the store treats as similarity 0.
    """

    def __init__(self, dimension: int = 256):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    def _bucket(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        value = int.from_bytes(digest, "big")
        return value % self.dimension, (1.0 if (value >> 63) & 1 == 0 else -1.0)

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=float)
        for token in tokenize(text):
            index, sign = self._bucket(token)
            vec[index] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec
