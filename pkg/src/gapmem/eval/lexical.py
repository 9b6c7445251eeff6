"""BM25 over raw turns, for the raw-only memory variant.

Each turn is exposed as a pseudo-tuple ``(speaker, "said", text)`` dated
with its session date, so the loop and the answer prompts need no special
casing. There are no edges, so expansion always returns nothing.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable

from ..dates import parse_session_date
from ..memory_store import IndexTuple, RawTurn
from ..providers.embedding import tokenize


class BM25RawRetriever:
    def __init__(self, turns: Iterable[RawTurn], k1: float = 1.2, b: float = 0.75):
        if k1 < 0 or not 0.0 <= b <= 1.0:
            raise ValueError("need k1 >= 0 and 0 <= b <= 1")
        self.k1, self.b = k1, b
        self.docs: list[IndexTuple] = []
        self.tfs: list[Counter] = []
        for turn in turns:
            day = parse_session_date(turn.timestamp)
            self.docs.append(
                IndexTuple(
                    tuple_id=f"raw:{turn.turn_id}",
                    subject=turn.speaker,
                    predicate="said",
                    object=turn.text,
                    source_turn=turn.turn_id,
                    embedding=(),
                    event_time=day.isoformat() if day else None,
                )
            )
            self.tfs.append(Counter(tokenize(turn.text)))
        self.lengths = [sum(tf.values()) for tf in self.tfs]
        self.avgdl = (sum(self.lengths) / len(self.lengths)) if self.lengths else 0.0
        df: Counter = Counter()
        for tf in self.tfs:
            df.update(tf.keys())
        n = len(self.docs)
        self.idf = {t: math.log(1 + (n - d + 0.5) / (d + 0.5)) for t, d in df.items()}

    def score(self, query: str) -> list[float]:
        terms = tokenize(query)
        out = []
        for tf, dl in zip(self.tfs, self.lengths):
            norm = self.k1 * (1 - self.b + self.b * dl / self.avgdl) if self.avgdl else self.k1
            s = 0.0
            for t in terms:
                f = tf.get(t, 0)
                if f:
                    s += self.idf[t] * f * (self.k1 + 1) / (f + norm)
            out.append(s)
        return out

    def search(self, query: str, k: int) -> list[tuple[IndexTuple, float]]:
        if k < 1:
            raise ValueError("k must be at least 1")
        scores = self.score(query)
        order = sorted(range(len(self.docs)), key=lambda i: (-scores[i], self.docs[i].tuple_id))[:k]
        return [(self.docs[i], scores[i]) for i in order]

    def expand(self, seeds: dict[str, float]) -> list[tuple[IndexTuple, float]]:
        return []
