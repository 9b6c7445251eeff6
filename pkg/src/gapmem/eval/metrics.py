"""Answer and retrieval metrics. Everything returns a float in [0, 1] except
``spearman``, which lies in [-1, 1] or is None when undefined."""

from __future__ import annotations

import math
from collections import Counter
from typing import Hashable, Sequence

import numpy as np

from ..text import normalize_tokens


def token_f1(prediction: str, gold: str) -> float:
    pred, ref = normalize_tokens(prediction), normalize_tokens(gold)
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    common = sum((Counter(pred) & Counter(ref)).values())
    if common == 0:
        return 0.0
    p, r = common / len(pred), common / len(ref)
    return 2 * p * r / (p + r)


def lcs_length(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(prediction: str, gold: str) -> float:
    pred, ref = normalize_tokens(prediction), normalize_tokens(gold)
    if not pred or not ref:
        return float(not pred and not ref)
    lcs = lcs_length(pred, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(pred), lcs / len(ref)
    return 2 * p * r / (p + r)


def _top_k(retrieved: Sequence[str], k: int) -> list[str]:
    if k < 1:
        raise ValueError("k must be at least 1")
    return list(dict.fromkeys(retrieved))[:k]


def recall_at_k(retrieved: Sequence[str], gold: set[str] | Sequence[str], k: int) -> float | None:
    """Fraction of gold turns in the first ``k`` distinct retrieved turns.
    None when ``gold`` is empty."""
    gold = set(gold)
    top = _top_k(retrieved, k)
    if not gold:
        return None
    return len(gold.intersection(top)) / len(gold)


def ndcg_at_k(retrieved: Sequence[str], gold: set[str] | Sequence[str], k: int) -> float | None:
    gold = set(gold)
    top = _top_k(retrieved, k)
    if not gold:
        return None
    dcg = sum(1.0 / math.log2(rank + 1) for rank, tid in enumerate(top, 1) if tid in gold)
    idcg = sum(1.0 / math.log2(rank + 1) for rank in range(1, min(k, len(gold)) + 1))
    return dcg / idcg


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Pearson correlation of average ranks; None if either side is constant
    or fewer than two points are given."""
    if len(x) != len(y):
        raise ValueError("x and y must have equal length")
    if len(x) < 2 or len(set(x)) < 2 or len(set(y)) < 2:
        return None
    rx, ry = average_ranks(x), average_ranks(y)
    rx, ry = rx - rx.mean(), ry - ry.mean()
    return float((rx @ ry) / math.sqrt((rx @ rx) * (ry @ ry)))


def pr_auc(labels: Sequence[int | bool], scores: Sequence[float]) -> float | None:
    """Average precision: sum over distinct thresholds of (R_n - R_{n-1}) * P_n.
    None when there are no positives."""
    if len(labels) != len(scores):
        raise ValueError("labels and scores must have equal length")
    y = np.asarray(labels, dtype=bool)
    s = np.asarray(scores, dtype=float)
    n_pos = int(y.sum())
    if n_pos == 0:
        return None
    ap, prev_recall = 0.0, 0.0
    for threshold in np.unique(s)[::-1]:
        chosen = s >= threshold
        tp = int((chosen & y).sum())
        recall = tp / n_pos
        precision = tp / int(chosen.sum())
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def mean(values: Sequence[float | None]) -> float | None:
    kept = [v for v in values if v is not None]
    return sum(kept) / len(kept) if kept else None
