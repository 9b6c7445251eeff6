"""LoCoMo-format loader.

A file is a list of samples (a single sample object is accepted too). Each
sample has ``conversation`` with ``session_<n>`` turn lists and matching
``session_<n>_date_time`` strings, and ``qa`` with question/answer/evidence/
category records. Category-5 items carry no ``answer``; their gold becomes
the abstention string.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..answer import ABSTENTION
from ..memory_store import RawTurn

CATEGORIES = {1: "single-hop", 2: "multi-hop", 3: "temporal", 4: "open-domain", 5: "adversarial"}

_SESSION_RE = re.compile(r"^session_(\d+)$")


class LocomoError(ValueError):
    pass


@dataclass(frozen=True)
class QARecord:
    qid: str
    question: str
    gold_answer: str
    category: int
    evidence_dia_ids: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"category must be 1..5, got {self.category}")

    @property
    def category_name(self) -> str:
        return CATEGORIES[self.category]


@dataclass
class Conversation:
    sample_id: str
    turns: list[RawTurn] = field(default_factory=list)
    qa: list[QARecord] = field(default_factory=list)


@dataclass
class LoadReport:
    conversations: list[Conversation]
    skipped: list[str] = field(default_factory=list)
    flagged: list[str] = field(default_factory=list)

    @property
    def records(self) -> list[QARecord]:
        return [r for c in self.conversations for r in c.qa]

    @property
    def turns(self) -> list[RawTurn]:
        return [t for c in self.conversations for t in c.turns]


def _turns(conv: dict) -> list[RawTurn]:
    sessions = sorted(
        (int(m.group(1)), key) for key in conv if (m := _SESSION_RE.match(key)) and isinstance(conv[key], list)
    )
    out = []
    for n, key in sessions:
        stamp = str(conv.get(f"{key}_date_time", ""))
        for t in conv[key]:
            text = t.get("text", "")
            if t.get("blip_caption"):
                text = f"{text} [shares a photo of {t['blip_caption']}]".strip()
            out.append(RawTurn(str(t["dia_id"]), str(t["speaker"]), stamp, text))
    return out


def _record(sample_id: str, n: int, item: dict, report: LoadReport) -> QARecord | None:
    qid = f"{sample_id}:q{n}"
    try:
        question = str(item["question"])
        category = int(item["category"])
    except (KeyError, TypeError, ValueError):
        report.skipped.append(f"{qid}: missing question or category")
        return None
    flags = []
    if "answer" in item and item["answer"] is not None:
        gold = str(item["answer"])
    elif category == 5:
        gold = ABSTENTION
        flags.append("gold_from_abstention")
    else:
        report.skipped.append(f"{qid}: missing answer")
        return None
    evidence = item.get("evidence")
    if evidence is None:
        evidence = []
        flags.append("missing_evidence")
    evidence = [e for e in evidence if isinstance(e, str)]
    try:
        rec = QARecord(qid, question, gold, category, tuple(evidence), tuple(flags))
    except ValueError as exc:
        report.skipped.append(f"{qid}: {exc}")
        return None
    if flags:
        report.flagged.append(f"{qid}: {', '.join(flags)}")
    return rec


def parse_locomo(data: list | dict) -> LoadReport:
    samples = data if isinstance(data, list) else [data]
    report = LoadReport(conversations=[])
    for i, sample in enumerate(samples):
        sample_id = str(sample.get("sample_id", f"conv-{i}")) if isinstance(sample, dict) else f"conv-{i}"
        try:
            turns = _turns(sample["conversation"])
        except (KeyError, TypeError, AttributeError) as exc:
            report.skipped.append(f"{sample_id}: bad conversation ({exc!r})")
            continue
        conv = Conversation(sample_id, turns)
        for n, item in enumerate(sample.get("qa", [])):
            rec = _record(sample_id, n, item if isinstance(item, dict) else {}, report)
            if rec is not None:
                conv.qa.append(rec)
        report.conversations.append(conv)
    return report


def load_locomo(path: str | Path) -> LoadReport:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise LocomoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise LocomoError(f"{path} is not valid JSON: {exc}") from exc
    return parse_locomo(data)
