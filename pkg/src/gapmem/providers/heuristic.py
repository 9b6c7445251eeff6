"""Rule-based stand-ins for the LLM roles, used by ``--providers mock``.

These read the prompts rendered by :mod:`gapmem.providers.prompts` and
answer from lexical overlap alone. They are deterministic and crude; their
job is to drive every code path of the pipeline offline, not to be smart.
"""

from __future__ import annotations

import json
import re

from ..dates import find_temporal_phrase, normalize_time
from ..text import normalize_text, normalize_tokens
from ..tiers import SufficiencyResult, Tier
from .base import CallRole, LLMRequest
from .embedding import tokenize
from .prompts import format_sufficiency_response

QUESTION_WORDS = frozenset({"when", "what", "who", "where", "why", "how", "which", "did", "does", "whose"})

NAME_RE = re.compile(r"\b[A-Z][a-zA-Z]+(?:\s+[A-Z][a-zA-Z]+)*")
NAME_STOP = frozenset(
    """
    I The A An And Or But When What Who Whom Whose Where Why How Which Did Do Does Is Are Was
    Were Has Have Had Can Could Would Should Will Shall May Might Must If In On At By For With
    From To Of As It Its This That These Those There Here Yes No Not My Your Our Their His Her
    Me We You He She They Them Oh Hey Hi Hello Thanks Thank Wow Yeah Sure Well So Also Just
    """.split()
)

_FIRST_PERSON = {"i", "we", "i've", "i'm", "i'd", "i'll", "we've", "we're"}


def regex_names(text: str) -> list[str]:
    """Capitalised-name spans with leading function words peeled off."""
    names: list[str] = []
    for span in NAME_RE.findall(text):
        words = [w for w in span.split() if w not in NAME_STOP]
        if words:
            names.append(" ".join(words))
    return names


def _section(prompt: str, header: str) -> list[str]:
    """Lines starting with "- " that follow ``header`` up to the next blank line."""
    lines = prompt.splitlines()
    try:
        start = next(i for i, ln in enumerate(lines) if ln.strip() == header) + 1
    except StopIteration:
        return []
    out = []
    for ln in lines[start:]:
        if not ln.strip():
            break
        if ln.startswith("- "):
            out.append(ln[2:])
    return out


def _field(prompt: str, label: str) -> str:
    m = re.search(rf"^\**{re.escape(label)}\**\s*:\s*(.*)$", prompt, flags=re.MULTILINE)
    return m.group(1).strip() if m else ""


def _content(text: str) -> set[str]:
    return {t for t in tokenize(text) if t not in QUESTION_WORDS}


class HeuristicLLM:
    """One provider object serving every role from prompt text alone."""

    def complete(self, request: LLMRequest) -> str:
        handler = {
            CallRole.EXTRACT: self._extract,
            CallRole.SUFFICIENCY: self._sufficiency,
            CallRole.REFINE: self._refine,
            CallRole.REASON: self._reason,
            CallRole.ANSWER: self._answer,
            CallRole.JUDGE: self._judge,
        }[request.role]
        return handler(request.user)

    # -- extraction -------------------------------------------------------
    def _extract(self, prompt: str) -> str:
        if prompt.startswith("Extract the names"):
            names = regex_names(_field(prompt, "Question"))
            return ", ".join(dict.fromkeys(names)) or "none"
        speaker = _field(prompt, "Speaker")
        text = _field(prompt, "Utterance")
        return json.dumps(extract_tuples(speaker, text))

    # -- sufficiency ------------------------------------------------------
    def _sufficiency(self, prompt: str) -> str:
        return format_sufficiency_response(
            judge_sufficiency(
                _field(prompt, "Question"),
                _section(prompt, "Retrieved Facts:"),
                "TEMPORAL question" in prompt,
            )
        )

    # -- refinement -------------------------------------------------------
    def _refine(self, prompt: str) -> str:
        original = _field(prompt, "Original question")
        missing = _field(prompt, "Missing information")
        entity = _field(prompt, "Entity context")
        words: list[str] = []
        for source in (entity.split(".")[0] if entity else "", missing, original):
            for tok in tokenize(source):
                if tok not in QUESTION_WORDS and tok not in {"need", "information", "missing", "none"}:
                    words.append(tok)
        return " ".join(dict.fromkeys(words)) or original

    # -- reasoning chain --------------------------------------------------
    def _reason(self, prompt: str) -> str:
        entities = [e.strip() for e in _field(prompt, "Entities").split(",") if e.strip() and e.strip() != "none"]
        if len(entities) < 2:
            return "TYPE: DIRECT"
        steps = [f"Step {i}: Identify facts about {e}" for i, e in enumerate(entities, 1)]
        steps.append(f"Step {len(entities) + 1}: Combine the findings")
        return "TYPE: MULTI-HOP\n" + "\n".join(steps)

    # -- answer -----------------------------------------------------------
    def _answer(self, prompt: str) -> str:
        question = _field(prompt, "Question")
        facts = _section(prompt, "Relevant Facts:")
        q = _content(question)
        best, best_overlap = None, 0
        for fact in facts:
            overlap = len(q & _content(fact))
            if overlap > best_overlap:
                best, best_overlap = fact, overlap
        if best is None:
            return "The conversation does not say."
        m = re.match(r"(.*?) \(time: ([0-9-]+)\)$", best)
        if m and ("PRECISE date" in prompt or "temporal clues" in prompt):
            return m.group(2)
        return m.group(1) if m else best

    # -- judge ------------------------------------------------------------
    def _judge(self, prompt: str) -> str:
        score = rule_judge(_field(prompt, "Ground Truth"), _field(prompt, "Prediction"))
        reason = "matches ground truth" if score else "does not match ground truth"
        return json.dumps({"score": score, "reason": reason})


def extract_tuples(speaker: str, text: str) -> list[dict]:
    """Split into sentences; first-person sentences become
    (speaker, verb, rest), everything else (speaker, said, sentence)."""
    out = []
    for sentence in re.split(r"(?<=[.!?])\s+", text.strip()):
        sentence = sentence.strip().rstrip(".!?").strip()
        if len(tokenize(sentence)) == 0:
            continue
        words = sentence.split()
        time = find_temporal_phrase(sentence)
        if words[0].lower() in _FIRST_PERSON and len(words) >= 3:
            predicate = words[1]
            obj = " ".join(w for w in words[2:] if w.lower() not in {"my", "our"}) or words[-1]
            out.append({"subject": speaker, "predicate": predicate, "object": obj, "time": time})
        else:
            out.append({"subject": speaker, "predicate": "said", "object": sentence, "time": time})
    return out


def judge_sufficiency(question: str, facts: list[str], temporal: bool) -> SufficiencyResult:
    q = _content(question)
    if not q or not facts:
        return SufficiencyResult(Tier.NONE, 0.0, f"anything about {question}")
    union: set[str] = set()
    best, best_dated = 0, 0
    for fact in facts:
        toks = _content(fact)
        union |= toks
        overlap = len(q & toks)
        best = max(best, overlap)
        if "(time:" in fact:
            best_dated = max(best_dated, overlap)
    coverage = len(q & union) / len(q)
    best_frac = best / len(q)
    confidence = round(0.5 * coverage + 0.5 * best_frac, 2)
    missing = ", ".join(sorted(q - union))
    if coverage == 0:
        return SufficiencyResult(Tier.NONE, 0.0, f"anything about {question}")
    if temporal:
        dated_frac = best_dated / len(q)
        if dated_frac >= 0.6:
            tier = Tier.EXACT
        elif coverage >= 0.6 and best_dated > 0:
            tier = Tier.INFERRABLE
        else:
            tier = Tier.PARTIAL
            missing = missing or "the date of the event"
    elif best_frac >= 0.8:
        tier = Tier.EXACT
    elif coverage >= 0.6:
        tier = Tier.INFERRABLE
    else:
        tier = Tier.PARTIAL
    return SufficiencyResult(tier, confidence, missing if tier is not Tier.EXACT else "")


_IDK = ("i don't know", "i do not know", "unknown", "cannot be determined", "not sure")


def rule_judge(truth: str, prediction: str) -> int:
    """Normalised-string and date-equivalence matcher."""
    t, p = normalize_text(truth), normalize_text(prediction)
    if not t:
        return int(not p)
    if not p or any(marker in prediction.lower() for marker in _IDK):
        return 0
    if t == p or f" {t} " in f" {p} ":
        return 1
    t_date = _as_date(truth)
    if t_date is not None and t_date == _as_date(prediction):
        return 1
    gold = set(normalize_tokens(truth))
    return int(len(gold) >= 2 and gold <= set(normalize_tokens(prediction)))


def _as_date(text: str) -> str | None:
    phrase = find_temporal_phrase(text)
    return normalize_time(phrase) if phrase else normalize_time(text)
