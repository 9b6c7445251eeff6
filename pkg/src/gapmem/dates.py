"""Resolve temporal expressions against a session date.

Output is an ISO-8601 prefix whose length carries the precision of the input:
``YYYY``, ``YYYY-MM`` or ``YYYY-MM-DD``. Anything we cannot resolve with
confidence yields ``None``; we never guess.
"""

from __future__ import annotations

import calendar
import re
from datetime import date, timedelta

from dateutil import parser as dateparser
from dateutil.relativedelta import relativedelta

MONTHS = {name.lower(): i for i, name in enumerate(calendar.month_name) if name}
MONTHS.update({name.lower(): i for i, name in enumerate(calendar.month_abbr) if name})
MONTHS["sept"] = 9

WEEKDAYS = {name.lower(): i for i, name in enumerate(calendar.day_name)}

NUMBER_WORDS = {
    "a": 1, "an": 1, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10, "a couple of": 2,
    "a few": 3, "several": 3,
}

_MONTH_RE = "|".join(sorted(MONTHS, key=len, reverse=True))
_NUM_RE = r"\d+|" + "|".join(sorted(map(re.escape, NUMBER_WORDS), key=len, reverse=True))

_ISO = re.compile(r"^(\d{4})(?:-(\d{2})(?:-(\d{2}))?)?$")
_AGO = re.compile(rf"^({_NUM_RE})\s+(day|week|month|year)s?\s+ago$")
_IN_FUTURE = re.compile(rf"^in\s+({_NUM_RE})\s+(day|week|month|year)s?$")
_RELATIVE_UNIT = re.compile(r"^(last|this|next|past|coming)\s+(week|month|year)$")
_RELATIVE_WEEKDAY = re.compile(r"^(last|next|this)\s+(" + "|".join(WEEKDAYS) + r")$")
_DAY_MONTH_YEAR = re.compile(rf"^(\d{{1,2}})(?:st|nd|rd|th)?\s+(?:of\s+)?({_MONTH_RE})\.?,?\s+(\d{{4}})$")
_MONTH_DAY_YEAR = re.compile(rf"^({_MONTH_RE})\.?\s+(\d{{1,2}})(?:st|nd|rd|th)?,?\s+(\d{{4}})$")
_MONTH_DAY = re.compile(rf"^({_MONTH_RE})\.?\s+(\d{{1,2}})(?:st|nd|rd|th)?$")
_DAY_MONTH = re.compile(rf"^(\d{{1,2}})(?:st|nd|rd|th)?\s+(?:of\s+)?({_MONTH_RE})$")
_MONTH_YEAR = re.compile(rf"^({_MONTH_RE})\.?,?\s+(?:of\s+)?(\d{{4}})$")
_MONTH_ONLY = re.compile(rf"^({_MONTH_RE})$")
_LEADING = re.compile(r"^(?:on|in|at|during|around|since|by|the)\s+")

_OFFSETS = {
    "today": 0, "tonight": 0, "now": 0, "this morning": 0, "this afternoon": 0,
    "this evening": 0, "yesterday": -1, "last night": -1, "tomorrow": 1,
    "the day before yesterday": -2, "day before yesterday": -2,
    "the day after tomorrow": 2, "day after tomorrow": 2,
}


def parse_session_date(timestamp: str | None) -> date | None:
    """Extract the calendar date from a session timestamp such as
    ``"1:56 pm on 8 May, 2023"`` or ``"2023-05-08"``."""
    if not timestamp:
        return None
    text = timestamp.strip()
    m = _ISO.match(text)
    if m and m.group(3):
        return date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
    try:
        return dateparser.parse(text, fuzzy=True).date()
    except (ValueError, OverflowError):
        return None


def _fmt_day(d: date) -> str:
    return d.isoformat()


def _fmt_month(d: date) -> str:
    return f"{d.year:04d}-{d.month:02d}"


def _count(token: str) -> int:
    return int(token) if token.isdigit() else NUMBER_WORDS[token]


def _shift(anchor: date, n: int, unit: str) -> str:
    if unit == "day":
        return _fmt_day(anchor + timedelta(days=n))
    if unit == "week":
        return _fmt_day(anchor + timedelta(weeks=n))
    if unit == "month":
        return _fmt_month(anchor + relativedelta(months=n))
    return f"{anchor.year + n:04d}"


def _valid(y: int, m: int, d: int | None = None) -> bool:
    if not 1 <= m <= 12:
        return False
    if d is None:
        return True
    return 1 <= d <= calendar.monthrange(y, m)[1]


def normalize_time(expression: str | None, anchor: date | str | None = None) -> str | None:
    """Normalise ``expression`` to an ISO prefix, resolving relative phrases
    against ``anchor`` (a date or a session timestamp string)."""
    if expression is None:
        return None
    if isinstance(anchor, str):
        anchor = parse_session_date(anchor)
    text = " ".join(expression.strip().lower().replace(",", ", ").split()).rstrip(".")
    text = text.replace(" ,", ",")
    if not text:
        return None

    m = _ISO.match(text)
    if m:
        y, mo, d = m.group(1), m.group(2), m.group(3)
        if mo is None:
            return y
        if d is None:
            return text if _valid(int(y), int(mo)) else None
        return text if _valid(int(y), int(mo), int(d)) else None

    if text in _OFFSETS:
        return _fmt_day(anchor + timedelta(days=_OFFSETS[text])) if anchor else None

    stripped = _LEADING.sub("", text)
    for candidate in (text, stripped) if stripped != text else (text,):
        resolved = _resolve(candidate, anchor)
        if resolved is not None:
            return resolved
    return None


def _resolve(text: str, anchor: date | None) -> str | None:
    if text in _OFFSETS:
        return _fmt_day(anchor + timedelta(days=_OFFSETS[text])) if anchor else None

    m = _DAY_MONTH_YEAR.match(text)
    if m:
        d, mo, y = int(m.group(1)), MONTHS[m.group(2)], int(m.group(3))
        return date(y, mo, d).isoformat() if _valid(y, mo, d) else None
    m = _MONTH_DAY_YEAR.match(text)
    if m:
        mo, d, y = MONTHS[m.group(1)], int(m.group(2)), int(m.group(3))
        return date(y, mo, d).isoformat() if _valid(y, mo, d) else None
    m = _MONTH_YEAR.match(text)
    if m:
        return f"{int(m.group(2)):04d}-{MONTHS[m.group(1)]:02d}"
    if re.fullmatch(r"\d{4}", text):
        return text

    if anchor is None:
        return None

    m = _MONTH_DAY.match(text) or _DAY_MONTH.match(text)
    if m:
        a, b = m.group(1), m.group(2)
        mo, d = (MONTHS[a], int(b)) if a in MONTHS else (MONTHS[b], int(a))
        return date(anchor.year, mo, d).isoformat() if _valid(anchor.year, mo, d) else None
    m = _MONTH_ONLY.match(text)
    if m:
        return f"{anchor.year:04d}-{MONTHS[m.group(1)]:02d}"
    m = _AGO.match(text)
    if m:
        return _shift(anchor, -_count(m.group(1)), m.group(2))
    m = _IN_FUTURE.match(text)
    if m:
        return _shift(anchor, _count(m.group(1)), m.group(2))
    m = _RELATIVE_UNIT.match(text)
    if m:
        step = {"last": -1, "past": -1, "this": 0, "next": 1, "coming": 1}[m.group(1)]
        return _shift(anchor, step, m.group(2))
    m = _RELATIVE_WEEKDAY.match(text)
    if m:
        target = WEEKDAYS[m.group(2)]
        if m.group(1) == "last":
            back = (anchor.weekday() - target) % 7 or 7
            return _fmt_day(anchor - timedelta(days=back))
        ahead = (target - anchor.weekday()) % 7
        if m.group(1) == "next":
            ahead = ahead or 7
        return _fmt_day(anchor + timedelta(days=ahead))
    return None


TEMPORAL_PHRASE = re.compile(
    r"\b(?:the day (?:before yesterday|after tomorrow)|yesterday|today|tonight|tomorrow|"
    r"last night|this (?:morning|afternoon|evening)|"
    rf"(?:{_NUM_RE})\s+(?:day|week|month|year)s?\s+ago|"
    r"(?:last|this|next|past|coming)\s+(?:week|month|year|" + "|".join(WEEKDAYS) + r")|"
    rf"\d{{1,2}}(?:st|nd|rd|th)?\s+(?:of\s+)?(?:{_MONTH_RE})\.?,?\s+\d{{4}}|"
    rf"(?:{_MONTH_RE})\.?\s+\d{{1,2}}(?:st|nd|rd|th)?,?\s+\d{{4}}|"
    rf"(?:{_MONTH_RE})\.?,?\s+\d{{4}}|"
    r"\d{4}-\d{2}-\d{2})\b",
    re.IGNORECASE,
)


def find_temporal_phrase(text: str) -> str | None:
    """First temporal phrase in free text, used by the offline extractor."""
    m = TEMPORAL_PHRASE.search(text)
    return m.group(0) if m else None
