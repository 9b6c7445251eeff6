from datetime import date

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gapmem.dates import find_temporal_phrase, normalize_time, parse_session_date
from gapmem.text import normalize_text, normalize_tokens
from gapmem.tiers import SufficiencyResult, Tier

ANCHOR = "1:56 pm on 8 May, 2023"  # a Monday

# Hand-resolved against a calendar for the anchor above.
RELATIVE = [
    ("yesterday", "2023-05-07"),
    ("today", "2023-05-08"),
    ("tomorrow", "2023-05-09"),
    ("day before yesterday", "2023-05-06"),
    ("2 days ago", "2023-05-06"),
    ("two days ago", "2023-05-06"),
    ("three weeks ago", "2023-04-17"),
    ("in 2 weeks", "2023-05-22"),
    ("last week", "2023-05-01"),
    ("next week", "2023-05-15"),
    ("last month", "2023-04"),
    ("this month", "2023-05"),
    ("next month", "2023-06"),
    ("a month ago", "2023-04"),
    ("last year", "2022"),
    ("this year", "2023"),
    ("last Friday", "2023-05-05"),
    ("last Saturday", "2023-05-06"),
    ("next Monday", "2023-05-15"),
    ("in February", "2023-02"),
]

ABSOLUTE = [
    ("January 19, 2023", "2023-01-19"),
    ("19 January 2023", "2023-01-19"),
    ("2023-01-19", "2023-01-19"),
    ("February 2023", "2023-02"),
    ("2021", "2021"),
]


@pytest.mark.parametrize("expr,expected", RELATIVE + ABSOLUTE)
def test_normalize_time_table(expr, expected):
    assert normalize_time(expr, ANCHOR) == expected


@pytest.mark.parametrize("expr", ["recently", "soon", "", None, "the other day"])
def test_unresolvable_expressions_give_none(expr):
    assert normalize_time(expr, ANCHOR) is None


def test_parse_session_date():
    assert parse_session_date(ANCHOR) == date(2023, 5, 8)
    assert parse_session_date("2023-01-20") == date(2023, 1, 20)
    assert parse_session_date("garbage") is None
    assert parse_session_date(None) is None


def test_find_temporal_phrase():
    assert find_temporal_phrase("We performed last Saturday and the crowd loved it!") == "last Saturday"
    assert find_temporal_phrase("I lost my job as a banker yesterday.") == "yesterday"
    assert find_temporal_phrase("nothing here") is None


@given(st.integers(min_value=1, max_value=60))
def test_days_ago_matches_date_arithmetic(n):
    from datetime import timedelta

    assert normalize_time(f"{n} days ago", "2023-05-08") == (date(2023, 5, 8) - timedelta(days=n)).isoformat()


def test_normalize_tokens():
    assert normalize_tokens("February, 2023!") == ["february", "2023"]
    assert normalize_tokens("Jon's group") == ["jon", "s", "group"]
    assert normalize_tokens("") == []
    assert normalize_text("  A  b,c ") == "a b c"


@given(st.text())
def test_normalize_tokens_are_lowercase_and_unpunctuated(text):
    for tok in normalize_tokens(text):
        assert tok == tok.lower()
        assert tok.strip() == tok and tok


def test_sufficiency_result_validates_confidence():
    assert SufficiencyResult(Tier.EXACT, 1.0).to_dict()["tier"] == "EXACT"
    for bad in (-0.01, 1.01):
        with pytest.raises(ValueError):
            SufficiencyResult(Tier.PARTIAL, bad)


def test_sufficient_kind():
    assert Tier.EXACT.is_sufficient_kind and Tier.INFERRABLE.is_sufficient_kind
    assert not Tier.PARTIAL.is_sufficient_kind and not Tier.NONE.is_sufficient_kind
