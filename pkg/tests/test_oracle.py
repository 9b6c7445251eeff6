from fractions import Fraction

import pytest
from scipy.stats import spearmanr

from gapmem.eval.locomo import QARecord
from gapmem.eval.oracle import (
    CoverageChecker,
    LLMChecker,
    OracleTier,
    TableChecker,
    ValidationRow,
    oracle_label,
    validate_classifier,
)
from gapmem.providers.scripted import ScriptedProvider
from gapmem.tiers import Tier

from helpers import make_tuples
from oracle_cases import coverage_records


@pytest.mark.parametrize("record,turns,total", coverage_records())
def test_exact_iff_total_coverage(record, turns, total):
    label = oracle_label(turns, record)
    assert (label.tier is OracleTier.EXACT) is total
    if not total:
        assert label.tier is OracleTier.PARTIAL_OR_NONE


def test_label_from_tuples_projects_source_turns():
    rec = QARecord("x:q0", "q?", "a", 1, ("D1:1", "D1:2"))
    facts = make_tuples(["Jon|a|b", "Jon|c|d"])  # turns D1:1, D1:2
    assert oracle_label(facts, rec).tier is OracleTier.EXACT
    assert oracle_label(facts[:1], rec).tier is OracleTier.PARTIAL_OR_NONE


def test_checkers_only_consulted_below_full_coverage():
    rec = QARecord("x:q0", "q?", "a", 1, ("D1:1", "D1:2"))
    assert oracle_label(["D1:1"], rec, TableChecker({"x:q0": True})).tier is OracleTier.INFERRABLE
    assert oracle_label(["D1:1"], rec, TableChecker({"x:q0": False})).tier is OracleTier.PARTIAL_OR_NONE
    failed = oracle_label(["D1:1"], rec, TableChecker({}))
    assert failed.checker_failed and failed.tier is OracleTier.PARTIAL_OR_NONE
    assert oracle_label(["D1:1", "D1:2"], rec, TableChecker({})).tier is OracleTier.EXACT


def test_coverage_checker_fraction():
    rec = QARecord("x:q0", "q?", "a", 1, ("D1:1", "D1:2"))
    assert oracle_label(["D1:1"], rec, CoverageChecker(0.5)).tier is OracleTier.INFERRABLE
    assert oracle_label(["D1:1"], rec, CoverageChecker(0.6)).tier is OracleTier.PARTIAL_OR_NONE
    empty = QARecord("x:q1", "q?", "a", 5, ())
    assert oracle_label(["D1:1"], empty, CoverageChecker()).tier is OracleTier.PARTIAL_OR_NONE


@pytest.mark.parametrize(
    "reply,tier,failed",
    [
        ('{"inferable": true}', OracleTier.INFERRABLE, False),
        ('Sure. {"inferable": false}', OracleTier.PARTIAL_OR_NONE, False),
        ("Yes, it can.", OracleTier.INFERRABLE, False),
        ("maybe", OracleTier.PARTIAL_OR_NONE, True),
    ],
)
def test_llm_checker(reply, tier, failed):
    rec = QARecord("x:q0", "q?", "a", 1, ("D1:1", "D1:2"))
    checker = LLMChecker(ScriptedProvider([{"role": "JUDGE", "response": reply}]))
    label = oracle_label(make_tuples(["Jon|a|b"]), rec, checker)
    assert (label.tier, label.checker_failed) == (tier, failed)


def rows50():
    """Seven blocks; the expected statistics below are worked out by hand."""
    blocks = [
        (20, Tier.EXACT, 0.9, OracleTier.EXACT),
        (5, Tier.EXACT, 0.9, OracleTier.INFERRABLE),
        (5, Tier.EXACT, 0.8, OracleTier.PARTIAL_OR_NONE),
        (5, Tier.INFERRABLE, 0.72, OracleTier.INFERRABLE),
        (5, Tier.INFERRABLE, 0.6, OracleTier.PARTIAL_OR_NONE),
        (5, Tier.PARTIAL, 0.4, OracleTier.EXACT),
        (5, Tier.NONE, 0.0, OracleTier.PARTIAL_OR_NONE),
    ]
    return [ValidationRow(t, c, o) for n, t, c, o in blocks for _ in range(n)]


def test_validation_statistics_hand_computed():
    rows = rows50()
    stats = validate_classifier(rows)
    exact = {
        "rows": 50,
        "binary_agreement": Fraction(35, 50),
        "precision": Fraction(30, 40),
        "recall": Fraction(30, 35),
        "exact_precision": Fraction(25, 30),
        "exact_precision_strict": Fraction(20, 30),
        "precision_at_0.85": Fraction(1),
        "commitments_at_0.85": 25,
        "precision_at_0.7": Fraction(30, 35),
        "commitments_at_0.7": 35,
        "pr_auc_random": Fraction(35, 50),
        # step sum: 25/35 * 1 + 5/35 * 30/35 + 5/35 * 35/45
        "pr_auc": Fraction(418, 441),
    }
    for key, value in exact.items():
        assert stats[key] == pytest.approx(float(value), abs=1e-12), key
    rho = spearmanr([r.confidence for r in rows], [r.oracle.ordinal for r in rows]).statistic
    assert stats["spearman"] == pytest.approx(rho, abs=1e-12) and stats["spearman_defined"]


def test_validation_undefined_values():
    stats = validate_classifier([])
    assert stats["precision"] is None and stats["spearman"] is None and not stats["spearman_defined"]
    one = validate_classifier([ValidationRow(Tier.PARTIAL, 0.3, OracleTier.PARTIAL_OR_NONE)] * 3)
    assert one["precision"] is None and one["pr_auc"] is None and one["binary_agreement"] == 1.0
