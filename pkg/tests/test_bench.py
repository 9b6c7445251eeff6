import json
import math

import pytest

from gapmem.cli import make_providers
from gapmem.config import CliConfig
from gapmem.eval.bench import (
    MEMORIES,
    VARIANTS,
    build_stores,
    judge_answer,
    run_ablation,
    run_grid,
    variant_config,
    write_report,
)
from gapmem.eval.lexical import BM25RawRetriever
from gapmem.eval.locomo import QARecord, load_locomo
from gapmem.memory_store import RawTurn
from gapmem.providers.scripted import ScriptedProvider

from helpers import PACKAGE_FIXTURE


def key_schema(obj):
    """Nested dict keys; lists are opaque and checked separately."""
    if isinstance(obj, dict):
        return {k: key_schema(v) for k, v in obj.items() if k != "config"}
    return "list" if isinstance(obj, list) else None


@pytest.fixture(scope="module")
def corpus():
    return load_locomo(PACKAGE_FIXTURE).conversations


@pytest.fixture(scope="module")
def grid(corpus):
    providers = make_providers(CliConfig())
    return run_grid(corpus, providers)


def test_grid_covers_every_cell_without_failures(grid):
    assert [(r.variant, r.memory) for r in grid] == [(v, m) for v in VARIANTS for m in MEMORIES]
    assert all(r.failures == 0 and len(r.rows) == 20 for r in grid)


def test_reports_share_one_schema(grid):
    shapes = {json.dumps(key_schema(r.to_dict()), sort_keys=True) for r in grid}
    assert len(shapes) == 1
    # per-question retrieval is keyed by the iterations actually run
    rows = {json.dumps(key_schema({**row, "retrieval": None}), sort_keys=True) for r in grid for row in r.rows}
    assert len(rows) == 1
    blocks = {tuple(sorted(b)) for r in grid for row in r.rows for b in row["retrieval"].values()}
    assert len(blocks) == 1
    entries = {tuple(sorted(v)) for r in grid for row in r.rows for v in row["validation"]}
    assert len(entries) == 1
    assert len({tuple(sorted(r.config)) for r in grid}) == 1


def test_single_pass_makes_one_retrieval_round(grid):
    for r in grid:
        if r.variant == "single_pass":
            assert {row["retrieval_rounds"] for row in r.rows} == {1}
            assert {row["calls"] for row in r.rows} == {1}
            assert all(row["validation"] == [] for row in r.rows)


def test_expansion_only_for_full_memory(grid):
    for r in grid:
        total = sum(row["graph_expansions"] for row in r.rows)
        assert (total > 0) is (r.memory == "full_memory"), (r.variant, r.memory)


def test_raw_only_answers_ground_on_turns(grid):
    r = next(r for r in grid if r.memory == "raw_only" and r.variant == "full")
    assert any(row["validation"] for row in r.rows)
    assert r.config["graph_expansion"] is False


def test_loop_call_bound_holds_in_grid(grid):
    for r in grid:
        k = r.config["max_iterations"]
        for row in r.rows:
            assert row["calls"] <= 3 * k + 3
            assert row["calls"] >= (2 if r.variant != "single_pass" else 1) or row["abstained"]


def test_report_aggregates(grid):
    r = next(r for r in grid if r.variant == "full" and r.memory == "full_memory")
    agg = r.aggregates
    assert agg["overall"]["n"] == 20
    assert sum(agg[name]["n"] for name in agg if name != "overall") == 20
    assert list(r.retrieval) == ["1", "2", "3"] and r.retrieval["1"]["n"] > 0
    assert "mock providers" in r.notes[0]
    assert all("latency" not in row for row in r.rows)
    assert 0.0 <= r.validation["binary_agreement"] <= 1.0


def test_bench_runs_are_deterministic(corpus, tmp_path):
    outs = []
    for n in range(2):
        providers = make_providers(CliConfig())
        report = run_ablation("full", "full_memory", corpus, providers)
        paths = write_report(report, tmp_path / str(n))
        outs.append({k: p.read_bytes() for k, p in paths.items()})
    assert outs[0] == outs[1]
    assert set(outs[0]) == {"report", "table", "validation"}


def test_parallel_matches_serial(corpus):
    providers = make_providers(CliConfig())
    stores = build_stores(corpus, providers)
    a = run_ablation("tiered", "index_only", corpus, providers, stores=stores, jobs=1)
    b = run_ablation("tiered", "index_only", corpus, providers, stores=stores, jobs=4)
    assert a.to_json() == b.to_json()


def test_failed_question_is_recorded(corpus):
    providers = make_providers(CliConfig())
    providers.llm = ScriptedProvider([])  # strict: the first loop call raises
    stores = build_stores(corpus, make_providers(CliConfig()))
    report = run_ablation("full", "index_only", corpus[:1], providers, stores=stores)
    assert report.failures == len(report.rows) == 12
    assert report.rows[0]["error"].startswith("UnmatchedRequestError")
    assert report.aggregates["overall"]["n"] == 0


def test_variant_config():
    cfg = variant_config("basic_loop", "index_only")
    assert cfg.iterative and not cfg.tiered and not cfg.reasoning_chain and not cfg.graph_expansion
    with pytest.raises(ValueError):
        variant_config("nope", "index_only")
    with pytest.raises(ValueError):
        variant_config("full", "nope")


def test_judge_answer_paths():
    rec = QARecord("x:q0", "When?", "7 May 2023", 3)
    assert judge_answer(rec, "May 7, 2023", None) == 1
    scripted = ScriptedProvider([{"role": "JUDGE", "response": '{"score": 0, "reason": "no"}'}])
    assert judge_answer(rec, "May 7, 2023", scripted) == 0
    junk = ScriptedProvider([{"role": "JUDGE", "response": "dunno"}])
    assert judge_answer(rec, "May 7, 2023", junk) == 1


def test_bm25_hand_values():
    turns = [RawTurn("D1:1", "A", "1 May 2023", "dance studio"), RawTurn("D1:2", "B", "", "dance dance"),
             RawTurn("D1:3", "A", "", "bank job")]
    bm = BM25RawRetriever(turns)
    idf = math.log(1.6)
    assert bm.score("dance") == pytest.approx([idf, idf * 2 * 2.2 / 3.2, 0.0])
    hits = bm.search("dance", 2)
    assert [t.tuple_id for t, _ in hits] == ["raw:D1:2", "raw:D1:1"]
    assert hits[1][0].render() == "A said dance studio (time: 2023-05-01)"
    assert bm.expand({"raw:D1:1": 1.0}) == []
    with pytest.raises(ValueError):
        bm.search("dance", 0)
