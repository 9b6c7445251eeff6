"""Ablation runner: variants x memory layouts over a LoCoMo-format dataset."""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..iris import IndexRetriever, IrisConfig, Retriever
from ..memory_store import MemoryStore, build_store
from ..pipeline import QuestionResult, answer_question
from ..providers.base import CallLog, EmbeddingProvider, LLMProvider, ProviderError, call_llm
from ..providers.heuristic import rule_judge
from ..providers.prompts import parse_judge_response, render_judge_prompt
from ..tiers import Tier
from .lexical import BM25RawRetriever
from .locomo import CATEGORIES, Conversation, QARecord
from .metrics import mean, ndcg_at_k, recall_at_k, rouge_l, token_f1
from .oracle import InferenceChecker, OracleTier, ValidationRow, oracle_label, validate_classifier

logger = logging.getLogger(__name__)

VARIANTS: dict[str, dict[str, bool]] = {
    "single_pass": dict(iterative=False, tiered=False, temporal_adaptation=False, entity_tracking=False,
                        dual_path=False, abstention=False, reasoning_chain=False),
    "basic_loop": dict(iterative=True, tiered=False, temporal_adaptation=False, entity_tracking=False,
                       dual_path=False, abstention=False, reasoning_chain=False),
    "tiered": dict(iterative=True, tiered=True, temporal_adaptation=False, entity_tracking=False,
                   dual_path=False, abstention=False, reasoning_chain=True),
    "temporal": dict(iterative=True, tiered=True, temporal_adaptation=True, entity_tracking=False,
                     dual_path=False, abstention=False, reasoning_chain=True),
    "full": dict(iterative=True, tiered=True, temporal_adaptation=True, entity_tracking=True,
                 dual_path=True, abstention=True, reasoning_chain=True),
}
MEMORIES = ("raw_only", "index_only", "full_memory")
RETRIEVAL_KS = (5, 10, 20)


def variant_config(variant: str, memory: str, base: IrisConfig | None = None) -> IrisConfig:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
    if memory not in MEMORIES:
        raise ValueError(f"unknown memory layout {memory!r}; choose from {list(MEMORIES)}")
    switches = dict(VARIANTS[variant])
    switches["graph_expansion"] = memory == "full_memory"
    return dataclasses.replace(base or IrisConfig(), **switches)


@dataclass
class Providers:
    llm: LLMProvider
    embedder: EmbeddingProvider
    judge: LLMProvider | None = None
    checker: InferenceChecker | None = None
    mock: bool = True


@dataclass
class RunReport:
    variant: str
    memory: str
    rows: list[dict]
    aggregates: dict
    retrieval: dict
    validation: dict
    config: dict
    failures: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "memory": self.memory,
            "config": self.config,
            "failures": self.failures,
            "aggregates": self.aggregates,
            "retrieval": self.retrieval,
            "validation": self.validation,
            "questions": self.rows,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, ensure_ascii=False) + "\n"

    def validation_rows(self) -> list[dict]:
        out = []
        for row in self.rows:
            for v in row.get("validation", []):
                out.append({"qid": row["qid"], "category": row["category"], **v})
        return out

    def table(self) -> str:
        head = f"{'Category':<13}{'N':>5}{'Judge Acc':>11}{'F1':>8}{'ROUGE-L':>9}{'Iters':>7}{'Calls':>7}"
        lines = [f"variant={self.variant} memory={self.memory}", head, "-" * len(head)]
        for name, agg in self.aggregates.items():
            lines.append(
                f"{name:<13}{agg['n']:>5}{_pct(agg['judge_accuracy']):>11}{_num(agg['f1']):>8}"
                f"{_num(agg['rouge_l']):>9}{_num(agg['iterations'], 2):>7}{_num(agg['calls'], 2):>7}"
            )
        lines.append("")
        lines.append(f"{'Iter':<6}{'N':>5}" + "".join(f"{'R@' + str(k):>8}" for k in RETRIEVAL_KS)
                     + "".join(f"{'nDCG@' + str(k):>9}" for k in RETRIEVAL_KS))
        for it, block in self.retrieval.items():
            cells = "".join(f"{_num(block[f'recall@{k}']):>8}" for k in RETRIEVAL_KS)
            cells += "".join(f"{_num(block[f'ndcg@{k}']):>9}" for k in RETRIEVAL_KS)
            lines.append(f"{it:<6}{block['n']:>5}{cells}")
        lines.append("")
        for key in ("binary_agreement", "exact_precision", "precision_at_0.85", "precision_at_0.7",
                    "spearman", "pr_auc"):
            lines.append(f"{key:<18}{_num(self.validation.get(key))}")
        return "\n".join(lines) + "\n"


def _pct(x: float | None) -> str:
    return "n/a" if x is None else f"{100 * x:.1f}%"


def _num(x: float | None, digits: int = 3) -> str:
    return "n/a" if x is None else f"{x:.{digits}f}"


def judge_answer(record: QARecord, prediction: str, judge: LLMProvider | None) -> int:
    """Binary judge score; the rule judge stands in when no provider is given
    or the provider reply is unreadable."""
    if judge is None:
        return rule_judge(record.gold_answer, prediction)
    try:
        reply = call_llm(judge, render_judge_prompt(record.question, record.gold_answer, prediction), CallLog())
        parsed = parse_judge_response(reply.text)
    except ProviderError:
        parsed = None
    return parsed[0] if parsed else rule_judge(record.gold_answer, prediction)


def _row(record: QARecord, result: QuestionResult, providers: Providers) -> dict:
    state = result.outcome.state
    final = result.final
    gold = set(record.evidence_dia_ids)
    retrieval = {}
    validation = []
    for trace in state.traces:
        if gold:
            block = {}
            for k in RETRIEVAL_KS:
                block[f"recall@{k}"] = recall_at_k(trace.ranked_turns, gold, k)
                block[f"ndcg@{k}"] = ndcg_at_k(trace.ranked_turns, gold, k)
            retrieval[str(trace.iteration)] = block
        if trace.calibrated is not None:
            label = oracle_label(state.evidence[: trace.evidence_size], record, providers.checker)
            validation.append(
                {
                    "iteration": trace.iteration,
                    "tier": trace.calibrated.tier.value,
                    "confidence": trace.calibrated.confidence,
                    "raw_tier": trace.raw.tier.value if trace.raw else None,
                    "raw_confidence": trace.raw.confidence if trace.raw else None,
                    "oracle": label.tier.value,
                    "checker_failed": label.checker_failed,
                }
            )
    row = {
        "qid": record.qid,
        "category": record.category,
        "question": record.question,
        "gold": record.gold_answer,
        "answer": final.text,
        "abstained": final.abstained,
        "tier": final.tier.value,
        "confidence": final.confidence,
        "iterations": state.iteration,
        "retrieval_rounds": state.retrieval_rounds,
        "graph_expansions": state.graph_expansions,
        "terminated_reason": state.terminated_reason.value if state.terminated_reason else None,
        "calls": result.log.loop_calls(),
        "calls_by_role": result.log.by_role(),
        "f1": token_f1(final.text, record.gold_answer),
        "rouge_l": rouge_l(final.text, record.gold_answer),
        "judge": judge_answer(record, final.text, providers.judge),
        "retrieval": retrieval,
        "validation": validation,
        "error": None,
    }
    if not providers.mock:
        row["latency"] = result.seconds
    return row


def _failed_row(record: QARecord, exc: Exception) -> dict:
    return {
        "qid": record.qid,
        "category": record.category,
        "question": record.question,
        "gold": record.gold_answer,
        "error": f"{type(exc).__name__}: {exc}",
    }


def aggregate(rows: Sequence[dict]) -> dict:
    """Overall and per-category means over successful rows."""
    ok = [r for r in rows if r.get("error") is None]
    groups = {"overall": ok}
    for cat, name in CATEGORIES.items():
        groups[name] = [r for r in ok if r["category"] == cat]
    out = {}
    for name, group in groups.items():
        agg = {
            "n": len(group),
            "f1": mean([r["f1"] for r in group]),
            "rouge_l": mean([r["rouge_l"] for r in group]),
            "judge_accuracy": mean([r["judge"] for r in group]),
            "iterations": mean([r["iterations"] for r in group]),
            "calls": mean([r["calls"] for r in group]),
        }
        if any("latency" in r for r in group):
            agg["latency"] = mean([r.get("latency") for r in group])
        out[name] = agg
    return out


def aggregate_retrieval(rows: Sequence[dict], max_iterations: int) -> dict:
    """Per-iteration means over questions that reached that iteration and
    have gold evidence. ``excluded`` counts reached-but-no-gold questions.
    Every iteration up to the budget gets a block, so all reports share one
    schema; unreached iterations have n = 0 and null means."""
    ok = [r for r in rows if r.get("error") is None]
    out = {}
    for i in range(1, max_iterations + 1):
        reached = [r for r in ok if r["iterations"] >= i]
        blocks = [r["retrieval"][str(i)] for r in reached if str(i) in r["retrieval"]]
        block = {"n": len(blocks), "excluded": len(reached) - len(blocks)}
        for k in RETRIEVAL_KS:
            block[f"recall@{k}"] = mean([b[f"recall@{k}"] for b in blocks])
            block[f"ndcg@{k}"] = mean([b[f"ndcg@{k}"] for b in blocks])
        out[str(i)] = block
    return out


def validation_stats(rows: Sequence[dict]) -> dict:
    vrows = []
    for r in rows:
        for v in r.get("validation", []) or []:
            vrows.append(ValidationRow(Tier(v["tier"]), float(v["confidence"]), OracleTier(v["oracle"])))
    return validate_classifier(vrows)


def make_retriever(
    memory: str,
    store: MemoryStore,
    conv: Conversation,
    embedder: EmbeddingProvider,
    bm25: tuple[float, float] = (1.2, 0.75),
) -> Retriever:
    if memory == "raw_only":
        return BM25RawRetriever(conv.turns, *bm25)
    return IndexRetriever(store, embedder)


def build_stores(conversations: Sequence[Conversation], providers: Providers, edge_threshold: float = 0.80,
                 retries: int = 1) -> dict[str, MemoryStore]:
    stores = {}
    for conv in conversations:
        store = build_store(conv.turns, providers.llm, providers.embedder, edge_threshold, retries=retries)
        store.warm()
        stores[conv.sample_id] = store
    return stores


def run_ablation(
    variant: str,
    memory: str,
    conversations: Sequence[Conversation],
    providers: Providers,
    base_config: IrisConfig | None = None,
    stores: dict[str, MemoryStore] | None = None,
    jobs: int = 1,
    bm25: tuple[float, float] = (1.2, 0.75),
) -> RunReport:
    config = variant_config(variant, memory, base_config)
    stores = stores if stores is not None else build_stores(conversations, providers, retries=config.retries)
    work = []
    for conv in conversations:
        retriever = make_retriever(memory, stores[conv.sample_id], conv, providers.embedder, bm25)
        work.extend((record, retriever) for record in conv.qa)

    def one(item: tuple[QARecord, Retriever]) -> dict:
        record, retriever = item
        try:
            result = answer_question(record.question, retriever, providers.llm, config,
                                     category=record.category_name)
            return _row(record, result, providers)
        except Exception as exc:  # a failed question is recorded, never fatal
            logger.warning("question %s failed: %s", record.qid, exc)
            return _failed_row(record, exc)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, work))
    else:
        rows = [one(item) for item in work]
    cfg = dataclasses.asdict(config)
    cfg["temporal_keywords"] = list(config.temporal_keywords)
    return RunReport(
        variant=variant,
        memory=memory,
        rows=rows,
        aggregates=aggregate(rows),
        retrieval=aggregate_retrieval(rows, config.max_iterations),
        validation=validation_stats(rows),
        config=cfg,
        failures=sum(r.get("error") is not None for r in rows),
        notes=[] if not providers.mock else ["mock providers: latency omitted, see calls"],
    )


def run_grid(
    conversations: Sequence[Conversation],
    providers: Providers,
    variants: Sequence[str] = tuple(VARIANTS),
    memories: Sequence[str] = MEMORIES,
    base_config: IrisConfig | None = None,
    jobs: int = 1,
    stores: dict[str, MemoryStore] | None = None,
    bm25: tuple[float, float] = (1.2, 0.75),
) -> list[RunReport]:
    if stores is None:
        stores = build_stores(conversations, providers, retries=(base_config or IrisConfig()).retries)
    return [
        run_ablation(v, m, conversations, providers, base_config, stores, jobs, bm25)
        for v in variants
        for m in memories
    ]


def write_report(report: RunReport, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{report.variant}__{report.memory}"
    paths = {
        "report": out / f"{stem}.json",
        "table": out / f"{stem}.txt",
        "validation": out / f"{stem}.validation.jsonl",
    }
    paths["report"].write_text(report.to_json(), encoding="utf-8")
    paths["table"].write_text(report.table(), encoding="utf-8")
    paths["validation"].write_text(
        "".join(json.dumps(v, sort_keys=True) + "\n" for v in report.validation_rows()), encoding="utf-8"
    )
    return paths
