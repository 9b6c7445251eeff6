"""Command-line entry point.

Exit codes: 0 success, 2 usage or IO error, 3 provider error, 4 benchmark
finished with failed questions.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime
from pathlib import Path

from . import __version__
from .config import CliConfig, ConfigError, load_config
from .eval.bench import (
    MEMORIES,
    VARIANTS,
    Providers,
    build_stores,
    make_retriever,
    run_ablation,
    variant_config,
    write_report,
)
from .eval.locomo import Conversation, LocomoError, load_locomo
from .eval.oracle import CoverageChecker, LLMChecker, OracleTier, ValidationRow, validate_classifier
from .memory_store import MemoryStore, SnapshotError, StoreError, build_store
from .pipeline import answer_question
from .providers.base import CachingEmbedder, CallRole, LLMRequest, ProviderError
from .providers.embedding import HashEmbeddingProvider
from .providers.heuristic import HeuristicLLM
from .providers.http import HTTPChatProvider, HTTPEmbeddingProvider
from .providers.scripted import ScriptedProvider, UnmatchedRequestError
from .tiers import Tier

EXIT_OK, EXIT_USAGE, EXIT_PROVIDER, EXIT_PARTIAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _UtilityFallback:
    """Lets a strict script delegate only entity extraction and judging."""

    def __init__(self) -> None:
        self.inner = HeuristicLLM()

    def complete(self, request: LLMRequest) -> str:
        if request.role in (CallRole.EXTRACT, CallRole.JUDGE):
            return self.inner.complete(request)
        raise UnmatchedRequestError(f"no script entry for {request.role.value} request:\n{request.user[:500]}")


def make_providers(cfg: CliConfig, script: str | None = None) -> Providers:
    if cfg.mode == "live":
        llm = HTTPChatProvider(cfg.providers)
        embedder = CachingEmbedder(HTTPEmbeddingProvider(cfg.providers))
        return Providers(llm, embedder, judge=llm, checker=LLMChecker(llm), mock=False)
    embedder = CachingEmbedder(HashEmbeddingProvider(cfg.memory.hash_dimension))
    heuristic = HeuristicLLM()
    llm = heuristic
    if script:
        try:
            data = json.loads(Path(script).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read script {script}: {exc}") from exc
        strict = data.get("strict", True) if isinstance(data, dict) else True
        entries = data["entries"] if isinstance(data, dict) else data
        llm = ScriptedProvider(entries, strict=strict, fallback=_UtilityFallback() if strict else heuristic)
    return Providers(llm, embedder, judge=heuristic, checker=CoverageChecker(), mock=True)


def _select(report_convs: list[Conversation], sample: str | None, path: str) -> Conversation:
    if sample is not None:
        for conv in report_convs:
            if conv.sample_id == sample:
                return conv
        raise UsageError(f"sample {sample!r} not found in {path}")
    if len(report_convs) != 1:
        ids = ", ".join(c.sample_id for c in report_convs)
        raise UsageError(f"{path} holds {len(report_convs)} conversations ({ids}); pick one with --sample")
    return report_convs[0]


def _load_conversations(path: str):
    if not Path(path).exists():
        raise UsageError(f"no such file: {path}")
    try:
        return load_locomo(path)
    except LocomoError as exc:
        raise UsageError(str(exc)) from exc


def _load_snapshot(path: str, providers: Providers) -> MemoryStore:
    if not Path(path).exists():
        raise UsageError(f"no such snapshot: {path}")
    store = MemoryStore.load(path)
    if store.dimension is not None and store.dimension != providers.embedder.dimension:
        raise UsageError(
            f"snapshot {path} has embedding dimension {store.dimension}, "
            f"the configured embedder has {providers.embedder.dimension}"
        )
    store.warm()
    return store


def _out_dir(cfg: CliConfig) -> Path:
    if cfg.out:
        return Path(cfg.out)
    return Path("runs") / datetime.now().strftime("%Y%m%d-%H%M%S")


# ---------------------------------------------------------------------------


def cmd_ingest(args, cfg: CliConfig) -> int:
    loaded = _load_conversations(args.conversation)
    conv = _select(loaded.conversations, args.sample, args.conversation)
    providers = make_providers(cfg, args.script)
    store = build_store(conv.turns, providers.llm, providers.embedder, cfg.memory.edge_threshold,
                        retries=cfg.iris.retries)
    store.save(args.snapshot)
    edges = store.edges
    semantic = sum(e.kind.value == "SEMANTIC" for e in edges)
    print(f"conversation: {conv.sample_id}")
    print(f"turns: {len(store.raw)}")
    print(f"tuples: {len(store.index)}")
    print(f"edges: {len(edges)} (same-source {len(edges) - semantic}, semantic {semantic})")
    print(f"snapshot: {args.snapshot}")
    return EXIT_OK


def cmd_query(args, cfg: CliConfig) -> int:
    if not args.snapshot:
        raise UsageError("query needs --snapshot")
    providers = make_providers(cfg, args.script)
    store = _load_snapshot(args.snapshot, providers)
    config = variant_config(args.variant, args.memory, cfg.iris)
    conv = Conversation("snapshot", list(store.raw.values()))
    retriever = make_retriever(args.memory, store, conv, providers.embedder, (cfg.memory.bm25_k1, cfg.memory.bm25_b))
    result = answer_question(args.question, retriever, providers.llm, config)
    final = result.final
    print(final.text)
    print(f"tier: {final.tier.value}")
    print(f"confidence: {final.confidence:.2f}")
    print(f"iterations: {result.iterations}")
    print(f"calls: {result.log.loop_calls()}")
    if final.diagnostic and not final.abstained:
        print(f"note: {final.diagnostic}")
    if args.trace:
        lines = "".join(json.dumps(line, sort_keys=True) + "\n" for line in result.trace_lines())
        if args.trace == "-":
            sys.stdout.write(lines)
        else:
            Path(args.trace).parent.mkdir(parents=True, exist_ok=True)
            Path(args.trace).write_text(lines, encoding="utf-8")
    return EXIT_OK


def cmd_bench(args, cfg: CliConfig) -> int:
    loaded = _load_conversations(args.dataset)
    for msg in loaded.skipped:
        print(f"skipped {msg}", file=sys.stderr)
    providers = make_providers(cfg, args.script)
    stores = None
    if args.snapshot:
        if len(loaded.conversations) != 1:
            raise UsageError("--snapshot can only be combined with a single-conversation dataset")
        stores = {loaded.conversations[0].sample_id: _load_snapshot(args.snapshot, providers)}
    variants = list(VARIANTS) if args.variant == "all" else [args.variant]
    memories = list(MEMORIES) if args.memory == "all" else [args.memory]
    if stores is None and any(m != "raw_only" for m in memories):
        stores = build_stores(loaded.conversations, providers, cfg.memory.edge_threshold, cfg.iris.retries)
    elif stores is None:
        stores = {c.sample_id: MemoryStore() for c in loaded.conversations}
    out = _out_dir(cfg)
    failures = 0
    for v in variants:
        for m in memories:
            report = run_ablation(v, m, loaded.conversations, providers, cfg.iris, stores, args.jobs,
                                  (cfg.memory.bm25_k1, cfg.memory.bm25_b))
            paths = write_report(report, out)
            failures += report.failures
            overall = report.aggregates["overall"]
            acc = overall["judge_accuracy"]
            print(f"{v:<12} {m:<12} n={overall['n']:<4} judge={'n/a' if acc is None else f'{acc:.3f}'} "
                  f"failures={report.failures} -> {paths['report']}")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_validate(args, cfg: CliConfig) -> int:
    path = Path(args.traces)
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    rows, skipped = [], 0
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            rows.append(ValidationRow(Tier(rec["tier"]), float(rec["confidence"]), OracleTier(rec["oracle"])))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError):
            skipped += 1
    stats = validate_classifier(rows)
    stats["skipped"] = skipped
    text = json.dumps(stats, sort_keys=True, indent=1) + "\n"
    sys.stdout.write(text)
    if cfg.out:
        target = Path(cfg.out)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_config(args, cfg: CliConfig) -> int:
    print(json.dumps(cfg.to_dict(), sort_keys=True, indent=1))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--providers", choices=["mock", "live"], help="provider backend (default mock)")
    common.add_argument("--script", help="scripted LLM responses (JSON) for mock mode")
    common.add_argument("--max-iterations", type=int, help="override the iteration budget")
    common.add_argument("--out", help="output directory (bench) or file (validate)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gapmem", description="Evidence-gap driven conversational memory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="build a memory snapshot from a conversation file")
    p.add_argument("conversation", help="LoCoMo-format JSON")
    p.add_argument("--snapshot", required=True, help="snapshot file to write")
    p.add_argument("--sample", help="sample_id to ingest when the file holds several")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", parents=[common], help="answer one question against a snapshot")
    p.add_argument("question")
    p.add_argument("--snapshot", help="snapshot file")
    p.add_argument("--variant", choices=list(VARIANTS), default="full")
    p.add_argument("--memory", choices=list(MEMORIES), default="full_memory")
    p.add_argument("--trace", help="write the JSONL trace here ('-' for stdout)")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", parents=[common], help="run variant x memory benchmarks")
    p.add_argument("dataset", help="LoCoMo-format JSON with qa records")
    p.add_argument("--snapshot", help="prebuilt snapshot for a single-conversation dataset")
    p.add_argument("--variant", choices=list(VARIANTS) + ["all"], default="full")
    p.add_argument("--memory", choices=list(MEMORIES) + ["all"], default="full_memory")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", parents=[common], help="classifier-vs-oracle statistics from bench traces")
    p.add_argument("traces", help="*.validation.jsonl written by bench")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("config", parents=[common], help="print the effective configuration")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        import logging

        logging.basicConfig(level=logging.DEBUG)
    try:
        cfg = load_config(
            args.config,
            {"mode": args.providers, "out": args.out, "iris": {"max_iterations": args.max_iterations}},
        )
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be at least 1")
        return args.func(args, cfg)
    except (UsageError, ConfigError, SnapshotError, StoreError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProviderError, UnmatchedRequestError) as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER


if __name__ == "__main__":
    sys.exit(main())
