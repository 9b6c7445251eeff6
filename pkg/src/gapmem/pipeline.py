"""One question end to end: preprocess, loop, answer."""

from __future__ import annotations

import time
from dataclasses import dataclass

from .answer import FinalAnswer, answer
from .iris import IrisConfig, LoopOutcome, QuestionContext, Retriever, preprocess, run, single_pass
from .providers.base import CallLog, LLMProvider


@dataclass
class QuestionResult:
    context: QuestionContext
    outcome: LoopOutcome
    final: FinalAnswer
    log: CallLog
    seconds: float

    @property
    def iterations(self) -> int:
        return self.outcome.state.iteration

    def trace_lines(self, timings: bool = True) -> list[dict]:
        state = self.outcome.state
        lines = [t.to_dict(timings) for t in state.traces]
        for line in lines:
            line["question"] = self.context.question
        summary = {
            "question": self.context.question,
            "entities": list(self.context.entities),
            "temporal": self.context.temporal,
            "temporal_keyword": self.context.temporal_keyword,
            "iterations": state.iteration,
            "terminated_reason": state.terminated_reason.value if state.terminated_reason else None,
            "final": self.final.to_dict(),
            "call_roles": [r.value for r in self.log.roles],
            "loop_calls": self.log.loop_calls(),
            "warnings": state.warnings,
        }
        if timings:
            summary["seconds"] = self.seconds
        return lines + [summary]


def answer_question(
    question: str,
    retriever: Retriever,
    llm: LLMProvider,
    config: IrisConfig | None = None,
    extractor: LLMProvider | None = None,
    category: str | None = None,
) -> QuestionResult:
    """Entity extraction uses ``extractor`` when given, else ``llm``."""
    config = config or IrisConfig()
    log = CallLog()
    start = time.perf_counter()
    ctx = preprocess(question, extractor if extractor is not None else llm, config, log, category)
    if config.iterative:
        outcome = run(ctx, retriever, llm, config, log)
    else:
        outcome = single_pass(ctx, retriever, config, log)
    final = answer(ctx, outcome.evidence, outcome.result, llm, config, log, outcome.state)
    return QuestionResult(ctx, outcome, final, log, time.perf_counter() - start)
