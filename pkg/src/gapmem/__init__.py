"""Conversational memory with a closed retrieval loop driven by evidence-sufficiency signals."""

from .answer import ABSTENTION, FinalAnswer, ReasoningChain
from .iris import IndexRetriever, IrisConfig, QuestionContext, preprocess, run
from .memory_store import IndexTuple, MemoryStore, RawTurn, build_store
from .pipeline import QuestionResult, answer_question
from .tiers import SufficiencyResult, Tier

__version__ = "0.1.0"

__all__ = [
    "ABSTENTION",
    "FinalAnswer",
    "IndexRetriever",
    "IndexTuple",
    "IrisConfig",
    "MemoryStore",
    "QuestionContext",
    "QuestionResult",
    "RawTurn",
    "ReasoningChain",
    "SufficiencyResult",
    "Tier",
    "answer_question",
    "build_store",
    "preprocess",
    "run",
]
