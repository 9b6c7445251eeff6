from .base import (
    LOOP_ROLES,
    CachingEmbedder,
    CallLog,
    CallRole,
    EmbeddingProvider,
    LLMProvider,
    LLMRequest,
    LLMResponse,
    ProviderError,
    call_llm,
)
from .embedding import HashEmbeddingProvider
from .heuristic import HeuristicLLM, rule_judge
from .prompts import (
    parse_judge_response,
    parse_sufficiency_response,
    render_answer_prompt,
    render_judge_prompt,
    render_refinement_prompt,
    render_sufficiency_prompt,
)
from .scripted import ScriptedProvider, ScriptEntry, UnmatchedRequestError

__all__ = [
    "LOOP_ROLES",
    "CachingEmbedder",
    "CallLog",
    "CallRole",
    "EmbeddingProvider",
    "HashEmbeddingProvider",
    "HeuristicLLM",
    "LLMProvider",
    "LLMRequest",
    "LLMResponse",
    "ProviderError",
    "ScriptEntry",
    "ScriptedProvider",
    "UnmatchedRequestError",
    "call_llm",
    "parse_judge_response",
    "parse_sufficiency_response",
    "render_answer_prompt",
    "render_judge_prompt",
    "render_refinement_prompt",
    "render_sufficiency_prompt",
    "rule_judge",
]
