"""Live providers speaking the JSON chat-completion / embeddings wire format."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import httpx
import numpy as np

from .base import LLMRequest, ProviderError

API_KEY_ENV = "GAPMEM_API_KEY"
BASE_URL_ENV = "GAPMEM_BASE_URL"


@dataclass
class ProviderConfig:
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = API_KEY_ENV
    # "full" is used for ANSWER only; every other role uses "light".
    models: dict[str, str] = field(default_factory=lambda: {"full": "gpt-4o", "light": "gpt-4o-mini"})
    embedding_model: str = "text-embedding-3-small"
    embedding_dimension: int = 1536
    temperature: float = 0.3
    timeout: float = 60.0
    retries: int = 1


def _api_key(config: ProviderConfig) -> str:
    key = os.environ.get(config.api_key_env)
    if not key:
        raise ProviderError(f"environment variable {config.api_key_env} is not set")
    return key


class HTTPChatProvider:
    """POST ``{base_url}/chat/completions`` with bearer auth."""

    def __init__(self, config: ProviderConfig, client: httpx.Client | None = None):
        self.config = config
        self._key = _api_key(config)
        self._client = client or httpx.Client(timeout=config.timeout)

    def payload(self, request: LLMRequest) -> dict:
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": request.user})
        model = self.config.models.get(request.model_tag, request.model_tag)
        return {"model": model, "temperature": request.temperature, "messages": messages}

    def complete(self, request: LLMRequest) -> str:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        try:
            resp = self._client.post(
                url, json=self.payload(request), headers={"Authorization": f"Bearer {self._key}"}
            )
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"chat completion failed: {exc}") from exc


class HTTPEmbeddingProvider:
    """POST ``{base_url}/embeddings``."""

    def __init__(self, config: ProviderConfig, client: httpx.Client | None = None):
        self.config = config
        self.dimension = config.embedding_dimension
        self._key = _api_key(config)
        self._client = client or httpx.Client(timeout=config.timeout)

    def embed(self, text: str) -> np.ndarray:
        url = self.config.base_url.rstrip("/") + "/embeddings"
        try:
            resp = self._client.post(
                url,
                json={"model": self.config.embedding_model, "input": text},
                headers={"Authorization": f"Bearer {self._key}"},
            )
            resp.raise_for_status()
            vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=float)
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"embedding request failed: {exc}") from exc
        if vec.shape != (self.dimension,) or not np.all(np.isfinite(vec)):
            raise ProviderError(f"embedding has shape {vec.shape}, expected ({self.dimension},)")
        return vec
