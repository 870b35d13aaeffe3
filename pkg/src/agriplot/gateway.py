"""Client for OpenAI-compatible model endpoints (chat, embeddings, rerank).

All model roles speak the same wire protocol behind one base URL per
endpoint, so a single proxy port can serve every role. Retries use
exponential backoff on 5xx/timeouts only; 4xx errors are never retried.
"""

import random
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import httpx

from .errors import (
    DimInconsistency,
    GatewayHttpError,
    GatewayTimeout,
    LengthMismatch,
    MalformedCompletion,
)

BACKOFF_BASE_S = 0.5

ROLES = ("final", "multimodal", "embedding", "reranker", "triage", "judge")

# Judge and triage run at temperature 0 for reproducibility.
DEFAULT_TEMPERATURE = {"final": 0.2, "triage": 0.0, "judge": 0.0, "multimodal": 0.2}


@dataclass
class ModelEndpoint:
    role: str
    base_url: str
    model_name: str
    api_key: str = ""
    timeout_s: float = 60.0
    max_retries: int = 2

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown endpoint role {self.role!r}")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass
class ChatMessage:
    role: str  # system | user | assistant
    content: str
    image_data_uri: Optional[str] = None

    def to_wire(self) -> dict:
        if self.image_data_uri is None:
            return {"role": self.role, "content": self.content}
        return {
            "role": self.role,
            "content": [
                {"type": "text", "text": self.content},
                {"type": "image_url", "image_url": {"url": self.image_data_uri}},
            ],
        }


@dataclass
class EmbeddingVector:
    values: List[float]

    @property
    def dim(self) -> int:
        return len(self.values)


class Gateway:
    """Shared client; endpoints keyed by role."""

    def __init__(self, endpoints: Dict[str, ModelEndpoint], transport: Optional[httpx.BaseTransport] = None, sleep=time.sleep):
        self.endpoints = endpoints
        self._client = httpx.Client(transport=transport)
        self._sleep = sleep

    def endpoint(self, role: str) -> ModelEndpoint:
        try:
            return self.endpoints[role]
        except KeyError:
            raise GatewayHttpError(0, f"no endpoint configured for role {role!r}") from None

    def close(self):
        self._client.close()

    def probe(self, role: str) -> bool:
        """Reachability check for health reporting; any HTTP < 500 counts."""
        endpoint = self.endpoints.get(role)
        if endpoint is None or not endpoint.base_url:
            return False
        try:
            resp = self._client.get(endpoint.base_url, timeout=2.0)
        except httpx.HTTPError:
            return False
        return resp.status_code < 500

    def _post(self, endpoint: ModelEndpoint, path: str, body: dict) -> dict:
        url = endpoint.base_url.rstrip("/") + path
        headers = {}
        if endpoint.api_key:
            headers["Authorization"] = f"Bearer {endpoint.api_key}"
        attempt = 0
        while True:
            attempt += 1
            try:
                resp = self._client.post(url, json=body, headers=headers, timeout=endpoint.timeout_s)
            except httpx.TimeoutException as exc:
                if attempt > endpoint.max_retries:
                    raise GatewayTimeout(f"{url} timed out after {attempt} attempts") from exc
                self._backoff(attempt)
                continue
            except httpx.HTTPError as exc:
                raise GatewayHttpError(0, f"request to {url} failed: {exc}") from exc
            if resp.status_code >= 500:
                if attempt > endpoint.max_retries:
                    raise GatewayHttpError(resp.status_code, f"{url} returned {resp.status_code} after {attempt} attempts")
                self._backoff(attempt)
                continue
            if resp.status_code >= 400:
                raise GatewayHttpError(resp.status_code, f"{url} returned {resp.status_code}")
            try:
                return resp.json()
            except ValueError as exc:
                raise MalformedCompletion(f"{url} returned non-JSON body") from exc

    def _backoff(self, attempt: int):
        delay = BACKOFF_BASE_S * (2 ** (attempt - 1))
        self._sleep(delay * (0.5 + random.random()))

    def chat_complete(
        self,
        role: str,
        messages: Sequence[ChatMessage],
        temperature: Optional[float] = None,
        max_tokens: Optional[int] = None,
    ) -> str:
        endpoint = self.endpoint(role)
        if temperature is None:
            temperature = DEFAULT_TEMPERATURE.get(role, 0.2)
        body = {
            "model": endpoint.model_name,
            "messages": [m.to_wire() for m in messages],
            "temperature": temperature,
        }
        if max_tokens is not None:
            body["max_tokens"] = max_tokens
        data = self._post(endpoint, "/chat/completions", body)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedCompletion(f"completion response missing choices: {data!r:.200}") from exc
        if not isinstance(content, str):
            raise MalformedCompletion("completion content is not a string")
        return content

    def embed_texts(self, texts: Sequence[str], role: str = "embedding") -> List[EmbeddingVector]:
        if not texts:
            raise ValueError("embed_texts requires at least one input")
        endpoint = self.endpoint(role)
        body = {"model": endpoint.model_name, "input": list(texts)}
        data = self._post(endpoint, "/embeddings", body)
        try:
            items = sorted(data["data"], key=lambda d: d["index"])
            vectors = [EmbeddingVector([float(v) for v in item["embedding"]]) for item in items]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedCompletion(f"bad embeddings response: {exc}") from exc
        if len(vectors) != len(texts):
            raise MalformedCompletion(f"expected {len(texts)} embeddings, got {len(vectors)}")
        dims = {v.dim for v in vectors}
        if len(dims) != 1:
            raise DimInconsistency(f"mixed embedding dimensions: {sorted(dims)}")
        return vectors

    def rerank_pairs(self, query: str, passages: Sequence[str], role: str = "reranker") -> List[float]:
        endpoint = self.endpoint(role)
        body = {"model": endpoint.model_name, "query": query, "documents": list(passages)}
        data = self._post(endpoint, "/rerank", body)
        try:
            results = data["results"]
            scores = [0.0] * len(passages)
            seen = set()
            for item in results:
                idx = int(item["index"])
                scores[idx] = float(item["relevance_score"])
                seen.add(idx)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise MalformedCompletion(f"bad rerank response: {exc}") from exc
        if len(results) != len(passages) or len(seen) != len(passages):
            raise LengthMismatch(f"expected {len(passages)} rerank scores, got {len(results)}")
        return scores
