# utils/llm_client.py
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import backoff
import requests

from utils.config import Config
from utils.errors import AuthError, EmbeddingUnavailable, ProviderError, TransientProviderError
from utils.exchange_cache import ExchangeCache

# Task keys shared with the prompt harness
SUMMARIZE = "summarize"
METHOD_NAME = "method_name"
OUTPUT_PREDICT = "output_predict"
CONTROL_DEPS = "control_deps"
DATA_DEPS = "data_deps"
TASKS = (SUMMARIZE, METHOD_NAME, OUTPUT_PREDICT, CONTROL_DEPS, DATA_DEPS)


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    model_id: str
    temperature: float
    max_tokens: int
    cache_key: str
    unit_id: str = ""
    task: str = ""
    # Ground-truth answer for the oracle mock (dependence probes only)
    oracle_answer: Optional[str] = None


def _raise_for_status(resp: requests.Response, what: str) -> None:
    if resp.status_code in (401, 403):
        raise AuthError(f"{what}: authentication failed ({resp.status_code})")
    if resp.status_code == 429 or resp.status_code >= 500:
        raise TransientProviderError(f"{what}: HTTP {resp.status_code}")
    if resp.status_code >= 400:
        raise ProviderError(f"{what}: HTTP {resp.status_code}: {resp.text[:200]}")


class RateLimiter:
    """Spaces calls at least 1/rps seconds apart across threads; rps <= 0 disables it."""

    def __init__(self, rps: float):
        self.interval = 1.0 / rps if rps > 0 else 0.0
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next - now
            self._next = max(now, self._next) + self.interval
        if delay > 0:
            time.sleep(delay)


class BaseProvider:
    name = "base"

    def __init__(self, model_id: str, config=Config):
        self.model_id = model_id
        self.config = config
        self.logger = logging.getLogger(__name__)
        self.calls = 0
        self._calls_lock = threading.Lock()

    def generate(self, request: CompletionRequest) -> str:
        with self._calls_lock:
            self.calls += 1
        return self._generate(request)

    def _generate(self, request: CompletionRequest) -> str:
        raise NotImplementedError


class _HttpProvider(BaseProvider):
    """Shared requests session, rate limiting and backoff for remote providers."""

    def __init__(self, model_id: str, base_url: str, config=Config):
        super().__init__(model_id, config)
        self.base_url = base_url.rstrip("/")
        self.timeout = float(config.REQUEST_TIMEOUT)
        self.session = requests.Session()
        self.limiter = RateLimiter(float(config.RATE_LIMIT_RPS))
        self._post = backoff.on_exception(
            backoff.expo,
            TransientProviderError,
            max_tries=int(config.MAX_RETRIES) + 1,
            jitter=backoff.full_jitter,
            logger=self.logger,
        )(self._post_once)

    def _headers(self) -> Dict[str, str]:
        return {"Content-Type": "application/json"}

    def _post_once(self, path: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        self.limiter.wait()
        url = f"{self.base_url}{path}"
        try:
            resp = self.session.post(url, json=payload, headers=self._headers(), timeout=self.timeout)
        except (requests.exceptions.ConnectionError, requests.exceptions.Timeout) as e:
            raise TransientProviderError(f"{url}: {e}") from e
        except requests.exceptions.RequestException as e:
            raise ProviderError(f"{url}: {e}") from e
        _raise_for_status(resp, url)
        try:
            return resp.json()
        except ValueError as e:
            raise ProviderError(f"{url}: response is not JSON") from e


class OpenAICompatibleProvider(_HttpProvider):
    """Any `/chat/completions` endpoint; the credential comes from the env var named in config."""

    name = "openai"

    def __init__(self, model_id: str, base_url: Optional[str] = None, config=Config):
        super().__init__(model_id, base_url or config.LLM_BASE_URL, config)
        self.api_key = os.getenv(config.API_KEY_ENV, "")

    def _headers(self) -> Dict[str, str]:
        headers = super()._headers()
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _generate(self, request: CompletionRequest) -> str:
        payload = {
            "model": self.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        data = self._post("/chat/completions", payload)
        try:
            return data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as e:
            raise ProviderError(f"Unexpected chat completion shape: {str(data)[:200]}") from e


class OllamaProvider(_HttpProvider):
    """Local Ollama server via /api/generate (non-streaming)."""

    name = "ollama"

    def __init__(self, model_id: str, base_url: Optional[str] = None, config=Config):
        super().__init__(model_id, base_url or config.OLLAMA_BASE_URL, config)

    def _generate(self, request: CompletionRequest) -> str:
        payload = {
            "model": self.model_id,
            "prompt": request.prompt,
            "options": {"temperature": request.temperature, "num_predict": request.max_tokens},
            "stream": False,
        }
        data = self._post("/api/generate", payload)
        # Ollama variants use "response" for text
        return data.get("response") or ""


class MockProvider(BaseProvider):
    """
    Deterministic offline provider.

    Modes:
      echo     - canned answer keyed by (unit_id, task); identical for every variant of a unit
      constant - one fixed answer per task regardless of unit
      empty    - always the empty string
      oracle   - dependence probes answered with the analyzer's truth, echo otherwise
    A `table` of {(unit_id, task): response} overrides the mode where it has an entry.
    """

    name = "mock"

    def __init__(self, model_id: str = "mock-echo", mode: str = "echo",
                 table: Optional[Dict[Tuple[str, str], str]] = None, config=Config):
        super().__init__(model_id, config)
        if mode not in ("echo", "constant", "empty", "oracle"):
            raise ProviderError(f"Unknown mock mode: {mode}")
        self.mode = mode
        self.table = dict(table or {})

    @staticmethod
    def _slug(unit_id: str) -> str:
        return re.sub(r"\W+", "_", unit_id).strip("_").lower() or "unit"

    def _echo(self, unit_id: str, task: str) -> str:
        slug = self._slug(unit_id)
        if task == SUMMARIZE:
            return f"This function ({unit_id}) computes its result from the given inputs."
        if task == METHOD_NAME:
            return f"The method name should be `name_{slug}`."
        if task == OUTPUT_PREDICT:
            return "0"
        return "(1, 2)"

    def _generate(self, request: CompletionRequest) -> str:
        key = (request.unit_id, request.task)
        if key in self.table:
            return self.table[key]
        if self.mode == "empty":
            return ""
        if self.mode == "constant":
            return self._echo("constant", request.task)
        if self.mode == "oracle" and request.task in (CONTROL_DEPS, DATA_DEPS) and request.oracle_answer is not None:
            return request.oracle_answer
        return self._echo(request.unit_id, request.task)


class ReplayProvider(BaseProvider):
    """Serves recorded responses by cache key; never touches the network."""

    name = "replay"

    def __init__(self, model_id: str, path: str, config=Config):
        super().__init__(model_id, config)
        self.recorded = ExchangeCache(path)

    def _generate(self, request: CompletionRequest) -> str:
        record = self.recorded.get(request.cache_key)
        if record is None:
            raise ProviderError(f"No recorded response for {request.unit_id}/{request.task} ({request.cache_key})")
        return record["raw_response"]


def create_provider(config=Config, spec: Optional[Dict[str, Any]] = None) -> BaseProvider:
    """Build a provider from config, or from one `models` entry when `spec` is given."""
    spec = spec or {}
    kind = (spec.get("provider") or config.PROVIDER).lower()
    model_id = spec.get("model_id") or config.MODEL_ID
    if kind == "openai":
        return OpenAICompatibleProvider(model_id, spec.get("base_url"), config)
    if kind == "ollama":
        return OllamaProvider(model_id, spec.get("base_url"), config)
    if kind == "mock":
        return MockProvider(model_id, spec.get("mock_mode") or config.MOCK_MODE, config=config)
    if kind == "replay":
        path = spec.get("replay_path") or config.REPLAY_PATH
        if not path:
            raise ProviderError("Replay provider needs a replay_path")
        return ReplayProvider(model_id, path, config)
    raise ProviderError(f"Unknown provider kind: {kind}")


# ============================================================
# Embeddings (semantic summary similarity)
# ============================================================

class OllamaEmbedder(_HttpProvider):
    name = "ollama-embed"

    def __init__(self, model_id: str, base_url: Optional[str] = None, config=Config):
        super().__init__(model_id, base_url or config.OLLAMA_BASE_URL, config)

    def embed(self, text: str) -> List[float]:
        # Try the current endpoint first, then the older one
        for path, key in (("/api/embed", "input"), ("/api/embeddings", "prompt")):
            try:
                data = self._post(path, {"model": self.model_id, key: text})
            except ProviderError as e:
                self.logger.debug(f"Embedding endpoint {path} failed: {e}")
                continue
            vectors = data.get("embeddings")
            if isinstance(vectors, list) and vectors and isinstance(vectors[0], list):
                return vectors[0]
            vector = data.get("embedding")
            if isinstance(vector, list) and vector:
                return vector
        raise EmbeddingUnavailable(f"No usable embeddings endpoint at {self.base_url}")


class OpenAIEmbedder(OpenAICompatibleProvider):
    name = "openai-embed"

    def embed(self, text: str) -> List[float]:
        try:
            data = self._post("/embeddings", {"model": self.model_id, "input": text})
            return data["data"][0]["embedding"]
        except (ProviderError, KeyError, IndexError, TypeError) as e:
            raise EmbeddingUnavailable(f"Embedding request failed: {e}") from e


def create_embedder(config=Config):
    kind = (config.EMBED_PROVIDER or "none").lower()
    if kind == "none":
        return None
    if kind == "ollama":
        return OllamaEmbedder(config.EMBED_MODEL, config=config)
    if kind == "openai":
        return OpenAIEmbedder(config.EMBED_MODEL, config=config)
    raise EmbeddingUnavailable(f"Unknown embedding provider: {kind}")
