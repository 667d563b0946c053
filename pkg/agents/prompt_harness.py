# agents/prompt_harness.py
import concurrent.futures
import json
import logging
import os
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from utils.code_model import FunctionUnit, TestCase
from utils.config import Config
from utils.corpus import split_top_level_eq
from utils.errors import AuthError, ConfigError, MissingTest, ProviderError
from utils.exchange_cache import ExchangeCache, cache_key
from utils.llm_client import (
    CONTROL_DEPS, DATA_DEPS, METHOD_NAME, OUTPUT_PREDICT, SUMMARIZE, TASKS, BaseProvider, CompletionRequest,
)
from utils.syntax import JAVA

DEPENDENCE_TASKS = (CONTROL_DEPS, DATA_DEPS)
UNDERSTANDING_TASKS = (SUMMARIZE, METHOD_NAME, OUTPUT_PREDICT)
MASKED_NAME = "METHOD_NAME"

_PLACEHOLDER = re.compile(r"\{(code|task|test)\}")
_FENCE = re.compile(r"```[\w+-]*\n?(.*?)```", re.S)
_PAIR = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")
_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"


@dataclass(frozen=True)
class ParseFailure:
    reason: str

    def __bool__(self) -> bool:
        return False


Payload = Union[str, Tuple[Tuple[int, int], ...], ParseFailure]


@dataclass(frozen=True)
class TaskPrompt:
    task: str
    code: str
    rendered: str
    extra: Optional[str] = None


@dataclass
class ModelExchange:
    unit_id: str
    variant: str
    task: str
    model_id: str
    temperature: float
    rendered: str
    raw_response: str
    parsed: Payload
    cache_key: str
    cached: bool = field(default=False, compare=False)
    # Set when the provider failed; such exchanges are never persisted
    provider_error: Optional[str] = field(default=None, compare=False)

    @property
    def failed(self) -> bool:
        return isinstance(self.parsed, ParseFailure)

    def to_record(self) -> Dict[str, Any]:
        if isinstance(self.parsed, ParseFailure):
            parsed, error = None, self.parsed.reason
        elif isinstance(self.parsed, tuple):
            parsed, error = [list(p) for p in self.parsed], None
        else:
            parsed, error = self.parsed, None
        return {
            "cache_key": self.cache_key,
            "unit_id": self.unit_id,
            "variant": self.variant,
            "task": self.task,
            "model_id": self.model_id,
            "temperature": self.temperature,
            "rendered": self.rendered,
            "raw_response": self.raw_response,
            "parsed": parsed,
            "parse_error": error,
        }


def load_templates(path: Optional[str] = None) -> Dict[str, Any]:
    path = path or Config.PROMPT_TEMPLATES
    if not os.path.isabs(path) and not os.path.exists(path):
        path = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            templates = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot load prompt templates from {path}: {e}") from e
    missing = [t for t in TASKS if t not in templates.get("tasks", {})]
    if "frame" not in templates or missing:
        raise ConfigError(f"Prompt templates at {path} lack frame or tasks {missing}")
    return templates


def _fill(template: str, values: Dict[str, str]) -> str:
    # Single pass, so braces inside code are never re-expanded
    return _PLACEHOLDER.sub(lambda m: values.get(m.group(1), m.group(0)), template)


def fill_stub(test: TestCase, language: str, marker: str = "<FILL>") -> str:
    suffix = ";" if language == JAVA else ""
    return f"assert {test.expression} == {marker}{suffix}"


def render_prompt(task: str, unit: FunctionUnit, test: Optional[TestCase] = None, source: Optional[str] = None,
                  templates: Optional[Dict[str, Any]] = None, mask_name: bool = False) -> TaskPrompt:
    """
    Render one task prompt. `source` is the code variant to embed (default: the
    unit's original); dependence probes embed the function only, so that line 1
    is its signature.
    """
    if task not in TASKS:
        raise ValueError(f"Unknown task: {task}")
    templates = templates or load_templates()
    code = unit.source if source is None else source
    if task in DEPENDENCE_TASKS:
        start = code.find(_signature_anchor(unit, code))
        code = code[start:] if start > 0 else code
        code = code.rstrip("\n")
    if task == METHOD_NAME and mask_name:
        code = re.sub(rf"\b{re.escape(unit.entry_point)}\b", MASKED_NAME, code)

    extra = None
    values = {"code": code}
    if task == OUTPUT_PREDICT:
        if test is None:
            raise MissingTest(f"{unit.id}: output prediction needs a test case")
        extra = fill_stub(test, unit.language, templates.get("fill_marker", "<FILL>"))
        values["test"] = extra
    values["task"] = _fill(templates["tasks"][task], values)
    rendered = _fill(templates["frame"], values)
    return TaskPrompt(task=task, code=code, rendered=rendered, extra=extra)


def _signature_anchor(unit: FunctionUnit, code: str) -> str:
    """First line of the function definition inside `code`."""
    header = unit.function_source.split("\n", 1)[0]
    if header in code:
        return header
    # A transformed variant with renamed/reordered parameters: find the defining line
    pattern = (rf"^[ \t]*(?:async\s+)?def\s+{re.escape(unit.entry_point)}\b.*$" if unit.language != JAVA
               else rf"^[ \t]*[^\n;{{}}]*\b{re.escape(unit.entry_point)}\s*\(.*$")
    m = re.search(pattern, code, re.M)
    return m.group(0) if m else code.split("\n", 1)[0]


# ============================================================
# Response parsing (total: never raises)
# ============================================================

def _unfence(text: str) -> str:
    m = _FENCE.search(text)
    return m.group(1) if m else text


def _parse_method_name(text: str) -> Payload:
    m = re.search(rf"`\s*({_IDENT})\s*(?:\([^`]*\))?\s*`", text)
    if m:
        return m.group(1)
    body = _unfence(text)
    m = re.search(rf"\bdef\s+({_IDENT})", body) or re.search(
        rf"\b(?:public|private|protected|static)\b[^\n(]*?\b({_IDENT})\s*\(", body)
    if m:
        return m.group(1)
    m = re.search(rf"\bname\b[^\n]*?\b(?:is|be|:)\s*[\"'*]*({_IDENT})", text, re.I)
    if m:
        return m.group(1)
    for line in text.splitlines():
        tokens = re.findall(_IDENT, line)
        if not tokens:
            continue
        styled = [t for t in tokens if "_" in t.strip("_") or re.search(r"[a-z][A-Z]", t)]
        return styled[0] if styled else tokens[0]
    return ParseFailure("no identifier in response")


def _parse_output(text: str, fill_marker: str = "<FILL>") -> Payload:
    body = _unfence(text).strip()
    if not body:
        return ParseFailure("empty response")
    lines = [ln.strip() for ln in body.splitlines() if ln.strip()]
    assertion = next((ln for ln in lines if ln.startswith("assert") and "==" in ln), None)
    candidate = assertion or next((ln for ln in lines if "==" in ln), None)
    if candidate is not None:
        expr = candidate[len("assert"):] if candidate.startswith("assert") else candidate
        split = split_top_level_eq(expr.strip())
        value = split[1] if split else lines[0]
    else:
        value = lines[0]
    value = re.sub(r"\s*(#|//).*$", "", value).strip().rstrip(";").strip()
    if not value or fill_marker in value:
        return ParseFailure("no value at fill marker")
    return value


def _parse_pairs(text: str) -> Payload:
    if not text.strip():
        return ParseFailure("empty response")
    seen = []
    for a, b in _PAIR.findall(text):
        pair = (int(a), int(b))
        if pair not in seen:
            seen.append(pair)
    return tuple(seen)


def parse_response(task: str, raw: str) -> Payload:
    try:
        raw = raw or ""
        if task == SUMMARIZE:
            text = raw.strip()
            return text if text else ParseFailure("empty response")
        if task == METHOD_NAME:
            return _parse_method_name(raw)
        if task == OUTPUT_PREDICT:
            return _parse_output(raw)
        if task in DEPENDENCE_TASKS:
            return _parse_pairs(raw)
        return ParseFailure(f"unknown task {task}")
    except Exception as e:  # parsing must stay total
        return ParseFailure(f"parser error: {e}")


def payload_from_record(task: str, record: Dict[str, Any]) -> Payload:
    if record.get("parse_error") is not None or record.get("parsed") is None:
        return ParseFailure(record.get("parse_error") or "missing payload")
    if task in DEPENDENCE_TASKS:
        return tuple(tuple(p) for p in record["parsed"])
    return record["parsed"]


# ============================================================
# Querying
# ============================================================

@dataclass(frozen=True)
class QueryJob:
    unit_id: str
    variant: str
    prompt: TaskPrompt
    oracle_answer: Optional[str] = None


class PromptHarness:
    """Queries one provider at the configured temperature (0 by default) through the exchange cache."""

    def __init__(self, provider: BaseProvider, cache: ExchangeCache, config=None):
        self.provider = provider
        self.cache = cache
        self.config = config or Config
        self.logger = logging.getLogger(__name__)
        self.temperature = float(self.config.TEMPERATURE)
        self._locks: Dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _key_lock(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def _cached(self, job: QueryJob, key: str, record: Dict[str, Any]) -> ModelExchange:
        prompt = job.prompt
        return ModelExchange(
            unit_id=job.unit_id, variant=job.variant, task=prompt.task, model_id=self.provider.model_id,
            temperature=self.temperature, rendered=prompt.rendered, raw_response=record["raw_response"],
            parsed=payload_from_record(prompt.task, record), cache_key=key, cached=True,
        )

    def query(self, job: QueryJob) -> ModelExchange:
        prompt = job.prompt
        key = cache_key(self.provider.model_id, prompt.rendered, self.temperature)
        record = self.cache.get(key)
        if record is not None:
            return self._cached(job, key, record)
        # Concurrent misses on one key wait here; only the first reaches the provider
        with self._key_lock(key):
            record = self.cache.get(key)
            if record is not None:
                return self._cached(job, key, record)
            request = CompletionRequest(
                prompt=prompt.rendered,
                model_id=self.provider.model_id,
                temperature=self.temperature,
                max_tokens=int(self.config.MAX_TOKENS),
                cache_key=key,
                unit_id=job.unit_id,
                task=prompt.task,
                oracle_answer=job.oracle_answer,
            )
            raw = self.provider.generate(request)
            exchange = ModelExchange(
                unit_id=job.unit_id, variant=job.variant, task=prompt.task, model_id=self.provider.model_id,
                temperature=self.temperature, rendered=prompt.rendered, raw_response=raw,
                parsed=parse_response(prompt.task, raw), cache_key=key,
            )
            self.cache.put(exchange.to_record())
        if exchange.failed:
            self.logger.warning(f"⚠️ {job.unit_id}/{job.variant}/{prompt.task}: {exchange.parsed.reason}")
        return exchange

    def query_many(self, jobs: Sequence[QueryJob]) -> List[ModelExchange]:
        """Concurrent queries; a provider failure becomes a ParseFailure exchange that is not cached."""
        self.logger.info(f"🤖 Querying {self.provider.model_id} with {len(jobs)} prompts...")

        def run(job: QueryJob) -> ModelExchange:
            try:
                return self.query(job)
            except AuthError:
                raise
            except ProviderError as e:
                self.logger.error(f"❌ {job.unit_id}/{job.variant}/{job.prompt.task}: {e}")
                return ModelExchange(
                    unit_id=job.unit_id, variant=job.variant, task=job.prompt.task,
                    model_id=self.provider.model_id, temperature=self.temperature,
                    rendered=job.prompt.rendered, raw_response="",
                    parsed=ParseFailure(f"provider error: {e}"),
                    cache_key=cache_key(self.provider.model_id, job.prompt.rendered, self.temperature),
                    provider_error=str(e),
                )

        with concurrent.futures.ThreadPoolExecutor(max_workers=self.config.MAX_CONCURRENCY) as executor:
            exchanges = list(executor.map(run, jobs))
        hits = sum(1 for e in exchanges if e.cached)
        self.logger.info(f"✅ {len(exchanges)} exchanges ({hits} from cache)")
        return exchanges
