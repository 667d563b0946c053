# utils/corpus.py
"""
Corpus ingestion: JSONL problems to FunctionUnits, plus the HumanEval adapter.
"""
import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import xxhash

from utils.code_model import FunctionUnit, TestCase, parse_function
from utils.errors import CorpusError, LiteralParseError, ToolkitError
from utils.literals import parse_literal
from utils.syntax import LANGUAGES, PYTHON

logger = logging.getLogger(__name__)

_OPENERS = {"(": ")", "[": "]", "{": "}"}


@dataclass
class CorpusLoad:
    units: List[FunctionUnit] = field(default_factory=list)
    # task_id -> reason, for problems that could not be parsed
    rejected: Dict[str, str] = field(default_factory=dict)
    digest: str = ""


def split_top_level_eq(text: str) -> Optional[Tuple[str, str]]:
    """Split `lhs == rhs` at the first `==` outside brackets and string literals."""
    depth = 0
    quote = None
    i = 0
    while i < len(text) - 1:
        ch = text[i]
        if quote:
            if ch == "\\":
                i += 2
                continue
            if ch == quote:
                quote = None
        elif ch in ("'", '"'):
            quote = ch
        elif ch in _OPENERS:
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif depth == 0 and text[i:i + 2] == "==" and text[i - 1:i] not in ("=", "!", "<", ">"):
            return text[:i].strip(), text[i + 2:].strip()
        i += 1
    return None


def parse_test(raw: str, language: str, entry_point: str) -> TestCase:
    """`assert EXPR == EXPECTED` (optionally `;`-terminated) into a TestCase."""
    body = raw.strip()
    if not body.startswith("assert"):
        raise CorpusError(f"test is not an assertion: {raw!r}")
    body = body[len("assert"):].strip().rstrip(";").strip()
    split = split_top_level_eq(body)
    if split is None:
        raise CorpusError(f"test has no top-level '==': {raw!r}")
    expression, expected = split
    if not re.match(rf"^\s*(?:\w+\.)*{re.escape(entry_point)}\s*\(", expression):
        raise CorpusError(f"test does not call {entry_point}: {raw!r}")
    try:
        parse_literal(expected, language)
    except LiteralParseError as e:
        raise CorpusError(f"expected value is not a literal: {raw!r}") from e
    return TestCase(expression=expression, expected=expected, raw=raw.strip())


def unit_from_record(record: Dict) -> FunctionUnit:
    missing = [k for k in ("task_id", "language", "source", "entry_point") if k not in record]
    if missing:
        raise CorpusError(f"record is missing fields: {missing}")
    language = str(record["language"]).lower()
    if language not in LANGUAGES:
        raise CorpusError(f"{record['task_id']}: unsupported language {record['language']!r}")
    entry_point = record["entry_point"]
    tests = []
    for raw in record.get("tests") or []:
        try:
            tests.append(parse_test(raw, language, entry_point))
        except CorpusError as e:
            logger.warning(f"⚠️ {record['task_id']}: skipping test: {e}")
    return parse_function(
        record["source"],
        language,
        entry_point,
        unit_id=str(record["task_id"]),
        tests=tuple(tests),
        correctness=record.get("correct"),
        generated_by=record.get("generated_by"),
    )


def read_records(path: str) -> List[Dict]:
    if not os.path.exists(path):
        raise CorpusError(f"Corpus file not found: {path}")
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({e})") from e
    return records


def corpus_digest(records: Iterable[Dict]) -> str:
    h = xxhash.xxh3_128()
    for record in records:
        h.update(json.dumps(record, sort_keys=True, ensure_ascii=False).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def load_corpus(path: str, language: str = "both", own_code_of: Optional[str] = None) -> CorpusLoad:
    """
    Load a JSONL corpus. Unparseable problems are rejected with a warning rather
    than aborting the load. `own_code_of` keeps only units generated by that
    model (plus units with no `generated_by` tag).
    """
    records = read_records(path)
    load = CorpusLoad(digest=corpus_digest(records))
    for record in records:
        lang = str(record.get("language", "")).lower()
        if language != "both" and lang != language:
            continue
        tag = record.get("generated_by")
        if own_code_of and tag and tag != own_code_of:
            continue
        try:
            load.units.append(unit_from_record(record))
        except ToolkitError as e:
            task_id = str(record.get("task_id", "?"))
            load.rejected[task_id] = f"{type(e).__name__}: {e}"
            logger.warning(f"⚠️ Rejected {task_id}: {e}")
    logger.info(f"📚 Loaded {len(load.units)} units from {path} ({len(load.rejected)} rejected)")
    return load


# ============================================================
# HumanEval adapter
# ============================================================

def _humaneval_tests(test_code: str, entry_point: str) -> List[str]:
    tests = []
    for line in test_code.splitlines():
        stripped = line.strip()
        if not stripped.startswith("assert") or "candidate(" not in stripped:
            continue
        stripped = re.sub(r"\bcandidate\(", f"{entry_point}(", stripped)
        # Drop trailing assertion messages: `assert x == y, "msg"`
        body = stripped[len("assert"):].strip()
        split = split_top_level_eq(body)
        if split is None:
            continue
        lhs, rhs = split
        rhs = _strip_assert_message(rhs)
        tests.append(f"assert {lhs} == {rhs}")
    return tests


def _strip_assert_message(rhs: str) -> str:
    depth = 0
    quote = None
    for i, ch in enumerate(rhs):
        if quote:
            if ch == quote and rhs[i - 1] != "\\":
                quote = None
        elif ch in ("'", '"'):
            quote = ch
        elif ch in _OPENERS:
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif ch == "," and depth == 0:
            return rhs[:i].strip()
    return rhs.strip()


def convert_humaneval(input_path: str, output_path: str) -> int:
    """Convert HumanEval-format problems (Python) into corpus JSONL. Returns the count written."""
    written = 0
    with open(output_path, "w", encoding="utf-8") as out:
        for record in read_records(input_path):
            entry_point = record.get("entry_point")
            if not entry_point:
                logger.warning(f"⚠️ {record.get('task_id')}: no entry_point, skipped")
                continue
            source = (record.get("prompt") or "") + (record.get("canonical_solution") or "")
            converted = {
                "task_id": record.get("task_id"),
                "language": PYTHON,
                "source": source,
                "entry_point": entry_point,
                "tests": _humaneval_tests(record.get("test") or "", entry_point),
            }
            if "correct" in record:
                converted["correct"] = record["correct"]
            out.write(json.dumps(converted, ensure_ascii=False) + "\n")
            written += 1
    logger.info(f"🔁 Converted {written} HumanEval problems into {output_path}")
    return written

