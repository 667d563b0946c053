# utils/literals.py
"""Parse Python/Java literal text (test expectations, predicted outputs) into Python values."""
import ast
import re
from typing import Any

from utils.errors import LiteralParseError
from utils.syntax import JAVA

_WORD_MAP = {"true": "True", "false": "False", "null": "None", "none": "None"}
_JAVA_LIST_CALL = re.compile(r"\b(?:Arrays\.asList|List\.of|Set\.of)\s*\(")
_JAVA_ARRAY_NEW = re.compile(r"\bnew\s+[\w.<>]+\s*(?:\[\s*\])+\s*\{")
_JAVA_NUM_SUFFIX = re.compile(r"\b(\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)[lLfFdD]\b")
_JAVA_CAST = re.compile(r"\(\s*(?:int|long|double|float|short|byte|char)\s*\)")


def _outside_strings(text: str, fn) -> str:
    """Apply `fn` to every segment of `text` that is not inside a string/char literal."""
    out = []
    buf = []
    quote = None
    i = 0
    while i < len(text):
        ch = text[i]
        if quote:
            buf.append(ch)
            if ch == "\\" and i + 1 < len(text):
                buf.append(text[i + 1])
                i += 2
                continue
            if ch == quote:
                out.append("".join(buf))
                buf = []
                quote = None
        elif ch in ("'", '"'):
            out.append(fn("".join(buf)))
            buf = [ch]
            quote = ch
        else:
            buf.append(ch)
        i += 1
    out.append(fn("".join(buf)) if quote is None else "".join(buf))
    return "".join(out)


def _normalize_words(segment: str) -> str:
    return re.sub(r"\b(true|false|null|none|True|False|None)\b",
                  lambda m: _WORD_MAP.get(m.group(1).lower(), m.group(1)), segment)


def _java_segment(segment: str) -> str:
    segment = _JAVA_LIST_CALL.sub("[", segment)
    segment = _JAVA_ARRAY_NEW.sub("[", segment)
    segment = _JAVA_CAST.sub("", segment)
    return _JAVA_NUM_SUFFIX.sub(r"\1", segment)


def _close_java_collections(text: str) -> str:
    """Turn the closers of rewritten `Arrays.asList(` / `new T[]{` openers into `]`."""
    out = []
    stack = []
    quote = None
    i = 0
    while i < len(text):
        ch = text[i]
        if quote:
            out.append(ch)
            if ch == "\\" and i + 1 < len(text):
                out.append(text[i + 1])
                i += 2
                continue
            if ch == quote:
                quote = None
        elif ch in ("'", '"'):
            quote = ch
            out.append(ch)
        elif ch in "([{":
            # `[` opened by a rewrite closes with the original `)` or `}`; plain `[` with `]`
            stack.append(ch)
            out.append(ch)
        elif ch in ")]}":
            opener = stack.pop() if stack else None
            out.append("]" if opener == "[" else ch)
        else:
            out.append(ch)
        i += 1
    return "".join(out)


def parse_literal(text: str, language: str = "python") -> Any:
    """
    Evaluate a literal expression. Java array/list constructors become lists,
    numeric suffixes and primitive casts are dropped, and `true/false/null`
    are accepted in either language.
    """
    if text is None:
        raise LiteralParseError("empty literal")
    cleaned = text.strip().rstrip(";").strip()
    if not cleaned:
        raise LiteralParseError("empty literal")
    if language == JAVA:
        cleaned = _close_java_collections(_outside_strings(cleaned, _java_segment))
    cleaned = _outside_strings(cleaned, _normalize_words)
    try:
        return ast.literal_eval(cleaned)
    except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError) as e:
        raise LiteralParseError(f"not a literal: {text!r}") from e
