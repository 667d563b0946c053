# agents/metrics.py
import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from agents.dependence_analyzer import CONTROL, DependenceGraph
from agents.prompt_harness import ParseFailure, Payload
from utils.code_model import FunctionUnit
from utils.errors import EmbeddingUnavailable, EmptyInput, LiteralParseError, MixedSemanticClass
from utils.literals import parse_literal
from utils.llm_client import METHOD_NAME, OUTPUT_PREDICT, SUMMARIZE

logger = logging.getLogger(__name__)

FLOAT_TOLERANCE = 1e-6
ALL_OPERATORS = "ALL"
STRATUM_ALL = "All"
STRATUM_CORRECT = "Correct"
STRATUM_INCORRECT = "Incorrect"

_WORD = re.compile(r"[a-z0-9]+")
_SUBTOKEN = re.compile(r"[A-Z]+(?![a-z])|[A-Z]?[a-z]+|\d+")


@dataclass(frozen=True)
class SimilarityScore:
    lexical: float
    semantic: Optional[float] = None
    exact: bool = False

    @property
    def primary(self) -> float:
        return self.semantic if self.semantic is not None else self.lexical


def _f1(common: int, n_a: int, n_b: int) -> float:
    if common == 0 or n_a == 0 or n_b == 0:
        return 0.0
    precision, recall = common / n_a, common / n_b
    return 2 * precision * recall / (precision + recall)


def _bag_f1(a: List[str], b: List[str]) -> float:
    if not a and not b:
        return 1.0
    common = sum((Counter(a) & Counter(b)).values())
    return _f1(common, len(a), len(b))


def summary_tokens(text: str) -> List[str]:
    return _WORD.findall(text.lower())


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    x, y = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    norm = np.linalg.norm(x) * np.linalg.norm(y)
    if norm == 0:
        return 0.0
    return float(np.dot(x, y) / norm)


def summary_similarity(a: str, b: str, embedder=None) -> SimilarityScore:
    """Token F1 over lowercase word tokens; cosine of embeddings (clipped to [0, 1]) when an embedder is given."""
    exact = a.strip() == b.strip()
    lexical = 1.0 if exact else _bag_f1(summary_tokens(a), summary_tokens(b))
    semantic = None
    if embedder is not None:
        try:
            semantic = 1.0 if exact else min(1.0, max(0.0, cosine(embedder.embed(a), embedder.embed(b))))
        except EmbeddingUnavailable as e:
            logger.warning(f"⚠️ Semantic similarity unavailable: {e}")
    return SimilarityScore(lexical=lexical, semantic=semantic, exact=exact)


def split_subtokens(identifier: str) -> List[str]:
    """`isPalindrome_and2` -> ['is', 'palindrome', 'and', '2']"""
    return [t.lower() for part in identifier.split("_") for t in _SUBTOKEN.findall(part)]


def name_similarity(a: str, b: str) -> SimilarityScore:
    exact = a == b
    lexical = 1.0 if exact else _bag_f1(split_subtokens(a), split_subtokens(b))
    return SimilarityScore(lexical=lexical, exact=exact)


def _values_equal(a: Any, b: Any) -> bool:
    # bools are not numbers here: True != 1
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        if isinstance(a, float) or isinstance(b, float):
            return math.isclose(a, b, rel_tol=FLOAT_TOLERANCE, abs_tol=FLOAT_TOLERANCE)
        return a == b
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(_values_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_values_equal(a[k], b[k]) for k in a)
    if isinstance(a, (set, frozenset)) and isinstance(b, (set, frozenset)):
        return a == b
    return type(a) is type(b) and a == b


def _normalized(text: str) -> str:
    text = text.strip().rstrip(";").strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1]
    return re.sub(r"\s+", "", text).lower()


def output_equality(a: str, b: str, language: str = "python") -> bool:
    try:
        return _values_equal(parse_literal(a, language), parse_literal(b, language))
    except LiteralParseError:
        return _normalized(a) == _normalized(b)


def score_pair(task: str, original: Payload, transformed: Payload, language: str = "python",
               embedder=None) -> Optional[SimilarityScore]:
    """Similarity of one (original, transformed) answer pair; None when either side failed to parse."""
    if isinstance(original, ParseFailure) or isinstance(transformed, ParseFailure):
        return None
    if task == SUMMARIZE:
        return summary_similarity(original, transformed, embedder)
    if task == METHOD_NAME:
        return name_similarity(original, transformed)
    if task == OUTPUT_PREDICT:
        equal = output_equality(original, transformed, language)
        return SimilarityScore(lexical=1.0 if equal else 0.0, exact=equal)
    raise ValueError(f"No pairwise similarity for task {task}")


def _similarities(task: str, scores: List[Optional[SimilarityScore]]) -> List[float]:
    """Per-pair similarity in [0, 1]; failed pairs count as maximally different."""
    if not scores:
        raise EmptyInput(f"No pairs to score for {task}")
    if task == SUMMARIZE:
        semantic = all(s is not None and s.semantic is not None for s in scores)
        return [0.0 if s is None else (s.semantic if semantic else s.lexical) for s in scores]
    return [1.0 if (s is not None and s.exact) else 0.0 for s in scores]


def robustness(pairs: Sequence[Tuple[Payload, Payload]], task: str, language: str = "python",
               embedder=None) -> float:
    scores = [score_pair(task, a, b, language, embedder) for a, b in pairs]
    return math.fsum(_similarities(task, scores)) / len(scores)


def sensitivity(pairs: Sequence[Tuple[Payload, Payload]], task: str, language: str = "python",
                embedder=None) -> float:
    scores = [score_pair(task, a, b, language, embedder) for a, b in pairs]
    return math.fsum(1.0 - s for s in _similarities(task, scores)) / len(scores)


# ============================================================
# Dependence scoring
# ============================================================

@dataclass(frozen=True)
class DependenceScore:
    precision: float
    recall: float
    f1: float
    n_predicted: int
    n_truth: int
    empty_prediction: bool = False
    empty_truth: bool = False
    parse_failure: bool = False


def dependence_scores(predicted: Payload, truth: DependenceGraph, kind: str = CONTROL,
                      unit: Optional[FunctionUnit] = None, granularity: str = "line") -> DependenceScore:
    """
    P/R/F1 of predicted (i, j) pairs against the analyzer's truth. With a unit
    and line granularity the truth is mapped to lines first (signature = 1).
    Pairs outside the truth, including out-of-range indices, count as wrong.
    """
    failed = isinstance(predicted, ParseFailure)
    guess = set() if failed else {tuple(p) for p in predicted}
    if granularity == "line" and unit is not None:
        gold = set(truth.as_lines(unit, kind))
    else:
        gold = set(truth.pairs(kind))
    hits = len(guess & gold)
    precision = hits / len(guess) if guess else 0.0
    recall = hits / len(gold) if gold else 0.0
    return DependenceScore(
        precision=precision,
        recall=recall,
        f1=_f1(hits, len(guess), len(gold)),
        n_predicted=len(guess),
        n_truth=len(gold),
        empty_prediction=not guess,
        empty_truth=not gold,
        parse_failure=failed,
    )


# ============================================================
# Reports
# ============================================================

@dataclass
class MetricReport:
    model_id: str
    language: str
    task: str
    operator_id: str
    semantic_class: str
    n_pairs: int
    robustness: Optional[float] = None
    sensitivity: Optional[float] = None
    breakdown: Dict[str, Optional[float]] = field(default_factory=dict)
    stratum: str = STRATUM_ALL

    @property
    def value(self) -> float:
        return self.robustness if self.robustness is not None else self.sensitivity

    def to_row(self) -> Dict[str, Any]:
        return {
            "model": self.model_id,
            "language": self.language,
            "task": self.task,
            "operator": self.operator_id,
            "semantic_class": self.semantic_class,
            "n": self.n_pairs,
            "robustness": self.robustness,
            "sensitivity": self.sensitivity,
            "exact_rate": self.breakdown.get("exact_rate"),
            "f1": self.breakdown.get("f1"),
            "semantic": self.breakdown.get("semantic"),
            "lexical": self.breakdown.get("lexical"),
            "parse_failure_rate": self.breakdown.get("parse_failure_rate"),
            "stratum": self.stratum,
        }

    @classmethod
    def from_row(cls, row: Dict[str, Any]) -> "MetricReport":
        return cls(
            model_id=row["model"],
            language=row["language"],
            task=row["task"],
            operator_id=row["operator"],
            semantic_class=row["semantic_class"],
            n_pairs=int(row["n"]),
            robustness=row.get("robustness"),
            sensitivity=row.get("sensitivity"),
            breakdown={k: row.get(k) for k in ("exact_rate", "f1", "semantic", "lexical", "parse_failure_rate")},
            stratum=row.get("stratum", STRATUM_ALL),
        )


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return math.fsum(present) / len(present) if present else None


def score_operator(model_id: str, language: str, task: str, operator_id: str, semantic_class: str,
                   pairs: Sequence[Tuple[Payload, Payload]], embedder=None, stratum: str = STRATUM_ALL) -> MetricReport:
    """One operator row: Robustness for SP operators, Sensitivity for SNP ones."""
    scores = [score_pair(task, a, b, language, embedder) for a, b in pairs]
    similarities = _similarities(task, scores)
    n = len(scores)
    value = math.fsum(similarities) / n
    ok = [s for s in scores if s is not None]
    breakdown = {
        "exact_rate": math.fsum(1.0 for s in ok if s.exact) / n,
        "f1": math.fsum(s.lexical for s in ok) / n if task == METHOD_NAME else None,
        "lexical": math.fsum(s.lexical for s in ok) / n if task == SUMMARIZE else None,
        "semantic": (math.fsum(s.semantic for s in ok) / n
                     if task == SUMMARIZE and ok and all(s.semantic is not None for s in ok) else None),
        "parse_failure_rate": (n - len(ok)) / n,
    }
    report = MetricReport(model_id, language, task, operator_id, semantic_class, n, breakdown=breakdown, stratum=stratum)
    if semantic_class == "SP":
        report.robustness = value
    else:
        report.sensitivity = math.fsum(1.0 - s for s in similarities) / n
    return report


_KEY_DIMS = ("model_id", "language", "task", "semantic_class", "stratum")


def report_sort_key(report: MetricReport) -> Tuple:
    return (report.model_id, report.language, report.task, report.stratum, report.semantic_class,
            report.operator_id == ALL_OPERATORS, report.operator_id)


def aggregate(reports: Sequence[MetricReport], group_by: Sequence[str] = _KEY_DIMS) -> List[MetricReport]:
    """
    One `ALL` row per group: arithmetic mean of its operator rows (each already a
    count-weighted mean over units). Rows are returned sorted so the result does
    not depend on input order.
    """
    groups: Dict[Tuple, List[MetricReport]] = defaultdict(list)
    for report in reports:
        if report.operator_id == ALL_OPERATORS:
            continue
        groups[tuple(getattr(report, d) for d in group_by)].append(report)

    out = []
    for key, rows in groups.items():
        classes = {r.semantic_class for r in rows}
        if len(classes) > 1:
            raise MixedSemanticClass(f"Group {key} mixes {sorted(classes)}")
        rows = sorted(rows, key=report_sort_key)
        first = rows[0]
        merged = MetricReport(
            model_id=first.model_id if "model_id" in group_by else ALL_OPERATORS,
            language=first.language if "language" in group_by else ALL_OPERATORS,
            task=first.task if "task" in group_by else ALL_OPERATORS,
            operator_id=ALL_OPERATORS,
            semantic_class=first.semantic_class,
            n_pairs=sum(r.n_pairs for r in rows),
            breakdown={k: _mean(r.breakdown.get(k) for r in rows) for k in first.breakdown},
            stratum=first.stratum if "stratum" in group_by else STRATUM_ALL,
        )
        if first.robustness is not None:
            merged.robustness = _mean(r.robustness for r in rows)
        else:
            merged.sensitivity = _mean(r.sensitivity for r in rows)
        out.append(merged)
    return sorted(out, key=report_sort_key)


def with_aggregates(reports: Sequence[MetricReport]) -> List[MetricReport]:
    """Operator rows plus their ALL rows, deterministically ordered."""
    rows = [r for r in reports if r.operator_id != ALL_OPERATORS]
    return sorted(rows + aggregate(rows), key=report_sort_key)


# ============================================================
# Dependence tables
# ============================================================

@dataclass
class DependenceReport:
    model_id: str
    language: str
    kind: str
    n_units: int
    precision: float
    recall: float
    f1: float
    empty_prediction_rate: float
    parse_failure_rate: float

    def to_row(self) -> Dict[str, Any]:
        return {
            "model": self.model_id,
            "language": self.language,
            "kind": self.kind,
            "n": self.n_units,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "empty_prediction_rate": self.empty_prediction_rate,
            "parse_failure_rate": self.parse_failure_rate,
        }


def aggregate_dependence(model_id: str, language: str, kind: str, scores: Sequence[DependenceScore]) -> DependenceReport:
    """Macro average over units."""
    if not scores:
        raise EmptyInput(f"No dependence scores for {model_id}/{language}/{kind}")
    n = len(scores)
    return DependenceReport(
        model_id=model_id,
        language=language,
        kind=kind,
        n_units=n,
        precision=math.fsum(s.precision for s in scores) / n,
        recall=math.fsum(s.recall for s in scores) / n,
        f1=math.fsum(s.f1 for s in scores) / n,
        empty_prediction_rate=sum(1 for s in scores if s.empty_prediction) / n,
        parse_failure_rate=sum(1 for s in scores if s.parse_failure) / n,
    )

