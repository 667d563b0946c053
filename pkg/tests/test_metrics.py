import pytest

from agents.dependence_analyzer import CONTROL, DATA, DependenceAnalyzer, DependenceGraph
from agents.metrics import (
    ALL_OPERATORS, MetricReport, aggregate, aggregate_dependence, dependence_scores, name_similarity, output_equality,
    robustness, score_operator, score_pair, sensitivity, split_subtokens, summary_similarity, with_aggregates,
)
from agents.prompt_harness import ParseFailure
from utils.errors import EmbeddingUnavailable, EmptyInput, MixedSemanticClass
from utils.llm_client import METHOD_NAME, OUTPUT_PREDICT, SUMMARIZE


class StubEmbedder:
    def __init__(self, vectors):
        self.vectors = vectors

    def embed(self, text):
        return self.vectors[text]


class BrokenEmbedder:
    def embed(self, text):
        raise EmbeddingUnavailable("offline")


def test_split_subtokens():
    assert split_subtokens("parseHTTPResponse_v2") == ["parse", "http", "response", "v", "2"]
    assert split_subtokens("is_palindrome") == ["is", "palindrome"]


def test_name_similarity_is_subtoken_f1():
    score = name_similarity("isPalindromeAndSumLessThen", "isSymmetric")
    assert score.lexical == pytest.approx(0.25)
    assert not score.exact
    assert name_similarity("is_sorted", "isSorted").lexical == 1.0
    assert name_similarity("isSorted", "isSorted").exact


@pytest.mark.parametrize("a,b,language,expected", [
    ("5", "5.0", "python", True),
    ("True", "1", "python", False),
    ("[1, 2]", "[1,2]", "python", True),
    ("(1, 2)", "[1, 2]", "python", True),
    ("'abc'", "\"abc\"", "python", True),
    ("0.30000000000000004", "0.3", "python", True),
    ("0.31", "0.3", "python", False),
    ("None", "0", "python", False),
    ("{'a': 1}", "{'a': 1.0}", "python", True),
    ("true", "true;", "java", True),
    ("5L", "5", "java", True),
    ("new int[]{1, 2}", "Arrays.asList(1, 2)", "java", True),
    ("foo(1)", "foo( 1 )", "python", True),
])
def test_output_equality(a, b, language, expected):
    assert output_equality(a, b, language) is expected


def test_summary_similarity_lexical():
    assert summary_similarity("Adds two numbers", "adds two numbers.").lexical == 1.0
    score = summary_similarity("adds two numbers", "adds numbers")
    assert score.lexical == pytest.approx(0.8)
    assert score.semantic is None


def test_summary_similarity_semantic():
    embedder = StubEmbedder({"a": [1.0, 0.0], "b": [0.0, 1.0], "c": [-1.0, 0.0]})
    assert summary_similarity("a", "b", embedder).semantic == 0.0
    # Negative cosine is clipped
    assert summary_similarity("a", "c", embedder).semantic == 0.0
    assert summary_similarity("a", "a", embedder).primary == 1.0
    assert summary_similarity("a", "b", BrokenEmbedder()).semantic is None


def test_score_pair_with_failures():
    assert score_pair(SUMMARIZE, ParseFailure("empty response"), "x") is None
    assert score_pair(OUTPUT_PREDICT, "1", "1.0").exact
    with pytest.raises(ValueError):
        score_pair("control_deps", (), ())


def test_robustness_and_sensitivity_are_complements():
    pairs = [("1", "1"), ("1", "2")]
    assert robustness(pairs, OUTPUT_PREDICT) == 0.5
    assert sensitivity(pairs, OUTPUT_PREDICT) == 0.5
    with pytest.raises(EmptyInput):
        robustness([], OUTPUT_PREDICT)


def test_failed_pairs_count_as_different():
    pairs = [("sorts the list", "sorts the list"), (ParseFailure("empty response"), "sorts")]
    report = score_operator("m", "python", SUMMARIZE, "sp.rename_var", "SP", pairs)
    assert report.robustness == 0.5
    assert report.sensitivity is None
    assert report.breakdown["parse_failure_rate"] == 0.5
    assert report.breakdown["exact_rate"] == 0.5
    snp = score_operator("m", "python", SUMMARIZE, "snp.negate_condition", "SNP", pairs)
    assert snp.sensitivity == 0.5 and snp.robustness is None


def test_method_name_rows_use_exact_match():
    pairs = [("addTwo", "addTwo"), ("addTwo", "sumTwo")]
    report = score_operator("m", "java", METHOD_NAME, "sp.rename_var", "SP", pairs)
    assert report.robustness == 0.5
    assert report.breakdown["f1"] == pytest.approx(0.75)
    assert MetricReport.from_row(report.to_row()) == report


def test_dependence_scores_on_indices():
    truth = DependenceGraph("u", frozenset({(1, 2), (2, 3), (2, 4)}), frozenset({(1, 2), (2, 3)}), 4)
    score = dependence_scores(((1, 2),), truth, CONTROL, granularity="index")
    assert (score.precision, score.recall, score.f1) == (1.0, pytest.approx(1 / 3), pytest.approx(0.5))
    half = dependence_scores(((1, 2), (1, 2)), truth, DATA, granularity="index")
    assert (half.precision, half.recall, half.f1) == (1.0, 0.5, pytest.approx(2 / 3))
    empty = dependence_scores((), truth, CONTROL, granularity="index")
    assert empty.empty_prediction and empty.f1 == 0.0
    failed = dependence_scores(ParseFailure("empty response"), truth, CONTROL, granularity="index")
    assert failed.parse_failure and failed.recall == 0.0


def test_dependence_scores_in_line_space(sample_units):
    unit = sample_units["py/below_zero"]
    truth = DependenceAnalyzer(transitive_control=False).analyze(unit)
    score = dependence_scores(((3, 4), (3, 5), (5, 6)), truth, CONTROL, unit=unit)
    assert score.f1 == 1.0
    # Out-of-range pairs are simply wrong
    score = dependence_scores(((3, 4), (40, 41)), truth, CONTROL, unit=unit)
    assert score.precision == 0.5


def _row(operator, value, semantic_class="SP", n=10, model="m"):
    report = MetricReport(model, "python", SUMMARIZE, operator, semantic_class, n,
                          breakdown={"exact_rate": value})
    if semantic_class == "SP":
        report.robustness = value
    else:
        report.sensitivity = value
    return report


def test_aggregate_is_the_mean_of_operator_rows():
    rows = [_row("sp.rename_var", 1.0, n=4), _row("sp.for_to_while", 0.5, n=2),
            _row("snp.negate_condition", 0.2, "SNP")]
    merged = aggregate(rows)
    assert [(r.semantic_class, r.operator_id) for r in merged] == [("SNP", ALL_OPERATORS), ("SP", ALL_OPERATORS)]
    sp = merged[1]
    assert sp.robustness == 0.75
    assert sp.n_pairs == 6
    assert sp.breakdown["exact_rate"] == 0.75
    assert aggregate(list(reversed(rows))) == merged


def test_aggregate_rejects_mixed_classes():
    rows = [_row("sp.rename_var", 1.0), _row("snp.negate_condition", 0.2, "SNP")]
    with pytest.raises(MixedSemanticClass):
        aggregate(rows, group_by=("model_id", "language", "task", "stratum"))


def test_with_aggregates_orders_all_rows_last():
    rows = with_aggregates([_row("sp.rename_var", 1.0), _row("sp.for_to_while", 0.5)])
    assert [r.operator_id for r in rows] == ["sp.for_to_while", "sp.rename_var", ALL_OPERATORS]
    # Existing ALL rows are recomputed, not duplicated
    assert with_aggregates(rows) == rows


def test_aggregate_dependence():
    truth = DependenceGraph("u", frozenset({(1, 2), (2, 3)}), frozenset(), 3)
    scores = [dependence_scores(((1, 2), (2, 3)), truth, granularity="index"),
              dependence_scores((), truth, granularity="index")]
    report = aggregate_dependence("m", "python", CONTROL, scores)
    assert (report.precision, report.recall, report.f1) == (0.5, 0.5, 0.5)
    assert report.empty_prediction_rate == 0.5
    with pytest.raises(EmptyInput):
        aggregate_dependence("m", "python", CONTROL, [])
