import json
import os
from types import SimpleNamespace

import pytest

from agents.experiment_runner import ExperimentRunner
from agents.metrics import ALL_OPERATORS, STRATUM_CORRECT, STRATUM_INCORRECT
from agents.report_writer import UNDERSTANDING_COLUMNS
from agents.transform_engine import OPERATORS
from conftest import SAMPLE_CORPUS
from utils.corpus import read_records
from utils.errors import MissingCorrectnessFlags, ProviderError, ToolkitError
from utils.llm_client import SUMMARIZE

# Swapping the operands cannot change a product with zero, so the oracle flags the SNP edit
ZERO_PRODUCT = {
    "task_id": "py/zero_product", "language": "python", "entry_point": "zero_product",
    "source": "def zero_product(x, y):\n    return (x - y) * 0\n",
    "tests": ["assert zero_product(1, 2) == 0", "assert zero_product(3, 3) == 0", "assert zero_product(5, 1) == 0"],
    "correct": True,
}


def _write_corpus(tmp_path, records, name="corpus.jsonl"):
    path = tmp_path / name
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return str(path)


def _sample(*ids):
    return [r for r in read_records(SAMPLE_CORPUS) if r["task_id"] in ids]


def _read(path):
    with open(path, "rb") as f:
        return f.read()


def test_rq1_echo_is_perfectly_robust_and_insensitive(config, small_corpus):
    result = ExperimentRunner(config, small_corpus).run_rq1()
    rows = result.tables["understanding"]
    assert {r["operator"] for r in rows} == {op.id for op in OPERATORS} | {ALL_OPERATORS}
    assert len(rows) == 3 * (len(OPERATORS) + 2)
    for row in rows:
        if row["semantic_class"] == "SP":
            assert row["robustness"] == 1.0 and row["sensitivity"] is None
        else:
            assert row["sensitivity"] == 0.0 and row["robustness"] is None
        assert row["parse_failure_rate"] == 0.0


def test_rq1_writes_every_artifact(config, small_corpus):
    result = ExperimentRunner(config, small_corpus).run_rq1()
    run_dir = result.run_dir
    assert os.path.basename(run_dir) == result.manifest.run_id
    assert result.manifest.run_id.startswith("rq1-")
    for name in ("manifest.json", "exchanges.jsonl", os.path.join("reports", "understanding.csv"),
                 os.path.join("reports", "understanding.json"), os.path.join("reports", "applicability.json"),
                 os.path.join("transforms", "sp.rename_var.jsonl")):
        assert os.path.exists(os.path.join(run_dir, name)), name
    header = open(os.path.join(run_dir, "reports", "understanding.csv"), encoding="utf-8").readline().strip()
    assert header.split(",") == UNDERSTANDING_COLUMNS

    manifest = json.load(open(os.path.join(run_dir, "manifest.json"), encoding="utf-8"))
    assert manifest["corpus"]["path"] == small_corpus
    assert [op["id"] for op in manifest["operators"]] == [op.id for op in OPERATORS]
    assert manifest["config"]["PROVIDER"] == "mock"
    assert manifest["failed_models"] == {}


def test_applicability_table(config, small_corpus):
    result = ExperimentRunner(config, small_corpus).run_rq1(tasks=[SUMMARIZE])
    rows = result.tables["applicability"]
    assert [r["operator"] for r in rows] == [op.id for op in OPERATORS]
    for row in rows:
        assert row["applied"] + row["not_applicable"] == 8
        assert row["applied"] >= 1
    rename = rows[0]
    assert rename["applied"] == 8 and rename["applicability"] == 1.0


def test_rerun_reuses_the_cache_and_reproduces_reports(config, small_corpus):
    first = ExperimentRunner(config, small_corpus).run_rq1()
    before = _read(os.path.join(first.run_dir, "reports", "understanding.csv"))
    second = ExperimentRunner(config, small_corpus).run_rq1()
    assert second.run_dir == first.run_dir
    assert _read(os.path.join(second.run_dir, "reports", "understanding.csv")) == before


def test_replay_reproduces_a_recorded_run(config, small_corpus, tmp_path):
    recorded = ExperimentRunner(config, small_corpus).run_rq1()
    config.set("provider", "replay")
    config.set("replay_path", os.path.join(recorded.run_dir, "exchanges.jsonl"))
    config.set("cache_path", str(tmp_path / "fresh-cache.jsonl"))
    replayed = ExperimentRunner(config, small_corpus).run_rq1()
    assert replayed.run_dir != recorded.run_dir
    for name in ("understanding.csv", "applicability.csv"):
        assert _read(os.path.join(replayed.run_dir, "reports", name)) == \
            _read(os.path.join(recorded.run_dir, "reports", name))


def test_empty_answers_are_maximally_different(config, small_corpus):
    config.set("model_id", "mock-empty")
    config.set("mock_mode", "empty")
    rows = ExperimentRunner(config, small_corpus).run_rq1().tables["understanding"]
    for row in rows:
        assert row["parse_failure_rate"] == 1.0
        if row["semantic_class"] == "SP":
            assert row["robustness"] == 0.0
        else:
            assert row["sensitivity"] == 1.0


def test_single_failing_model_aborts_the_run(config, small_corpus):
    config.set("provider", "replay")
    with pytest.raises(ProviderError):
        ExperimentRunner(config, small_corpus).run_rq1()


def test_rq2_sweeps_models_and_isolates_failures(config, small_corpus):
    config.set("models", [
        {"name": "small", "provider": "mock", "model_id": "mock-small"},
        {"name": "large", "provider": "mock", "model_id": "mock-large", "mock_mode": "empty"},
        {"name": "ghost", "provider": "replay", "model_id": "ghost"},
    ])
    result = ExperimentRunner(config, small_corpus).run_rq2(tasks=[SUMMARIZE])
    assert set(result.manifest.failed_models) == {"ghost"}
    assert "ProviderError" in result.manifest.failed_models["ghost"]
    size_rows = result.tables["model_size"]
    assert {r["operator"] for r in size_rows} == {ALL_OPERATORS}
    by_model = {(r["model"], r["semantic_class"]): r for r in size_rows}
    assert by_model[("mock-small", "SP")]["robustness"] == 1.0
    assert by_model[("mock-large", "SP")]["robustness"] == 0.0
    assert by_model[("mock-large", "SNP")]["sensitivity"] == 1.0


def test_rq3_stratifies_by_correctness(config, small_corpus):
    result = ExperimentRunner(config, small_corpus).run_rq3(tasks=[SUMMARIZE])
    [pass_row] = result.tables["pass_at_1"]
    assert (pass_row["n"], pass_row["correct"], pass_row["pass_at_1"]) == (8, 6, 0.75)
    sizes = {r["stratum"]: r["n_units"] for r in result.tables["strata"]}
    assert sizes == {STRATUM_CORRECT: 6, STRATUM_INCORRECT: 2}
    strata = {r["stratum"] for r in result.tables["understanding"]}
    assert strata == {STRATUM_CORRECT, STRATUM_INCORRECT}


def test_rq3_needs_some_correctness_signal(config, tmp_path):
    record = dict(_sample("py/add")[0])
    record.pop("correct")
    corpus = _write_corpus(tmp_path, [record])
    config.set("python_cmd", "definitely-not-a-python-binary")
    with pytest.raises(MissingCorrectnessFlags):
        ExperimentRunner(config, corpus).run_rq3(tasks=[SUMMARIZE])


def test_own_code_only_drops_other_models_code(config, small_corpus):
    config.set("own_code_only", True)
    result = ExperimentRunner(config, small_corpus).run_rq1(tasks=[SUMMARIZE])
    for row in result.tables["applicability"]:
        assert row["applied"] + row["not_applicable"] == 6


def test_validation_counts_anomalies(config, tmp_path):
    corpus = _write_corpus(tmp_path, [ZERO_PRODUCT] + _sample("py/diff_ratio"))
    config.set("validate_in_run", True)
    result = ExperimentRunner(config, corpus).run_rq1(["snp.swap_noncommutative_operands"], [SUMMARIZE])
    assert result.anomalies == 1
    verdicts = json.load(open(os.path.join(result.run_dir, "verdicts.json"), encoding="utf-8"))
    flagged = [v["unit_id"] for v in verdicts if v["anomaly"]]
    assert flagged == ["py/zero_product"]
    row = next(r for r in result.tables["understanding"] if r["operator"] == "snp.swap_noncommutative_operands")
    assert row["n"] == 2


def test_excluding_anomalies_drops_their_pairs(config, tmp_path):
    corpus = _write_corpus(tmp_path, [ZERO_PRODUCT] + _sample("py/diff_ratio"))
    config.set("exclude_anomalies", True)
    result = ExperimentRunner(config, corpus).run_rq1(["snp.swap_noncommutative_operands"], [SUMMARIZE])
    row = next(r for r in result.tables["understanding"] if r["operator"] == "snp.swap_noncommutative_operands")
    assert row["n"] == 1


def test_score_understanding_skips_flagged_outcomes(config, small_corpus):
    config.set("exclude_anomalies", True)
    runner = ExperimentRunner(config, small_corpus)
    units = runner.load_units().units
    outcomes = runner.transform(units, ["sp.rename_var"])
    harness = runner._harness({"provider": "mock", "model_id": "mock-echo"})
    exchanges = harness.query_many(runner.understanding_jobs(units, outcomes, [SUMMARIZE]))
    verdicts = {("py/add", "sp.rename_var"): SimpleNamespace(anomaly=True)}
    rows = runner.score_understanding("mock-echo", units, outcomes, exchanges, [SUMMARIZE], verdicts)
    rename = next(r for r in rows if r.operator_id == "sp.rename_var")
    assert rename.n_pairs == 7


def test_rq4_oracle_answers_score_perfectly(config, small_corpus):
    config.set("mock_mode", "oracle")
    config.set("model_id", "mock-oracle")
    result = ExperimentRunner(config, small_corpus).run_rq4()
    summary = result.tables["dependence"]
    assert {r["kind"] for r in summary} == {"control", "data"}
    for row in summary:
        assert (row["precision"], row["recall"], row["f1"]) == (1.0, 1.0, 1.0)
    units = result.tables["dependence_units"]
    assert len(units) == 2 * 8
    # add has no branches: kept in the per-unit table, left out of the control average
    add_control = next(r for r in units if r["unit_id"] == "py/add" and r["kind"] == "control")
    assert add_control["empty_truth"] is True
    control_row = next(r for r in summary if r["kind"] == "control")
    assert control_row["n"] < 8


def test_rq4_empty_answers_recall_nothing(config, small_corpus):
    config.set("mock_mode", "empty")
    config.set("model_id", "mock-empty")
    result = ExperimentRunner(config, small_corpus).run_rq4(granularity="statement")
    for row in result.tables["dependence"]:
        assert row["recall"] == 0.0
        assert row["parse_failure_rate"] == 1.0


def test_unknown_research_question(config, small_corpus):
    with pytest.raises(ToolkitError):
        ExperimentRunner(config, small_corpus).run("9")


GOLDEN_CORPUS = os.path.join(os.path.dirname(__file__), "fixtures", "golden_corpus.jsonl")
GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "fixtures", "golden")


def _golden(name):
    return _read(os.path.join(GOLDEN_DIR, name))


def test_rq1_matches_golden_reports(config, tmp_path):
    operators, tasks = ["sp.rename_var", "snp.negate_condition"], [SUMMARIZE]
    recorded = ExperimentRunner(config, GOLDEN_CORPUS).run_rq1(operators, tasks)
    for name in ("understanding.csv", "applicability.csv"):
        assert _read(os.path.join(recorded.run_dir, "reports", name)) == _golden(name), name

    # Replaying the recorded exchanges with a cold cache gives the same bytes
    config.set("provider", "replay")
    config.set("replay_path", os.path.join(recorded.run_dir, "exchanges.jsonl"))
    config.set("cache_path", str(tmp_path / "cold-cache.jsonl"))
    replayed = ExperimentRunner(config, GOLDEN_CORPUS).run_rq1(operators, tasks)
    assert replayed.run_dir != recorded.run_dir
    assert _read(os.path.join(replayed.run_dir, "reports", "understanding.csv")) == _golden("understanding.csv")


def test_rq4_matches_golden_reports(config):
    config.set("mock_mode", "oracle")
    config.set("model_id", "mock-oracle")
    result = ExperimentRunner(config, GOLDEN_CORPUS).run_rq4()
    for name in ("dependence.csv", "dependence_units.csv"):
        assert _read(os.path.join(result.run_dir, "reports", name)) == _golden(name), name
    header = _golden("dependence.csv").decode("utf-8").splitlines()[0].split(",")
    assert list(result.tables["dependence"][0]) == header
