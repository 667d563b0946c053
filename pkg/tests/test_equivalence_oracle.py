import threading
import time
from collections import Counter

import pytest

from agents.equivalence_oracle import (
    COMPILE_ERROR, TIMEOUT, UNAVAILABLE, EquivalenceOracle, TestResult, TestStatus, VerdictLabel, is_anomaly,
    label_results,
)
from agents.transform_engine import OPERATORS, TransformEngine
from conftest import requires_javac
from utils.config import Config
from utils.corpus import unit_from_record
from utils.errors import RuntimeUnavailable


def _unit(task_id, source, entry_point, tests, language="python"):
    return unit_from_record({"task_id": task_id, "language": language, "entry_point": entry_point,
                             "source": source, "tests": tests})


@pytest.fixture
def oracle():
    return EquivalenceOracle(test_timeout=5.0)


def test_label_results():
    passing = [TestResult(0, TestStatus.PASS), TestResult(1, TestStatus.FAIL, actual="3")]
    assert label_results(passing, list(passing)) == VerdictLabel.EQUIVALENT
    changed = [TestResult(0, TestStatus.PASS), TestResult(1, TestStatus.FAIL, actual="4")]
    assert label_results(passing, changed) == VerdictLabel.CHANGED
    timed_out = [TestResult(0, TestStatus.PASS), TestResult(1, TestStatus.ERROR, error=TIMEOUT)]
    assert label_results(passing, timed_out) == VerdictLabel.INCONCLUSIVE
    crashed = [TestResult(0, TestStatus.ERROR, error="ZeroDivisionError"), TestResult(1, TestStatus.ERROR, error=TIMEOUT)]
    assert label_results(passing, crashed) == VerdictLabel.CHANGED


def test_anomaly_rules():
    assert is_anomaly("SP", VerdictLabel.CHANGED)
    assert not is_anomaly("SP", VerdictLabel.EQUIVALENT)
    assert is_anomaly("SNP", VerdictLabel.EQUIVALENT)
    assert not is_anomaly("SNP", VerdictLabel.CHANGED)
    assert not is_anomaly("SNP", VerdictLabel.INCONCLUSIVE)


def test_run_tests_reports_pass_and_fail(oracle, sample_units):
    results = oracle.run_tests(sample_units["py/count_upper"])
    assert [r.status for r in results] == [TestStatus.FAIL, TestStatus.PASS, TestStatus.FAIL]
    assert results[0].actual == "0"


def test_correctness_from_execution(oracle, sample_units):
    assert oracle.correctness(sample_units["py/add"]) is True
    assert oracle.correctness(sample_units["py/strlen_even"]) is False


def test_runtime_errors_are_recorded_per_test(oracle):
    unit = _unit("div", "def inv(x):\n    return 1 / x\n", "inv", ["assert inv(0) == 0", "assert inv(2) == 0.5"])
    results = oracle.run_tests(unit)
    assert results[0].status == TestStatus.ERROR and results[0].error == "ZeroDivisionError"
    assert results[1].status == TestStatus.PASS


def test_import_failure_errors_every_test(oracle):
    unit = _unit("boom", "def f(x):\n    return x\nraise ValueError('boom')\n", "f", ["assert f(1) == 1", "assert f(2) == 2"])
    results = oracle.run_tests(unit)
    assert [r.error for r in results] == [COMPILE_ERROR, COMPILE_ERROR]


def test_stdout_noise_does_not_break_results(oracle):
    unit = _unit("noisy", "def f(x):\n    print('@@RESULT fake')\n    return x\n", "f", ["assert f(1) == 1"])
    assert oracle.run_tests(unit)[0].status == TestStatus.PASS


def test_timeout_is_inconclusive():
    unit = _unit("spin", "def spin(n):\n    while True:\n        n += 1\n    return n\n", "spin",
                 ["assert spin(1) == 1", "assert spin(2) == 2"])
    oracle = EquivalenceOracle(test_timeout=0.5)
    results = oracle.run_tests(unit)
    assert [r.error for r in results] == [TIMEOUT, TIMEOUT]
    assert all(r.inconclusive for r in results)
    assert oracle.correctness(unit) is None


def test_judge_sp_is_equivalent(oracle, sample_units):
    unit = sample_units["py/below_zero"]
    outcome = TransformEngine(randomized=False).apply(unit, "sp.rename_var")
    verdict = oracle.judge(unit, outcome)
    assert verdict.label == VerdictLabel.EQUIVALENT
    assert not verdict.anomaly
    assert verdict.to_dict()["original_pass"] == "3/3"


def test_judge_uses_rewritten_tests_for_reordered_parameters(oracle, sample_units):
    unit = sample_units["py/diff_ratio"]
    outcome = TransformEngine(randomized=False).apply(unit, "sp.reorder_params")
    assert oracle.judge(unit, outcome).label == VerdictLabel.EQUIVALENT


def test_judge_snp_is_changed(oracle, sample_units):
    unit = sample_units["py/below_zero"]
    outcome = TransformEngine(randomized=False).apply(unit, "snp.negate_condition")
    verdict = oracle.judge(unit, outcome)
    assert verdict.label == VerdictLabel.CHANGED
    assert verdict.transformed_pass < verdict.original_pass


class _TrackingOracle(EquivalenceOracle):
    """Records whether two test runs of the same unit ever overlap."""

    def __init__(self, config):
        super().__init__(test_timeout=5.0, config=config)
        self.running = Counter()
        self.overlapped = set()
        self.guard = threading.Lock()

    def run_tests(self, unit, source=None, tests=None):
        with self.guard:
            self.running[unit.id] += 1
            if self.running[unit.id] > 1:
                self.overlapped.add(unit.id)
        time.sleep(0.02)
        with self.guard:
            self.running[unit.id] -= 1
        return [TestResult(i, TestStatus.PASS) for i in range(len(unit.tests))]


def test_judge_many_runs_one_unit_at_a_time(config, sample_units):
    config.set("max_concurrency", 4)
    oracle = _TrackingOracle(config)
    engine = TransformEngine(randomized=False)
    units = [sample_units["py/halve_or_triple"], sample_units["py/clamp"]]
    pairs = [(u, engine.apply(u, op.id)) for op in OPERATORS for u in units]
    verdicts = oracle.judge_many(pairs)
    assert oracle.overlapped == set()
    assert [(v.unit_id, v.operator_id) for v in verdicts] == [(u.id, o.operator) for u, o in pairs if o.applied]
    assert len({v.unit_id for v in verdicts}) == 2


def test_judge_rejects_not_applicable(oracle, sample_units):
    unit = sample_units["py/add"]
    outcome = TransformEngine(randomized=False).apply(unit, "snp.negate_condition")
    with pytest.raises(ValueError):
        oracle.judge(unit, outcome)


def test_missing_runtime_makes_verdicts_inconclusive(sample_units):
    config = Config()
    config.set("python_cmd", "definitely-not-a-python-binary")
    oracle = EquivalenceOracle(config=config)
    unit = sample_units["py/add"]
    outcome = TransformEngine(randomized=False).apply(unit, "sp.rename_var")
    verdict = oracle.judge(unit, outcome)
    assert verdict.label == VerdictLabel.INCONCLUSIVE
    assert verdict.per_test[0][1] == f"Error({UNAVAILABLE})"
    assert oracle.correctness(unit) is None


def test_sample_corpus_python_operators_behave(oracle, sample_units):
    engine = TransformEngine(randomized=False, max_workers=2)
    units = [u for u in sample_units.values() if u.language == "python"]
    outcomes = engine.transform_corpus(units)
    by_id = {u.id: u for u in units}
    for op in OPERATORS:
        verdicts = oracle.judge_many([(by_id[o.unit_id], o) for o in outcomes[op.id]])
        assert verdicts, op.id
        if op.semantic_class.value == "SP":
            assert all(v.label == VerdictLabel.EQUIVALENT for v in verdicts), op.id
        elif op.id in ("snp.negate_condition", "snp.remove_conditional"):
            changed = sum(1 for v in verdicts if v.label == VerdictLabel.CHANGED)
            assert changed / len(verdicts) >= 0.9, op.id


@pytest.mark.java
@requires_javac
def test_java_sp_and_snp(oracle, sample_units):
    engine = TransformEngine(randomized=False)
    unit = sample_units["java/isPrime"]
    assert oracle.correctness(unit) is True
    assert oracle.judge(unit, engine.apply(unit, "sp.for_to_while")).label == VerdictLabel.EQUIVALENT
    assert oracle.judge(unit, engine.apply(unit, "snp.negate_condition")).label == VerdictLabel.CHANGED


@pytest.mark.java
@requires_javac
def test_java_reorder_runs_rewritten_tests(oracle, sample_units):
    unit = sample_units["java/findIndex"]
    outcome = TransformEngine(randomized=False).apply(unit, "sp.reorder_params")
    assert oracle.judge(unit, outcome).label == VerdictLabel.EQUIVALENT


@pytest.mark.java
@requires_javac
def test_java_buggy_unit_is_incorrect(oracle, sample_units):
    assert oracle.correctness(sample_units["java/countUpper"]) is False


def test_missing_java_compiler_raises(sample_units):
    config = Config()
    config.set("javac_cmd", "definitely-not-javac")
    oracle = EquivalenceOracle(config=config)
    with pytest.raises(RuntimeUnavailable):
        oracle.run_tests(sample_units["java/add"])


@pytest.mark.java
@requires_javac
def test_java_stdout_without_newline_does_not_hide_results(oracle):
    unit = _unit("java/noisy", "public static int f(int x) {\n    System.out.print(\"no newline\");\n    return x;\n}\n",
                 "f", ["assert f(1) == 1;", "assert f(2) == 3;"], language="java")
    assert [r.status for r in oracle.run_tests(unit)] == [TestStatus.PASS, TestStatus.FAIL]
