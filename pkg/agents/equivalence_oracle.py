# agents/equivalence_oracle.py
import concurrent.futures
import json
import logging
import os
import queue
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import xxhash

from agents.transform_engine import SemanticClass, TransformOutcome
from utils.code_model import FunctionUnit, TestCase
from utils.config import Config
from utils.errors import RuntimeUnavailable
from utils.syntax import JAVA, split_java_imports

RESULT_MARKER = "@@RESULT "
TIMEOUT = "Timeout"
UNAVAILABLE = "RuntimeUnavailable"
COMPILE_ERROR = "CompileOrImport"
CRASH = "Crash"
_INCONCLUSIVE_ERRORS = {TIMEOUT, UNAVAILABLE}


class TestStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    ERROR = "error"


class VerdictLabel(str, Enum):
    EQUIVALENT = "Equivalent"
    CHANGED = "Changed"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class TestResult:
    index: int
    status: TestStatus
    actual: Optional[str] = None
    error: Optional[str] = None

    @property
    def inconclusive(self) -> bool:
        return self.status == TestStatus.ERROR and self.error in _INCONCLUSIVE_ERRORS

    def describe(self) -> str:
        if self.status == TestStatus.PASS:
            return "Pass"
        if self.status == TestStatus.FAIL:
            return f"Fail({self.actual})"
        return f"Error({self.error})"


@dataclass
class ExecutionVerdict:
    unit_id: str
    operator_id: str
    semantic_class: str
    total: int
    original_pass: int
    transformed_pass: int
    label: VerdictLabel
    anomaly: bool = False
    per_test: List[Tuple[int, str, str]] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "unit_id": self.unit_id,
            "operator_id": self.operator_id,
            "semantic_class": self.semantic_class,
            "original_pass": f"{self.original_pass}/{self.total}",
            "transformed_pass": f"{self.transformed_pass}/{self.total}",
            "label": self.label.value,
            "anomaly": self.anomaly,
            "per_test": [list(t) for t in self.per_test],
        }


def label_results(original: Sequence[TestResult], transformed: Sequence[TestResult]) -> VerdictLabel:
    """Changed on any conclusive difference; Inconclusive when only timeouts/unavailability differ."""
    saw_inconclusive = False
    for a, b in zip(original, transformed):
        if a.inconclusive or b.inconclusive:
            saw_inconclusive = True
            continue
        if (a.status, a.actual, a.error) != (b.status, b.actual, b.error):
            return VerdictLabel.CHANGED
    if len(original) != len(transformed):
        return VerdictLabel.CHANGED
    return VerdictLabel.INCONCLUSIVE if saw_inconclusive else VerdictLabel.EQUIVALENT


def is_anomaly(semantic_class: str, label: VerdictLabel) -> bool:
    if semantic_class == SemanticClass.SP.value:
        return label == VerdictLabel.CHANGED
    return label == VerdictLabel.EQUIVALENT


_PY_HARNESS = r'''
import io
import json
import socket
import sys


def _no_network(*args, **kwargs):
    raise OSError("network access is disabled")


socket.socket = _no_network
socket.create_connection = _no_network


def main():
    with open(sys.argv[1], encoding="utf-8") as f:
        job = json.load(f)
    start = int(sys.argv[2])
    out = sys.stdout

    def emit(record):
        out.write("@@RESULT " + json.dumps(record) + "\n")
        out.flush()

    sys.stdout = io.StringIO()
    ns = {"__name__": "__unit__"}
    try:
        exec(compile(job["source"], "<unit>", "exec"), ns)
    except BaseException as e:
        for i in range(start, len(job["tests"])):
            emit({"index": i, "status": "error", "error": "CompileOrImport", "detail": repr(e)})
        return
    for i in range(start, len(job["tests"])):
        test = job["tests"][i]
        sys.stdout = io.StringIO()
        try:
            actual = eval(test["expression"], ns)
            expected = eval(test["expected"], ns)
            if actual == expected:
                emit({"index": i, "status": "pass"})
            else:
                emit({"index": i, "status": "fail", "actual": repr(actual)})
        except BaseException as e:
            emit({"index": i, "status": "error", "error": type(e).__name__})


main()
'''

_JAVA_MAIN = """import java.io.*;
import java.util.*;
import java.util.function.*;
import java.util.stream.*;
{imports}
public class Main {{
{method}

    static boolean same(Object a, Object b) {{
        if (a == null || b == null) return a == b;
        if (a instanceof Number && b instanceof Number) {{
            return ((Number) a).doubleValue() == ((Number) b).doubleValue();
        }}
        if (a.getClass().isArray() || b.getClass().isArray()) return Objects.deepEquals(a, b);
        return a.equals(b);
    }}

    static String show(Object a) {{
        if (a == null) return "null";
        if (a.getClass().isArray()) {{
            String s = Arrays.deepToString(new Object[]{{a}});
            return s.substring(1, s.length() - 1);
        }}
        return String.valueOf(a);
    }}

    static String esc(String s) {{
        StringBuilder b = new StringBuilder();
        for (char c : s.toCharArray()) {{
            if (c == '"' || c == '\\\\') b.append('\\\\').append(c);
            else if (c < 0x20) b.append(String.format("\\\\u%04x", (int) c));
            else b.append(c);
        }}
        return b.toString();
    }}

    Object[] test(int i) throws Throwable {{
        switch (i) {{
{cases}
        }}
        return null;
    }}

    public static void main(String[] args) {{
        int start = Integer.parseInt(args[0]);
        // Unit output goes to a sink so it can never share a line with a result
        PrintStream out = System.out;
        System.setOut(new PrintStream(new ByteArrayOutputStream(), true));
        Main m = new Main();
        for (int i = start; i < {n}; i++) {{
            String line;
            try {{
                Object[] r = m.test(i);
                if (same(r[0], r[1])) {{
                    line = "{{\\"index\\": " + i + ", \\"status\\": \\"pass\\"}}";
                }} else {{
                    line = "{{\\"index\\": " + i + ", \\"status\\": \\"fail\\", \\"actual\\": \\"" + esc(show(r[0])) + "\\"}}";
                }}
            }} catch (Throwable t) {{
                line = "{{\\"index\\": " + i + ", \\"status\\": \\"error\\", \\"error\\": \\"" + t.getClass().getSimpleName() + "\\"}}";
            }}
            out.println("{marker}" + line);
            out.flush();
        }}
    }}
}}
"""


class EquivalenceOracle:
    """
    Test-suite oracle: runs a unit's bundled tests against original and
    transformed sources in a subprocess per batch, with a per-test timeout.
    """

    def __init__(self, test_timeout: Optional[float] = None, config=None):
        self.config = config or Config
        self.logger = logging.getLogger(__name__)
        self.test_timeout = test_timeout or self.config.TEST_TIMEOUT
        self._original_results: Dict[Tuple[str, str], List[TestResult]] = {}
        self._lock = threading.Lock()

    # -------------------- execution --------------------

    def run_tests(self, unit: FunctionUnit, source: Optional[str] = None,
                  tests: Optional[Sequence[TestCase]] = None) -> List[TestResult]:
        """Run `tests` (default: the unit's) against `source` (default: the unit's)."""
        source = unit.source if source is None else source
        tests = list(unit.tests if tests is None else tests)
        if not tests:
            return []
        with tempfile.TemporaryDirectory(prefix="oracle_") as workdir:
            if unit.language == JAVA:
                return self._run_java(unit, source, tests, workdir)
            return self._run_python(source, tests, workdir)

    def _run_python(self, source: str, tests: List[TestCase], workdir: str) -> List[TestResult]:
        harness = os.path.join(workdir, "harness.py")
        job = os.path.join(workdir, "job.json")
        with open(harness, "w", encoding="utf-8") as f:
            f.write(_PY_HARNESS)
        with open(job, "w", encoding="utf-8") as f:
            json.dump({"source": source, "tests": [t.to_dict() for t in tests]}, f)
        return self._stream(lambda start: [self.config.PYTHON_CMD, harness, job, str(start)], len(tests), workdir)

    def _run_java(self, unit: FunctionUnit, source: str, tests: List[TestCase], workdir: str) -> List[TestResult]:
        imports, method = split_java_imports(source)
        cases = "\n".join(
            f"            case {i}: return new Object[]{{ {t.expression}, {t.expected} }};"
            for i, t in enumerate(tests)
        )
        main_src = _JAVA_MAIN.format(imports=imports.strip(), method=method, cases=cases, n=len(tests),
                                     marker=RESULT_MARKER)
        with open(os.path.join(workdir, "Main.java"), "w", encoding="utf-8") as f:
            f.write(main_src)
        try:
            compiled = subprocess.run([self.config.JAVAC_CMD, "-nowarn", "Main.java"], cwd=workdir,
                                      capture_output=True, text=True, timeout=self.config.COMPILE_TIMEOUT)
        except FileNotFoundError as e:
            raise RuntimeUnavailable(f"Java compiler not found: {self.config.JAVAC_CMD}") from e
        except subprocess.TimeoutExpired:
            self.logger.warning(f"⏰ {unit.id}: javac timed out")
            return [TestResult(i, TestStatus.ERROR, error=TIMEOUT) for i in range(len(tests))]
        if compiled.returncode != 0:
            self.logger.debug(f"{unit.id}: compile failed:\n{compiled.stderr}")
            return [TestResult(i, TestStatus.ERROR, error=COMPILE_ERROR) for i in range(len(tests))]
        return self._stream(lambda start: [self.config.JAVA_CMD, "-cp", workdir, "Main", str(start)],
                            len(tests), workdir)

    def _stream(self, command, n_tests: int, workdir: str) -> List[TestResult]:
        """Read one result line per test; a silent test past the timeout kills and restarts the batch."""
        results: Dict[int, TestResult] = {}
        i = 0
        while i < n_tests:
            try:
                proc = subprocess.Popen(command(i), cwd=workdir, stdout=subprocess.PIPE,
                                        stderr=subprocess.DEVNULL, stdin=subprocess.DEVNULL, text=True,
                                        env={**os.environ, "PYTHONDONTWRITEBYTECODE": "1"})
            except FileNotFoundError as e:
                raise RuntimeUnavailable(f"Runtime not found: {command(i)[0]}") from e
            lines: "queue.Queue[Optional[str]]" = queue.Queue()

            def pump(stream=proc.stdout, sink=lines):
                for raw in stream:
                    sink.put(raw)
                sink.put(None)

            threading.Thread(target=pump, daemon=True).start()
            try:
                while i < n_tests:
                    try:
                        raw = lines.get(timeout=self.test_timeout)
                    except queue.Empty:
                        results[i] = TestResult(i, TestStatus.ERROR, error=TIMEOUT)
                        i += 1
                        break
                    if raw is None:
                        for j in range(i, n_tests):
                            results[j] = TestResult(j, TestStatus.ERROR, error=CRASH)
                        i = n_tests
                        break
                    if not raw.startswith(RESULT_MARKER):
                        continue
                    record = json.loads(raw[len(RESULT_MARKER):])
                    index = int(record["index"])
                    results[index] = TestResult(index, TestStatus(record["status"]),
                                                actual=record.get("actual"), error=record.get("error"))
                    i = index + 1
            finally:
                if proc.poll() is None:
                    proc.kill()
                proc.wait()
        return [results[k] for k in range(n_tests)]

    # -------------------- verdicts --------------------

    def original_results(self, unit: FunctionUnit) -> List[TestResult]:
        key = (unit.id, xxhash.xxh3_64_hexdigest(unit.source))
        with self._lock:
            cached = self._original_results.get(key)
        if cached is not None:
            return cached
        results = self.run_tests(unit)
        with self._lock:
            self._original_results[key] = results
        return results

    def correctness(self, unit: FunctionUnit) -> Optional[bool]:
        """pass@1 flag from executing the original; None when it cannot be determined."""
        if not unit.tests:
            return None
        try:
            results = self.original_results(unit)
        except RuntimeUnavailable as e:
            self.logger.warning(f"⚠️ {unit.id}: cannot execute tests ({e})")
            return None
        if any(r.inconclusive for r in results):
            return None
        return all(r.status == TestStatus.PASS for r in results)

    def judge(self, unit: FunctionUnit, outcome: TransformOutcome) -> ExecutionVerdict:
        if not outcome.applied:
            raise ValueError(f"{unit.id} {outcome.operator}: only applied outcomes can be judged")
        n = len(unit.tests)
        try:
            original = self.original_results(unit)
            transformed = self.run_tests(unit, outcome.transformed_source, outcome.tests)
        except RuntimeUnavailable as e:
            self.logger.warning(f"⚠️ {unit.id} {outcome.operator}: {e}")
            original = transformed = [TestResult(i, TestStatus.ERROR, error=UNAVAILABLE) for i in range(n)]

        label = label_results(original, transformed)
        verdict = ExecutionVerdict(
            unit_id=unit.id,
            operator_id=outcome.operator,
            semantic_class=outcome.semantic_class,
            total=n,
            original_pass=sum(1 for r in original if r.status == TestStatus.PASS),
            transformed_pass=sum(1 for r in transformed if r.status == TestStatus.PASS),
            label=label,
            anomaly=is_anomaly(outcome.semantic_class, label),
            per_test=[(a.index, a.describe(), b.describe()) for a, b in zip(original, transformed)],
        )
        if verdict.anomaly:
            self.logger.warning(f"🚩 Anomaly: {outcome.semantic_class} {outcome.operator} on {unit.id} "
                                f"judged {label.value}")
        return verdict

    def judge_many(self, pairs: List[Tuple[FunctionUnit, TransformOutcome]]) -> List[ExecutionVerdict]:
        """Units are judged in parallel; the outcomes of one unit run one after another."""
        applied = [(u, o) for u, o in pairs if o.applied]
        self.logger.info(f"🧪 Judging {len(applied)} applied transformations...")
        by_unit: Dict[str, List[int]] = {}
        for position, (unit, _) in enumerate(applied):
            by_unit.setdefault(unit.id, []).append(position)

        def judge_unit(positions: List[int]) -> List[Tuple[int, ExecutionVerdict]]:
            return [(p, self.judge(*applied[p])) for p in positions]

        verdicts: List[Optional[ExecutionVerdict]] = [None] * len(applied)
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.config.MAX_CONCURRENCY) as executor:
            for batch in executor.map(judge_unit, by_unit.values()):
                for position, verdict in batch:
                    verdicts[position] = verdict
        anomalies = sum(1 for v in verdicts if v.anomaly)
        self.logger.info(f"✅ {len(verdicts)} verdicts, {anomalies} anomalies")
        return verdicts
