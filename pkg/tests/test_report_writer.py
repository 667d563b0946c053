import json
import os

import pytest

from agents.report_writer import UNDERSTANDING_COLUMNS, ReportWriter, render, write_atomic
from utils.errors import ToolkitError

ROWS = [{"a": 1, "b": None, "c": 0.1234567}, {"a": 2, "b": "x", "c": 1.0}]


def test_render_csv_rounds_and_blanks_missing_values():
    assert render(ROWS[:1], "csv") == "a,b,c\n1,,0.123457\n"


def test_render_markdown():
    assert render(ROWS, "md") == "| a | b | c |\n|---|---|---|\n| 1 |  | 0.123457 |\n| 2 | x | 1.0 |\n"
    assert render([], "md") == "_empty_\n"


def test_render_json_keeps_requested_columns():
    payload = json.loads(render(ROWS, "json", columns=["c", "a"]))
    assert payload == [{"c": 0.123457, "a": 1}, {"c": 1.0, "a": 2}]


def test_unknown_format():
    with pytest.raises(ToolkitError):
        render(ROWS, "xlsx")


def test_write_atomic_leaves_no_temp_files(tmp_path):
    path = tmp_path / "out" / "table.csv"
    write_atomic(str(path), "a\n1\n")
    write_atomic(str(path), "a\n2\n")
    assert path.read_text(encoding="utf-8") == "a\n2\n"
    assert os.listdir(tmp_path / "out") == ["table.csv"]


def test_write_tables_and_render_run(tmp_path):
    writer = ReportWriter(str(tmp_path / "reports"))
    row = {c: None for c in UNDERSTANDING_COLUMNS}
    row.update({"model": "m", "task": "summarize", "robustness": 0.5})
    paths = writer.write_tables({"understanding_python": [row], "applicability": [{"operator": "sp.rename_var"}]})
    assert sorted(os.path.basename(p) for p in paths) == [
        "applicability.csv", "applicability.json", "understanding_python.csv", "understanding_python.json",
    ]
    header = (tmp_path / "reports" / "understanding_python.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == ",".join(UNDERSTANDING_COLUMNS)

    md = writer.render_run("md")
    assert md.index("## applicability") < md.index("## understanding_python")
    only = writer.render_run("json", tables=["applicability"])
    assert json.loads(only) == [{"operator": "sp.rename_var"}]
    merged = json.loads(writer.render_run("json"))
    assert set(merged) == {"applicability", "understanding_python"}


def test_render_run_without_reports(tmp_path):
    with pytest.raises(ToolkitError):
        ReportWriter(str(tmp_path / "nowhere")).render_run("md")
    with pytest.raises(ToolkitError):
        ReportWriter.load_table(str(tmp_path / "missing.json"))
