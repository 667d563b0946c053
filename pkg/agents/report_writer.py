# agents/report_writer.py
import csv
import io
import json
import logging
import os
import tempfile
from typing import Any, Dict, List, Optional, Sequence

from utils.errors import ToolkitError

UNDERSTANDING_COLUMNS = [
    "model", "language", "task", "operator", "semantic_class", "n", "robustness", "sensitivity",
    "exact_rate", "f1", "semantic", "lexical", "parse_failure_rate", "stratum",
]
FORMATS = ("csv", "json", "md")
PRECISION = 6


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return round(value, PRECISION)
    return value


def _columns(rows: Sequence[Dict[str, Any]], columns: Optional[List[str]]) -> List[str]:
    if columns:
        return list(columns)
    if not rows:
        return []
    return list(rows[0].keys())


def render(rows: Sequence[Dict[str, Any]], fmt: str, columns: Optional[List[str]] = None) -> str:
    """Render table rows as CSV, JSON or a Markdown table. Floats are rounded for stable bytes."""
    cols = _columns(rows, columns)
    clean = [{c: _cell(row.get(c)) for c in cols} for row in rows]
    if fmt == "json":
        return json.dumps(clean, indent=2, ensure_ascii=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in clean:
            writer.writerow({c: "" if v is None else v for c, v in row.items()})
        return buf.getvalue()
    if fmt == "md":
        if not cols:
            return "_empty_\n"
        lines = ["| " + " | ".join(cols) + " |", "|" + "|".join("---" for _ in cols) + "|"]
        for row in clean:
            lines.append("| " + " | ".join("" if row[c] is None else str(row[c]) for c in cols) + " |")
        return "\n".join(lines) + "\n"
    raise ToolkitError(f"Unknown report format: {fmt}")


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


class ReportWriter:
    """Writes named tables under a run's reports directory as JSON and CSV."""

    def __init__(self, reports_dir: str):
        self.reports_dir = reports_dir
        self.logger = logging.getLogger(__name__)

    def write_table(self, name: str, rows: Sequence[Dict[str, Any]],
                    columns: Optional[List[str]] = None, formats: Sequence[str] = ("json", "csv")) -> List[str]:
        paths = []
        for fmt in formats:
            path = os.path.join(self.reports_dir, f"{name}.{fmt}")
            write_atomic(path, render(rows, fmt, columns))
            paths.append(path)
        self.logger.info(f"📝 Wrote {name} ({len(rows)} rows)")
        return paths

    def write_tables(self, tables: Dict[str, Sequence[Dict[str, Any]]]) -> List[str]:
        paths = []
        for name in sorted(tables):
            columns = UNDERSTANDING_COLUMNS if name.startswith("understanding") else None
            paths.extend(self.write_table(name, tables[name], columns))
        return paths

    @staticmethod
    def load_table(path: str) -> List[Dict[str, Any]]:
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ToolkitError(f"Cannot read report table {path}: {e}") from e

    def render_run(self, fmt: str, tables: Optional[Sequence[str]] = None) -> str:
        """Every JSON table of a completed run rendered in `fmt`, one titled section per table."""
        if not os.path.isdir(self.reports_dir):
            raise ToolkitError(f"No reports directory at {self.reports_dir}")
        names = sorted(n[:-5] for n in os.listdir(self.reports_dir) if n.endswith(".json"))
        if tables:
            names = [n for n in names if n in tables]
        sections = []
        for name in names:
            rows = self.load_table(os.path.join(self.reports_dir, f"{name}.json"))
            columns = UNDERSTANDING_COLUMNS if name.startswith("understanding") else None
            body = render(rows, fmt, columns)
            if fmt == "md":
                sections.append(f"## {name}\n\n{body}")
            elif fmt == "csv":
                sections.append(f"# {name}\n{body}")
            else:
                sections.append(body)
        if fmt == "json" and len(names) != 1:
            merged = {name: self.load_table(os.path.join(self.reports_dir, f"{name}.json")) for name in names}
            return json.dumps(merged, indent=2, ensure_ascii=False) + "\n"
        return "\n".join(sections)
