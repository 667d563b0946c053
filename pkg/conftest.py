import json
import os
import shutil
import sys

import pytest

ROOT = os.path.dirname(os.path.abspath(__file__))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from utils.config import Config  # noqa: E402
from utils.corpus import load_corpus, read_records  # noqa: E402

SAMPLE_CORPUS = os.path.join(ROOT, "data", "sample_corpus.jsonl")
TEMPLATES = os.path.join(ROOT, "prompts", "templates.json")

# A small Python slice of the sample corpus: fast to execute, covers every operator
SMALL_PYTHON_IDS = (
    "py/add", "py/diff_ratio", "py/halve_or_triple", "py/sum_to", "py/clamp", "py/below_zero",
    "py/count_upper", "py/strlen_even",
)

requires_javac = pytest.mark.skipif(shutil.which("javac") is None or shutil.which("java") is None,
                                    reason="needs a JDK on PATH")


@pytest.fixture(scope="session")
def sample_units():
    """Every sample unit keyed by task id."""
    return {u.id: u for u in load_corpus(SAMPLE_CORPUS).units}


@pytest.fixture
def small_corpus(tmp_path):
    records = [r for r in read_records(SAMPLE_CORPUS) if r["task_id"] in SMALL_PYTHON_IDS]
    path = tmp_path / "small_corpus.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return str(path)


@pytest.fixture
def config(tmp_path):
    cfg = Config()
    cfg.set("provider", "mock")
    cfg.set("model_id", "mock-echo")
    cfg.set("mock_mode", "echo")
    cfg.set("runs_dir", str(tmp_path / "runs"))
    cfg.set("cache_path", str(tmp_path / "cache.jsonl"))
    cfg.set("prompt_templates", TEMPLATES)
    cfg.set("sample_corpus", SAMPLE_CORPUS)
    cfg.set("language", "python")
    cfg.set("embed_provider", "none")
    cfg.set("max_concurrency", 2)
    cfg.set("seed", 0)
    cfg.set("temperature", 0.0)
    for toggle in ("randomized_sites", "transitive_control", "exclude_anomalies", "mask_method_name",
                   "validate_in_run", "own_code_only"):
        cfg.set(toggle, False)
    return cfg
