# utils/config.py
import json
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from datetime import datetime
from typing import Any, Dict, List

from dotenv import load_dotenv

from utils.errors import ConfigError

load_dotenv()


def _flag(name: str, default: str = "0") -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


class Config:
    """
    Central configuration for providers, runtimes, analysis toggles, and paths.
    Environment variables override defaults where present; a TOML/JSON file
    loaded with `Config.from_file` overrides both.
    """

    # Model provider: openai | ollama | mock | replay
    PROVIDER = os.getenv("PROVIDER", "mock")
    MODEL_ID = os.getenv("MODEL_ID", "mock-echo")
    LLM_BASE_URL = os.getenv("LLM_BASE_URL", "https://api.openai.com/v1")
    OLLAMA_BASE_URL = os.getenv("OLLAMA_BASE_URL", "http://localhost:11434")
    # Name of the environment variable holding the credential, never the credential itself
    API_KEY_ENV = os.getenv("API_KEY_ENV", "OPENAI_API_KEY")
    MOCK_MODE = os.getenv("MOCK_MODE", "echo")
    REPLAY_PATH = os.getenv("REPLAY_PATH", "")

    # The studied models are all queried at temperature 0
    TEMPERATURE = float(os.getenv("TEMPERATURE", "0"))
    MAX_TOKENS = int(os.getenv("MAX_TOKENS", "512"))
    REQUEST_TIMEOUT = float(os.getenv("REQUEST_TIMEOUT", "60"))
    MAX_RETRIES = int(os.getenv("MAX_RETRIES", "3"))
    MAX_CONCURRENCY = int(os.getenv("MAX_CONCURRENCY", "4"))
    # Requests per second per provider; 0 disables throttling
    RATE_LIMIT_RPS = float(os.getenv("RATE_LIMIT_RPS", "0"))

    # Embeddings for semantic summary similarity: none | ollama | openai
    EMBED_PROVIDER = os.getenv("EMBED_PROVIDER", "none")
    EMBED_MODEL = os.getenv("EMBED_MODEL", "nomic-embed-text")

    # Test execution
    PYTHON_CMD = os.getenv("PYTHON_CMD", sys.executable or "python3")
    JAVAC_CMD = os.getenv("JAVAC_CMD", "javac")
    JAVA_CMD = os.getenv("JAVA_CMD", "java")
    TEST_TIMEOUT = float(os.getenv("TEST_TIMEOUT", "5"))
    COMPILE_TIMEOUT = float(os.getenv("COMPILE_TIMEOUT", "60"))

    # Paths
    RUNS_DIR = os.getenv("RUNS_DIR", "runs")
    CACHE_PATH = os.getenv("CACHE_PATH", "runs/cache.jsonl")
    PROMPT_TEMPLATES = os.getenv("PROMPT_TEMPLATES", "prompts/templates.json")
    SAMPLE_CORPUS = os.getenv("SAMPLE_CORPUS", "data/sample_corpus.jsonl")

    # Transformations
    SEED = int(os.getenv("SEED", "0"))
    RANDOMIZED_SITES = _flag("RANDOMIZED_SITES")

    # Analysis / metrics toggles
    TRANSITIVE_CONTROL = _flag("TRANSITIVE_CONTROL")
    EXCLUDE_ANOMALIES = _flag("EXCLUDE_ANOMALIES")
    MASK_METHOD_NAME = _flag("MASK_METHOD_NAME")
    VALIDATE_IN_RUN = _flag("VALIDATE_IN_RUN")
    OWN_CODE_ONLY = _flag("OWN_CODE_ONLY")
    LANGUAGE = os.getenv("LANGUAGE", "both")
    OUTPUT_TESTS_PER_UNIT = int(os.getenv("OUTPUT_TESTS_PER_UNIT", "1"))

    # RQ2 sweep: list of {name, provider, model_id, base_url?, mock_mode?, replay_path?}
    MODELS: List[Dict[str, Any]] = []

    @classmethod
    def from_file(cls, path: str) -> "Config":
        """Build a Config instance whose attributes overlay the class defaults."""
        if not os.path.exists(path):
            raise ConfigError(f"Config file not found: {path}")
        with open(path, "rb") as f:
            raw = f.read()
        try:
            if path.endswith(".toml"):
                data = tomllib.loads(raw.decode("utf-8"))
            else:
                data = json.loads(raw.decode("utf-8"))
        except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as e:
            raise ConfigError(f"Cannot parse config file {path}: {e}") from e
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Config":
        config = cls()
        for key, value in data.items():
            config.set(key, value)
        return config

    def set(self, key: str, value: Any) -> None:
        name = key.upper()
        if name.startswith("_") or not hasattr(type(self), name):
            raise ConfigError(f"Unknown config key: {key}")
        default = getattr(type(self), name)
        if isinstance(default, bool):
            value = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
        elif isinstance(default, float):
            value = float(value)
        elif isinstance(default, int):
            value = int(value)
        setattr(self, name, value)

    def snapshot(self) -> Dict[str, Any]:
        """Every effective setting, key-sorted. Credentials only ever live in the environment."""
        return {name: getattr(self, name) for name in sorted(dir(type(self))) if name.isupper()}

    @staticmethod
    def get_current_date(fmt: str = "%Y-%m-%dT%H:%M:%S") -> str:
        return datetime.now().strftime(fmt)
