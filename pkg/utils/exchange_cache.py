# utils/exchange_cache.py
"""Append-only JSONL store of model exchanges keyed by cache_key."""
import json
import logging
import os
import threading
from typing import Dict, Iterator, List, Optional

import xxhash

from utils.errors import CacheCorruption

logger = logging.getLogger(__name__)


def cache_key(model_id: str, rendered: str, temperature: float) -> str:
    payload = json.dumps([model_id, rendered, float(temperature)], ensure_ascii=False)
    return xxhash.xxh3_128_hexdigest(payload.encode("utf-8"))


class ExchangeCache:
    """Concurrent readers, serialized writers. Records are immutable once written."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._records: Dict[str, Dict] = {}
        self._order: List[str] = []
        if os.path.exists(path):
            self._load()

    def _load(self) -> None:
        with open(self.path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise CacheCorruption(f"{self.path}:{lineno}: invalid JSON ({e})") from e
                key = record.get("cache_key") if isinstance(record, dict) else None
                if not key or "raw_response" not in record:
                    raise CacheCorruption(f"{self.path}:{lineno}: record lacks cache_key/raw_response")
                if key not in self._records:
                    self._order.append(key)
                self._records[key] = record
        logger.debug(f"Loaded {len(self._records)} cached exchanges from {self.path}")

    def get(self, key: str) -> Optional[Dict]:
        return self._records.get(key)

    def __contains__(self, key: str) -> bool:
        return key in self._records

    def __len__(self) -> int:
        return len(self._records)

    def put(self, record: Dict) -> None:
        key = record["cache_key"]
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._lock:
            if key in self._records:
                return
            directory = os.path.dirname(self.path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
            self._records[key] = record
            self._order.append(key)

    def records(self) -> Iterator[Dict]:
        for key in list(self._order):
            yield self._records[key]
