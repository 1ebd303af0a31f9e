"""Embedded document store and append-only audit log.

The store is a small key-document engine kept behind an interface so the
rest of the pipeline never touches a concrete database. DataIDs combine
the payload's content hash with a store sequence number: debuggable, and
two stores of identical bytes still get distinct ids.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import threading
from pathlib import Path
from typing import Any, Iterator, Optional

from .policy import utcnow


class NotFoundError(KeyError):
    pass


class CapacityError(RuntimeError):
    def __init__(self, retry_after_s: float = 1.0) -> None:
        super().__init__(f"store capacity exceeded, retry after {retry_after_s}s")
        self.retry_after_s = retry_after_s


def _canonical(payload: Any) -> bytes:
    if isinstance(payload, bytes):
        return payload
    return json.dumps(payload, sort_keys=True, default=str).encode()


class DocumentStore:
    """Linearizable-per-key document store with content-derived ids."""

    def __init__(self, capacity: Optional[int] = None) -> None:
        self._docs: dict[str, Any] = {}
        self._lock = threading.Lock()
        self._seq = itertools.count(1)
        self._capacity = capacity

    def store(self, payload: Any) -> str:
        with self._lock:
            if self._capacity is not None and len(self._docs) >= self._capacity:
                raise CapacityError()
            digest = hashlib.sha256(_canonical(payload)).hexdigest()[:16]
            data_id = f"{digest}-{next(self._seq):08d}"
            self._docs[data_id] = payload
            return data_id

    def fetch(self, data_id: str) -> Any:
        with self._lock:
            try:
                return self._docs[data_id]
            except KeyError:
                raise NotFoundError(data_id) from None

    def put(self, key: str, payload: Any) -> None:
        with self._lock:
            self._docs[key] = payload

    def get(self, key: str, default: Any = None) -> Any:
        with self._lock:
            return self._docs.get(key, default)

    def delete(self, key: str) -> bool:
        with self._lock:
            return self._docs.pop(key, None) is not None

    def keys(self) -> list[str]:
        with self._lock:
            return list(self._docs)

    def scan(self) -> Iterator[tuple[str, Any]]:
        with self._lock:
            items = list(self._docs.items())
        return iter(items)

    def __len__(self) -> int:
        with self._lock:
            return len(self._docs)


class AuditLog:
    """Append-only newline-delimited JSON log of pipeline state changes."""

    def __init__(self, path: Optional[Path] = None) -> None:
        self._path = Path(path) if path else None
        self._records: list[dict] = []
        self._lock = threading.Lock()

    def append(self, **fields: Any) -> dict:
        record = {"ts": utcnow().isoformat(), **fields}
        with self._lock:
            self._records.append(record)
            if self._path:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, default=str) + "\n")
        return record

    def records(self) -> list[dict]:
        with self._lock:
            return list(self._records)
