"""Balanced ordered map behind the index's API, for comparison and as an oracle."""
from __future__ import annotations

import threading
from typing import List, Sequence, Tuple

from sortedcontainers import SortedDict

from ..index import Outcome
from ..keycodec import as_key

__all__ = ["OrderedMap"]


class OrderedMap:
    def __init__(self):
        self._d = SortedDict()
        self._lock = threading.Lock()

    def bulk_load(self, pairs: Sequence[Tuple[bytes, object]]) -> "OrderedMap":
        with self._lock:
            self._d = SortedDict((as_key(k), v) for k, v in pairs)
        return self

    def bulk_load_keys(self, keys, values) -> "OrderedMap":
        return self.bulk_load(list(zip(keys, values)))

    def lookup(self, key, default=None):
        if type(key) is not bytes:
            key = as_key(key)
        return self._d.get(key, default)

    get = lookup

    def __contains__(self, key):
        return as_key(key) in self._d

    def __len__(self):
        return len(self._d)

    def insert(self, key, value) -> Outcome:
        key = as_key(key)
        with self._lock:
            existed = key in self._d
            self._d[key] = value
        return Outcome.UPDATED if existed else Outcome.INSERTED

    def delete(self, key) -> Outcome:
        key = as_key(key)
        with self._lock:
            if self._d.pop(key, _MISSING) is _MISSING:
                return Outcome.NOT_FOUND
        return Outcome.DELETED

    def range_scan(self, start, limit: int) -> List[Tuple[bytes, object]]:
        if limit < 1:
            raise ValueError("limit must be >= 1")
        start = as_key(start)
        with self._lock:
            i = self._d.bisect_left(start)
            keys = list(self._d.islice(i, i + limit))
            return [(k, self._d[k]) for k in keys]

    def items(self):
        return iter(list(self._d.items()))

    def memory_bytes(self) -> dict:
        # pointer pair per entry, comparable to the index's slot accounting
        n = len(self._d)
        return {"model": 0, "memo": 0, "buffer": 0, "structure": 16 * n, "total": 16 * n}


_MISSING = object()
