"""Newline-delimited key files."""
from __future__ import annotations

import logging
import os
from typing import List, Sequence, Tuple

from ..errors import DatasetError

__all__ = ["load_dataset", "load_dataset_report", "write_dataset"]

log = logging.getLogger(__name__)


def load_dataset_report(path, key_len: int) -> Tuple[List[bytes], int]:
    """Sorted unique keys from ``path`` and the number of truncated lines.

    Lines are split on ``\\n`` only (a trailing ``\\r`` is kept as a key
    byte), empty lines are skipped and keys longer than ``key_len`` are
    cut to ``key_len`` bytes before deduplication.
    """
    if key_len < 1:
        raise DatasetError("key_len must be >= 1")
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DatasetError(f"cannot read {os.fspath(path)!r}: {exc}") from exc
    keys = set()
    truncated = 0
    for line in data.split(b"\n"):
        if not line:
            continue
        if len(line) > key_len:
            line = line[:key_len]
            truncated += 1
        keys.add(line)
    if not keys:
        raise DatasetError(f"{os.fspath(path)!r} holds no keys")
    if truncated:
        log.warning("%d keys in %s truncated to %d bytes", truncated, os.fspath(path), key_len)
    return sorted(keys), truncated


def load_dataset(path, key_len: int) -> List[bytes]:
    return load_dataset_report(path, key_len)[0]


def write_dataset(path, keys: Sequence[bytes]) -> None:
    with open(path, "wb") as fh:
        fh.write(b"\n".join(keys))
        fh.write(b"\n")
