"""Tall-skinny and memoized QR factorization.

A stack of R factors has the same Gram matrix as the stack of the rows they
came from, so R of a tall matrix can be built from the R's of its row blocks,
and a cached R can absorb new rows without revisiting old ones.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from .errors import ShapeError
from .linalg import householder_qrd

__all__ = [
    "MemoizedFactor",
    "empty_factor",
    "parallel_qrd",
    "streaming_qrd",
    "absorb",
    "merge_factors",
    "xty_accumulate",
    "default_chunk_rows",
]


def default_chunk_rows(cols: int) -> int:
    return 4 * cols


@dataclass(frozen=True)
class MemoizedFactor:
    """Cached R of every row absorbed so far, plus bookkeeping."""

    r: np.ndarray
    trained_rows: int = 0
    epoch: int = 0

    def __post_init__(self):
        r = np.array(self.r, dtype=np.float64)
        if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape[0] == 0:
            raise ShapeError(f"R must be square and non-empty, got {r.shape}")
        r.flags.writeable = False
        object.__setattr__(self, "r", r)

    @property
    def dim(self) -> int:
        return self.r.shape[0]

    @property
    def nbytes(self) -> int:
        return self.r.nbytes

    def gram(self) -> np.ndarray:
        return self.r.T @ self.r


def empty_factor(dim: int, epoch: int = 0) -> MemoizedFactor:
    return MemoizedFactor(np.zeros((dim, dim)), 0, epoch)


def _qrd_padded(X):
    # short blocks: zero rows leave the Gram unchanged
    m, n = X.shape
    if m < n:
        X = np.vstack((X, np.zeros((n - m, n))))
    return householder_qrd(X)


def _stack_qrd(top, bottom):
    return householder_qrd(np.vstack((top, bottom)))


def streaming_qrd(blocks: Iterable[np.ndarray]) -> np.ndarray:
    """R of the vertical concatenation of ``blocks``, consumed lazily.

    Block factors are combined pairwise in a binary tree: two factors of
    equal height are merged as soon as both exist, so four blocks reduce in
    two rounds and memory stays O(log blocks) factors.
    """
    stack = []
    for block in blocks:
        level, R = 0, _qrd_padded(np.asarray(block, dtype=np.float64))
        while stack and stack[-1][0] == level:
            R = _stack_qrd(stack.pop()[1], R)
            level += 1
        stack.append((level, R))
    if not stack:
        raise ShapeError("streaming_qrd needs at least one block")
    R = stack.pop()[1]
    while stack:
        R = _stack_qrd(stack.pop()[1], R)
    return R


def _chunk_bounds(rows, cols, chunk_rows):
    starts = list(range(0, rows, chunk_rows))
    bounds = [(s, min(s + chunk_rows, rows)) for s in starts]
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] < cols:
        last = bounds.pop()
        bounds[-1] = (bounds[-1][0], last[1])
    return bounds


def parallel_qrd(X, chunk_rows: Optional[int] = None, executor=None) -> np.ndarray:
    """R of a tall-skinny X from independently factored row chunks.

    ``executor`` (anything with ``map``) runs chunk factorizations and each
    level of the reduction concurrently; without one the reduction streams.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ShapeError(f"parallel_qrd needs a non-empty 2-D matrix, got {X.shape}")
    rows, cols = X.shape
    chunk_rows = default_chunk_rows(cols) if chunk_rows is None else int(chunk_rows)
    if chunk_rows < cols:
        raise ShapeError(f"chunk_rows={chunk_rows} < cols={cols}")
    if rows <= chunk_rows:
        return _qrd_padded(X)
    chunks = [X[a:b] for a, b in _chunk_bounds(rows, cols, chunk_rows)]
    if executor is None:
        return streaming_qrd(chunks)
    rs = list(executor.map(_qrd_padded, chunks))
    while len(rs) > 1:
        pairs = [(rs[i], rs[i + 1]) for i in range(0, len(rs) - 1, 2)]
        merged = list(executor.map(lambda ab: _stack_qrd(*ab), pairs))
        if len(rs) % 2:
            merged.append(rs[-1])
        rs = merged
    return rs[0]


def absorb(memo: MemoizedFactor, X_delta, chunk_rows: Optional[int] = None,
           executor=None) -> MemoizedFactor:
    """Fold new rows into a cached factor; old rows are never touched."""
    X_delta = np.asarray(X_delta, dtype=np.float64)
    if X_delta.ndim == 1 and X_delta.size == 0:
        X_delta = X_delta.reshape(0, memo.dim)
    if X_delta.ndim != 2 or X_delta.shape[1] != memo.dim:
        raise ShapeError(f"X_delta shape {X_delta.shape} does not match R dim {memo.dim}")
    delta = X_delta.shape[0]
    if delta == 0:
        return replace(memo, epoch=memo.epoch + 1)
    if delta < memo.dim:
        r_new = _stack_qrd(memo.r, X_delta)
    else:
        r_delta = parallel_qrd(X_delta, chunk_rows, executor)
        r_new = _stack_qrd(memo.r, r_delta)
    return MemoizedFactor(r_new, memo.trained_rows + delta, memo.epoch + 1)


def merge_factors(a: MemoizedFactor, b: MemoizedFactor) -> MemoizedFactor:
    if a.dim != b.dim:
        raise ShapeError(f"cannot merge factors of dim {a.dim} and {b.dim}")
    r = _stack_qrd(a.r, b.r)
    return MemoizedFactor(r, a.trained_rows + b.trained_rows, max(a.epoch, b.epoch) + 1)


def xty_accumulate(prev, X_delta, Y_delta) -> np.ndarray:
    """``prev + X_delta^T Y_delta``."""
    prev = np.asarray(prev, dtype=np.float64)
    X_delta = np.asarray(X_delta, dtype=np.float64)
    Y_delta = np.asarray(Y_delta, dtype=np.float64)
    if X_delta.ndim != 2 or Y_delta.ndim != 1 or X_delta.shape[0] != Y_delta.shape[0]:
        raise ShapeError(f"X_delta {X_delta.shape} and Y_delta {Y_delta.shape} disagree")
    if X_delta.shape[0] == 0:
        return prev.copy()
    if X_delta.shape[1] != prev.shape[0]:
        raise ShapeError(f"X_delta has {X_delta.shape[1]} cols, accumulator {prev.shape[0]}")
    return prev + X_delta.T @ Y_delta
