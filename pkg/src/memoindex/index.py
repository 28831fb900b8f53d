"""Updatable string-key learned index.

Two levels: a router that binary-searches leaf boundary keys, and leaves that
each own a sorted key array, a linear model with error bounds, an insert
buffer and a memoized R factor.

Concurrency
-----------
Readers take no locks.  A leaf's state is one ``LeafState`` reference (the
trained ``LeafData`` plus the ``Buffer``); readers load it once and finish
against it.  Writers serialize per leaf on ``LeafNode.lock`` and only mutate
the current state in ways a concurrent reader tolerates: list appends,
single-slot stores, and copy-on-write when an element must be removed.
Retraining builds a successor ``LeafData`` outside the lock and swaps it in
under the lock.  Splits and merges publish a new ``RootRouter``; writers that
reach a retired leaf re-route.
"""
from __future__ import annotations

import enum
import itertools
import math
import operator
import threading
import time
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from itertools import compress
from typing import Callable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DuplicateKey, SingularError, UnsortedInput
from .iqrd import MemoizedFactor, absorb, empty_factor, merge_factors, xty_accumulate
from .keycodec import as_key, encode_codes, features_from_codes
from .model import LinearModel, cold_train, fit_bounds_codes, robust_beta
from .trainer import RetrainRequest

__all__ = [
    "IndexConfig",
    "LearnedIndex",
    "LeafNode",
    "LeafData",
    "RootRouter",
    "Outcome",
    "RetrainEvent",
]

_ERASED = object()


class Outcome(str, enum.Enum):
    INSERTED = "inserted"
    UPDATED = "updated"
    DELETED = "deleted"
    NOT_FOUND = "not-found"


@dataclass
class IndexConfig:
    key_len: int = 16
    split_threshold: float = 64.0
    merge_threshold: float = 8.0
    max_buffer: int = 1024
    cold_interval: float = 30.0
    chunk_rows: Optional[int] = None
    target_leaf_size: int = 65536
    memoize: bool = True
    auto_split_merge: bool = True

    def __post_init__(self):
        if self.key_len < 1:
            raise ConfigError("key_len must be >= 1")
        if not self.split_threshold > self.merge_threshold > 0:
            raise ConfigError("need split_threshold > merge_threshold > 0")
        if self.max_buffer < 1:
            raise ConfigError("max_buffer must be >= 1")
        if self.target_leaf_size < 1:
            raise ConfigError("target_leaf_size must be >= 1")
        if self.cold_interval < 0:
            raise ConfigError("cold_interval must be >= 0")


class LeafData:
    """Trained part of a leaf.  Only ``values`` and ``deleted`` change in place."""

    __slots__ = ("keys", "values", "deleted", "codes", "model", "memo", "xty")

    def __init__(self, keys, values, deleted, codes, model, memo, xty):
        self.keys: List[bytes] = keys
        self.values: list = values
        self.deleted: bytearray = deleted
        self.codes: np.ndarray = codes
        self.model: LinearModel = model
        self.memo: MemoizedFactor = memo
        self.xty: np.ndarray = xty

    @property
    def n(self) -> int:
        return len(self.keys)

    def live_count(self) -> int:
        return len(self.keys) - self.deleted.count(1)


class Buffer:
    """Append-ordered untrained entries; ``values[i]`` belongs to ``keys[i]``."""

    __slots__ = ("keys", "values")

    def __init__(self, keys=None, values=None):
        self.keys: List[bytes] = [] if keys is None else keys
        self.values: list = [] if values is None else values

    def __len__(self):
        return len(self.keys)


class LeafState(NamedTuple):
    version: LeafData
    buffer: Buffer


class LeafNode:
    __slots__ = ("model_id", "lock", "train_lock", "state", "retired")

    def __init__(self, model_id: int, state: LeafState):
        self.model_id = model_id
        self.lock = threading.Lock()
        self.train_lock = threading.Lock()
        self.state = state
        self.retired = False

    # convenience views of the current state
    @property
    def version(self) -> LeafData:
        return self.state.version

    @property
    def keys(self):
        return self.state.version.keys

    @property
    def model(self) -> LinearModel:
        return self.state.version.model

    @property
    def memo(self) -> MemoizedFactor:
        return self.state.version.memo

    @property
    def buffer(self) -> Buffer:
        return self.state.buffer

    def __repr__(self):
        v = self.state.version
        return (f"LeafNode(id={self.model_id}, n={v.n}, buffer={len(self.state.buffer)}, "
                f"mae={v.model.mean_abs_err:.2f})")


class RootRouter(NamedTuple):
    """Child ``i`` owns keys in ``[pivots[i-1], pivots[i])``."""

    pivots: List[bytes]
    leaves: List[LeafNode]

    def child(self, key: bytes) -> int:
        return bisect_right(self.pivots, key)


class RetrainEvent(NamedTuple):
    start: float
    duration: float
    total_keys: int
    delta_keys: int
    model_id: int
    kind: str


def _splice(seq, at, items):
    """Insert ``items[j]`` before ``seq[at[j]]``; ``at`` ascending."""
    out = seq[:0]
    prev = 0
    for p, item in zip(at, items):
        out += seq[prev:p]
        out.append(item)
        prev = p
    out += seq[prev:]
    return out


class LearnedIndex:
    """Ordered byte-string map backed by per-leaf linear models.

    Lookups predict a slot, search ``[slot + err_min, slot + err_max]`` and
    fall back to the leaf's insert buffer.  Inserts land in the buffer and a
    retrain request is raised once the buffer reaches ``max_buffer``; it is
    handed to ``request_sink`` (a trainer's ``submit``) or, with no sink,
    queued for :meth:`retrain_pending`.
    """

    def __init__(self, config: Optional[IndexConfig] = None):
        self.config = config or IndexConfig()
        self._ids = itertools.count()
        self._router_lock = threading.RLock()
        self._log_lock = threading.Lock()
        self._pending_lock = threading.Lock()
        self._pending: dict = {}
        self.request_sink: Optional[Callable[[RetrainRequest], object]] = None
        self.retrain_log: List[RetrainEvent] = []
        self._leaves_by_id: dict = {}
        self._publish_router([], [self._new_leaf(self._empty_data())])

    # ------------------------------------------------------------------ build

    @property
    def key_len(self) -> int:
        return self.config.key_len

    @property
    def router(self) -> RootRouter:
        return self._router

    @property
    def leaves(self) -> List[LeafNode]:
        return list(self._router.leaves)

    def leaf(self, model_id: int) -> Optional[LeafNode]:
        return self._leaves_by_id.get(model_id)

    def _empty_data(self, epoch=0) -> LeafData:
        p = self.key_len + 1
        return LeafData([], [], bytearray(), np.zeros((0, self.key_len), np.uint8),
                        LinearModel.constant(self.key_len, epoch=epoch),
                        empty_factor(p, epoch), np.zeros(p))

    def _new_leaf(self, data: LeafData, buffer: Optional[Buffer] = None) -> LeafNode:
        return LeafNode(next(self._ids), LeafState(data, buffer or Buffer()))

    def _publish_router(self, pivots, leaves):
        self._router = RootRouter(pivots, leaves)
        self._leaves_by_id = {leaf.model_id: leaf for leaf in leaves}

    def _train_data(self, keys, values, deleted, codes, epoch=0) -> LeafData:
        """Cold-train a leaf over ``keys`` (sorted); slot i holds row i."""
        n = len(keys)
        if n == 0:
            return self._empty_data(epoch)
        res = cold_train(features_from_codes(codes), np.arange(n, dtype=np.float64),
                         self.config.chunk_rows, epoch=epoch)
        model = LinearModel(res.beta, epoch=res.memo.epoch)
        model = fit_bounds_codes(model, codes)
        return LeafData(keys, values, deleted, codes, model, res.memo, res.xty)

    def bulk_load(self, pairs: Sequence[Tuple[bytes, object]]) -> "LearnedIndex":
        """Replace the contents with sorted, unique ``pairs``."""
        return self.bulk_load_keys([as_key(k) for k, _ in pairs], [v for _, v in pairs])

    def bulk_load_keys(self, keys: Sequence[bytes], values: Sequence) -> "LearnedIndex":
        """:meth:`bulk_load` from parallel key and value sequences."""
        if len(keys) != len(values):
            raise ValueError(f"{len(keys)} keys but {len(values)} values")
        if keys and not all(type(k) is bytes and k for k in keys):
            keys = [as_key(k) for k in keys]
        if not all(map(operator.lt, keys, itertools.islice(keys, 1, None))):
            for i in range(1, len(keys)):
                if keys[i - 1] == keys[i]:
                    raise DuplicateKey(f"duplicate key {keys[i]!r}")
                if keys[i - 1] > keys[i]:
                    raise UnsortedInput(f"keys out of order at {i}: {keys[i-1]!r} > {keys[i]!r}")
        n = len(keys)
        count = max(1, math.ceil(n / self.config.target_leaf_size))
        bounds = np.linspace(0, n, count + 1).round().astype(int)
        leaves, pivots = [], []
        for a, b in zip(bounds[:-1], bounds[1:]):
            ks = keys[a:b]
            data = self._train_data(ks, list(values[a:b]), bytearray(b - a),
                                    encode_codes(ks, self.key_len))
            leaves.append(self._new_leaf(data))
            if a > 0:
                pivots.append(keys[a])
        with self._router_lock:
            for leaf in self._router.leaves:
                leaf.retired = True
            self._publish_router(pivots, leaves)
        return self

    # ------------------------------------------------------------------ reads

    def _route(self, key: bytes) -> LeafNode:
        router = self._router
        return router.leaves[bisect_right(router.pivots, key)]

    @staticmethod
    def _find_trained(v: LeafData, key: bytes) -> int:
        n = len(v.keys)
        if not n:
            return -1
        m = v.model
        pos = m.position(key, n)
        lo = pos + m.err_min
        if lo < 0:
            lo = 0
        hi = pos + m.err_max + 1
        if hi > n:
            hi = n
        i = bisect_left(v.keys, key, lo, hi)
        if i < hi and v.keys[i] == key:
            return i
        return -1

    def lookup(self, key, default=None):
        """Value stored under ``key`` or ``default``."""
        if type(key) is not bytes:
            key = as_key(key)
        st = self._route(key).state
        v = st.version
        i = self._find_trained(v, key)
        if i >= 0:
            val = v.values[i]
            if v.deleted[i] or val is _ERASED:
                return default
            return val
        buf = st.buffer
        try:
            j = buf.keys.index(key)
        except ValueError:
            return default
        return buf.values[j]

    get = lookup

    def __contains__(self, key) -> bool:
        return self.lookup(key, _ERASED) is not _ERASED

    def lookup_profiled(self, key, timings: dict, default=None):
        """:meth:`lookup` that adds per-phase nanoseconds into ``timings``."""
        clock = time.perf_counter_ns
        if type(key) is not bytes:
            key = as_key(key)
        t0 = clock()
        st = self._route(key).state
        v = st.version
        t1 = clock()
        timings["traverse"] = timings.get("traverse", 0) + t1 - t0
        n = len(v.keys)
        if n:
            m = v.model
            pos = m.position(key, n)
            t2 = clock()
            timings["ml_inference"] = timings.get("ml_inference", 0) + t2 - t1
            lo = max(pos + m.err_min, 0)
            hi = min(pos + m.err_max + 1, n)
            i = bisect_left(v.keys, key, lo, hi)
            hit = i < hi and v.keys[i] == key
            t1 = clock()
            timings["local_search"] = timings.get("local_search", 0) + t1 - t2
            if hit:
                val = v.values[i]
                return default if v.deleted[i] or val is _ERASED else val
        buf = st.buffer
        try:
            j = buf.keys.index(key)
            val = buf.values[j]
        except ValueError:
            val = default
        timings["buffer_search"] = timings.get("buffer_search", 0) + clock() - t1
        return val

    def range_scan(self, start, limit: int) -> List[Tuple[bytes, object]]:
        """First ``limit`` live (key, value) pairs with key >= ``start``."""
        if limit < 1:
            raise ValueError("limit must be >= 1")
        start = as_key(start)
        router = self._router
        out: List[Tuple[bytes, object]] = []
        for leaf in router.leaves[router.child(start):]:
            st = leaf.state
            v = st.version
            buf = st.buffer
            bk = list(buf.keys)
            bv = buf.values[:len(bk)]
            pending = sorted((k, val) for k, val in zip(bk, bv) if k >= start)
            keys, values, deleted = v.keys, v.values, v.deleted
            need = limit - len(out)
            i = bisect_left(keys, start)
            n = len(keys)
            got: list = []
            while len(got) < need and i < n:
                j = i + need - len(got)
                got += [(k, val) for k, val, d in zip(keys[i:j], values[i:j], deleted[i:j])
                        if not d and val is not _ERASED]
                i = j
            if pending:
                got += pending
                got.sort()
            out += got[:need]
            if len(out) >= limit:
                break
        return out

    def items(self) -> Iterator[Tuple[bytes, object]]:
        """All live pairs in key order (per-leaf snapshots)."""
        for leaf in self._router.leaves:
            st = leaf.state
            v = st.version
            bk = list(st.buffer.keys)
            bv = st.buffer.values[:len(bk)]
            trained = [(k, val) for k, val, d in zip(v.keys, v.values, v.deleted)
                       if not d and val is not _ERASED]
            yield from sorted(trained + list(zip(bk, bv)))

    def __len__(self) -> int:
        total = 0
        for leaf in self._router.leaves:
            st = leaf.state
            total += st.version.live_count() + len(st.buffer)
        return total

    # ----------------------------------------------------------------- writes

    def insert(self, key, value) -> Outcome:
        key = as_key(key)
        while True:
            leaf = self._route(key)
            with leaf.lock:
                if leaf.retired:
                    continue
                st = leaf.state
                v = st.version
                i = self._find_trained(v, key)
                if i >= 0:
                    revived = v.deleted[i]
                    v.values[i] = value
                    v.deleted[i] = 0
                    return Outcome.INSERTED if revived else Outcome.UPDATED
                buf = st.buffer
                try:
                    j = buf.keys.index(key)
                except ValueError:
                    j = -1
                if j >= 0:
                    buf.values[j] = value
                    return Outcome.UPDATED
                buf.values.append(value)
                buf.keys.append(key)
                full = len(buf.keys) >= self.config.max_buffer
            if full:
                self.request(leaf.model_id, "buffer_full")
            return Outcome.INSERTED

    def insert_profiled(self, key, value, timings: dict) -> Outcome:
        """:meth:`insert` charging the whole call to ``buffer_insert``."""
        t0 = time.perf_counter_ns()
        out = self.insert(key, value)
        timings["buffer_insert"] = timings.get("buffer_insert", 0) + time.perf_counter_ns() - t0
        return out

    def delete(self, key) -> Outcome:
        """Flag a trained key (memo untouched) or drop a buffered one."""
        key = as_key(key)
        while True:
            leaf = self._route(key)
            with leaf.lock:
                if leaf.retired:
                    continue
                st = leaf.state
                v = st.version
                i = self._find_trained(v, key)
                if i >= 0:
                    if v.deleted[i]:
                        return Outcome.NOT_FOUND
                    v.deleted[i] = 1
                    v.values[i] = _ERASED
                    return Outcome.DELETED
                buf = st.buffer
                try:
                    j = buf.keys.index(key)
                except ValueError:
                    return Outcome.NOT_FOUND
                n = len(buf.keys)
                keys = buf.keys[:j] + buf.keys[j + 1:n]
                values = buf.values[:j] + buf.values[j + 1:n]
                leaf.state = LeafState(v, Buffer(keys, values))
                return Outcome.DELETED

    # --------------------------------------------------------------- retrains

    def request(self, model_id: int, reason: str = "forced"):
        req = RetrainRequest(model_id, reason, time.monotonic())
        sink = self.request_sink
        if sink is not None:
            return sink(req)
        with self._pending_lock:
            if model_id in self._pending:
                return "coalesced"
            self._pending[model_id] = req
        return "accepted"

    def retrain_pending(self) -> int:
        """Service queued requests in the calling thread."""
        done = 0
        while True:
            with self._pending_lock:
                if not self._pending:
                    return done
                model_id = next(iter(self._pending))
                req = self._pending.pop(model_id)
            self.service(req)
            done += 1

    def retrain_all(self, cold: bool = False) -> int:
        done = 0
        for leaf in self.leaves:
            if cold:
                self.cold_train_leaf(leaf)
            else:
                self.retrain_leaf(leaf, force=True)
            done += 1
        return done

    def service(self, req: RetrainRequest):
        """Run one retrain job, then split/merge if accuracy warrants it."""
        leaf = self._leaves_by_id.get(req.model_id)
        if leaf is None or leaf.retired:
            return None
        if req.reason in ("cold_sweep", "accuracy_drop"):
            ev = self.cold_train_leaf(leaf)
        else:
            try:
                ev = self.retrain_leaf(leaf, force=req.reason == "forced")
            except (SingularError, FloatingPointError):
                ev = self.cold_train_leaf(leaf)
        if self.config.auto_split_merge:
            self.maintain(leaf)
        return ev

    def _log(self, t0, leaf_n, delta, model_id, kind):
        ev = RetrainEvent(t0, time.perf_counter() - t0, leaf_n, delta, model_id, kind)
        with self._log_lock:
            self.retrain_log.append(ev)
        return ev

    def _snapshot(self, leaf):
        with leaf.lock:
            st = leaf.state
            n0 = len(st.buffer.keys)
            return st.version, list(st.buffer.keys[:n0]), bytes(st.version.deleted)

    def _publish(self, leaf, v, keep, drained, ins, data_fn):
        """Swap in a successor built from ``v`` (the live version).

        ``keep`` masks surviving trained slots (None keeps all); ``drained``
        are sorted buffer keys placed before kept slot ``ins[j]``.  Values and
        delete flags are read now, under the lock, so writes that raced with
        training are carried over.
        """
        with leaf.lock:
            cur = leaf.state
            assert cur.version is v, "leaf replaced during retrain"
            buf = cur.buffer
            n = len(buf.keys)
            live = dict(zip(buf.keys[:n], buf.values[:n]))
            dvals, dflags = [], bytearray()
            for k in drained:
                if k in live:
                    dvals.append(live.pop(k))
                    dflags.append(0)
                else:
                    dvals.append(_ERASED)
                    dflags.append(1)
            if keep is None:
                values, deleted = v.values, v.deleted
            else:
                values = list(compress(v.values, keep))
                deleted = bytearray(compress(v.deleted, keep))
            new_values = _splice(values, ins, dvals)
            new_deleted = _splice(deleted, ins, dflags)
            data = data_fn(new_values, new_deleted)
            rest_keys = [k for k in buf.keys[:n] if k in live]
            rest_vals = [live[k] for k in rest_keys]
            if keep is not None:
                # slots purged as deleted but re-inserted while training
                for k, val, was_kept, flag in zip(v.keys, v.values, keep, v.deleted):
                    if not was_kept and not flag:
                        rest_keys.append(k)
                        rest_vals.append(val)
            leaf.state = LeafState(data, Buffer(rest_keys, rest_vals))
        return data

    def retrain_leaf(self, leaf: LeafNode, force: bool = False) -> Optional[RetrainEvent]:
        """Incremental retrain: absorb only the drained buffer into the memo."""
        if not self.config.memoize:
            return self.cold_train_leaf(leaf)
        with leaf.train_lock:
            if leaf.retired:
                return None
            t0 = time.perf_counter()
            v, drained, _ = self._snapshot(leaf)
            if not drained and not force:
                return None
            drained.sort()
            ins = [bisect_left(v.keys, k) for k in drained]
            append = not drained or ins[0] == v.n
            d = len(drained)
            dcodes = encode_codes(drained, self.key_len)
            X_delta = features_from_codes(dcodes)
            codes = np.insert(v.codes, ins, dcodes, axis=0) if d else v.codes
            n = v.n + d
            memo = absorb(v.memo, X_delta, self.config.chunk_rows)
            if append:
                Y_delta = np.asarray(ins, dtype=np.float64) + np.arange(d)
                xty = xty_accumulate(v.xty, X_delta, Y_delta)
            else:
                xty = self._xty(codes)
            model = self._solve(memo, xty, codes)
            new_keys = _splice(v.keys, ins, drained)
            self._publish(leaf, v, None, drained, ins,
                          lambda vals, dels: LeafData(new_keys, vals, dels, codes, model, memo, xty))
            return self._log(t0, n, d, leaf.model_id, "incremental")

    @staticmethod
    def _xty(codes: np.ndarray) -> np.ndarray:
        y = np.arange(codes.shape[0], dtype=np.float64)
        return np.append(y @ codes, y.sum())

    def _solve(self, memo: MemoizedFactor, xty, codes) -> LinearModel:
        n = codes.shape[0]
        if n == 0:
            return LinearModel.constant(self.key_len, epoch=memo.epoch)
        try:
            beta, _ = robust_beta(memo.r, xty)
            model = LinearModel(beta, epoch=memo.epoch)
        except SingularError:
            model = LinearModel.constant(self.key_len, (n - 1) // 2, epoch=memo.epoch)
        return fit_bounds_codes(model, codes)

    def cold_train_leaf(self, leaf: LeafNode) -> Optional[RetrainEvent]:
        """Rebuild from live keys: purge flagged slots, drain buffer, new memo."""
        with leaf.train_lock:
            if leaf.retired:
                return None
            t0 = time.perf_counter()
            v, drained, flags = self._snapshot(leaf)
            keep = [not f for f in flags]
            keys = list(compress(v.keys, keep))
            drained.sort()
            ins = [bisect_left(keys, k) for k in drained]
            codes = v.codes[np.frombuffer(flags, dtype=np.uint8) == 0] if v.n else v.codes
            codes = np.insert(codes, ins, encode_codes(drained, self.key_len), axis=0)
            new_keys = _splice(keys, ins, drained)
            n = len(new_keys)
            epoch = v.memo.epoch
            if n:
                res = cold_train(features_from_codes(codes), np.arange(n, dtype=np.float64),
                                 self.config.chunk_rows, epoch=epoch)
                memo, xty = res.memo, res.xty
            else:
                memo, xty = empty_factor(self.key_len + 1, epoch + 1), np.zeros(self.key_len + 1)
            model = self._solve(memo, xty, codes)
            self._publish(leaf, v, keep, drained, ins,
                          lambda vals, dels: LeafData(new_keys, vals, dels, codes, model, memo, xty))
            return self._log(t0, n, len(drained), leaf.model_id, "cold")

    # -------------------------------------------------------------- structure

    def maintain(self, leaf: LeafNode):
        """Split an inaccurate leaf or merge an accurate one with a neighbor."""
        if leaf.retired:
            return None
        v = leaf.state.version
        cfg = self.config
        if v.model.mean_abs_err > cfg.split_threshold and v.live_count() >= 2 * (self.key_len + 1):
            return self.split_leaf(leaf)
        if v.model.mean_abs_err < cfg.merge_threshold:
            leaves = self._router.leaves
            try:
                i = leaves.index(leaf)
            except ValueError:
                return None
            for j in (i + 1, i - 1):
                if 0 <= j < len(leaves):
                    other = leaves[j].state.version
                    if other.model.mean_abs_err < cfg.merge_threshold \
                            and other.n + v.n <= cfg.target_leaf_size:
                        a, b = (leaf, leaves[j]) if j > i else (leaves[j], leaf)
                        return self.merge_leaves(a, b)
        return None

    def _live_entries(self, leaf: LeafNode):
        st = leaf.state
        v = st.version
        trained = [(k, val) for k, val, d in zip(v.keys, v.values, v.deleted)
                   if not d and val is not _ERASED]
        return sorted(trained + list(zip(st.buffer.keys, st.buffer.values)))

    def _build_from_entries(self, entries, epoch) -> LeafNode:
        keys = [k for k, _ in entries]
        data = self._train_data(keys, [val for _, val in entries], bytearray(len(keys)),
                                encode_codes(keys, self.key_len), epoch)
        return self._new_leaf(data)

    def split_leaf(self, leaf: LeafNode) -> Optional[Tuple[LeafNode, LeafNode]]:
        """Split live keys at the median into two cold-trained leaves."""
        with self._router_lock, leaf.train_lock, leaf.lock:
            if leaf.retired:
                return None
            router = self._router
            i = router.leaves.index(leaf)
            entries = self._live_entries(leaf)
            if len(entries) < 2:
                return None
            t0 = time.perf_counter()
            mid = len(entries) // 2
            epoch = leaf.state.version.memo.epoch
            left = self._build_from_entries(entries[:mid], epoch)
            right = self._build_from_entries(entries[mid:], epoch)
            pivots = router.pivots[:i] + [entries[mid][0]] + router.pivots[i:]
            leaves = router.leaves[:i] + [left, right] + router.leaves[i + 1:]
            leaf.retired = True
            self._publish_router(pivots, leaves)
            self._log(t0, len(entries), 0, leaf.model_id, "split")
            return left, right

    def merge_leaves(self, a: LeafNode, b: LeafNode) -> Optional[LeafNode]:
        """Merge adjacent leaves, reusing both memoized factors."""
        with self._router_lock, a.train_lock, b.train_lock, a.lock, b.lock:
            if a.retired or b.retired:
                return None
            router = self._router
            i = router.leaves.index(a)
            if i + 1 >= len(router.leaves) or router.leaves[i + 1] is not b:
                raise ValueError("merge_leaves needs adjacent leaves in key order")
            t0 = time.perf_counter()
            va, vb = a.state.version, b.state.version
            memo = merge_factors(va.memo, vb.memo)
            # b's slots shift by len(a): X_b^T (y + off) = X_b^T y + off * X_b^T 1
            ones_b = np.append(vb.codes.sum(axis=0, dtype=np.float64), float(vb.n))
            xty = va.xty + vb.xty + va.n * ones_b
            codes = np.vstack((va.codes, vb.codes))
            model = self._solve(memo, xty, codes)
            data = LeafData(va.keys + vb.keys, va.values + vb.values,
                            va.deleted + vb.deleted, codes, model, memo, xty)
            ba, bb = a.state.buffer, b.state.buffer
            buf = Buffer(ba.keys + bb.keys, ba.values + bb.values)
            merged = self._new_leaf(data, buf)
            pivots = router.pivots[:i] + router.pivots[i + 1:]
            leaves = router.leaves[:i] + [merged] + router.leaves[i + 2:]
            a.retired = b.retired = True
            self._publish_router(pivots, leaves)
            self._log(t0, data.n, 0, merged.model_id, "merge")
            return merged

    # ------------------------------------------------------------------ stats

    def memory_bytes(self) -> dict:
        """Index-structure bytes by component; key and value payloads excluded.

        ``key_matrix`` (the cached byte rows used for training) is reported
        but left out of ``total``.
        """
        p = self.key_len + 1
        router = self._router
        model = memo = buffer = structure = key_matrix = 0
        for leaf in router.leaves:
            st = leaf.state
            v = st.version
            model += 8 * p + 32 + v.xty.nbytes
            memo += v.memo.nbytes
            buffer += 16 * len(st.buffer)
            structure += 17 * v.n
            key_matrix += v.codes.nbytes
        structure += 8 * len(router.pivots) + 8 * len(router.leaves)
        return {"model": model, "memo": memo, "buffer": buffer, "structure": structure,
                "total": model + memo + buffer + structure, "key_matrix": key_matrix}

    def stats(self) -> dict:
        rows = []
        for leaf in self._router.leaves:
            st = leaf.state
            v = st.version
            rows.append({
                "model_id": leaf.model_id,
                "keys": v.n,
                "live": v.live_count(),
                "deleted": v.n - v.live_count(),
                "buffer": len(st.buffer),
                "mae": v.model.mean_abs_err,
                "err_min": v.model.err_min,
                "err_max": v.model.err_max,
                "model_epoch": v.model.epoch,
                "memo_epoch": v.memo.epoch,
                "memo_rows": v.memo.trained_rows,
                "memo_bytes": v.memo.nbytes,
            })
        return {"leaves": rows, "memory": self.memory_bytes()}
