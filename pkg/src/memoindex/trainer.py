"""Background retraining: a coalescing request queue and a training loop.

Serving threads only enqueue; the loop thread (and, for the parallel backend,
its worker pool) performs every factorization and publishes new leaf versions
through the index's own swap protocol.
"""
from __future__ import annotations

import logging
import threading
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .errors import ConfigError, ShutdownError

__all__ = ["RetrainRequest", "EngineBackend", "Trainer", "parse_backend"]

log = logging.getLogger(__name__)

# reasons that force a from-scratch rebuild win when requests coalesce
_PRIORITY = {"buffer_full": 0, "forced": 1, "accuracy_drop": 2, "cold_sweep": 3}


class RetrainRequest(NamedTuple):
    model_id: int
    reason: str = "buffer_full"
    enqueue_time: float = 0.0


@dataclass(frozen=True)
class EngineBackend:
    """Where a retrain job runs.

    ``inline``: on the loop thread.  ``parallel``: on ``te_count`` pool
    threads, at most one job per leaf at a time.  ``fixed_delay``: on the
    loop thread after sleeping ``delay`` seconds, which stands in for a
    slower training engine.
    """

    kind: str = "inline"
    te_count: int = 1
    delay: float = 0.0

    def __post_init__(self):
        if self.kind not in ("inline", "parallel", "fixed_delay"):
            raise ConfigError(f"unknown backend {self.kind!r}")
        if self.te_count < 1:
            raise ConfigError("te_count must be >= 1")
        if self.delay < 0:
            raise ConfigError("delay must be >= 0")

    @classmethod
    def inline(cls):
        return cls("inline")

    @classmethod
    def parallel(cls, te_count: int):
        return cls("parallel", te_count=te_count)

    @classmethod
    def fixed_delay(cls, seconds: float):
        return cls("fixed_delay", delay=seconds)


def parse_backend(text: str) -> EngineBackend:
    """``inline`` | ``parallel:K`` | ``delay:MS``."""
    name, _, arg = text.partition(":")
    try:
        if name == "inline" and not arg:
            return EngineBackend.inline()
        if name == "parallel":
            return EngineBackend.parallel(int(arg))
        if name == "delay":
            return EngineBackend.fixed_delay(float(arg) / 1000.0)
    except ValueError:
        pass
    raise ConfigError(f"bad backend spec {text!r}; use inline, parallel:K or delay:MS")


@dataclass
class TrainerStats:
    submitted: int = 0
    coalesced: int = 0
    completed: int = 0
    failed: int = 0
    sweeps: int = 0
    busy_seconds: float = 0.0
    thread_names: set = field(default_factory=set)


class Trainer:
    """Owns the training loop for one index.

    Attaching sets ``index.request_sink`` so buffer-full requests from
    serving threads land here.  Requests for the same leaf coalesce while
    queued; a request for a leaf whose job is running is queued behind it.
    """

    def __init__(self, index, backend: Optional[EngineBackend] = None,
                 cold_interval: Optional[float] = None, delete_fraction: float = 0.25):
        if not 0 < delete_fraction <= 1:
            raise ConfigError("delete_fraction must be in (0, 1]")
        self.index = index
        self.backend = backend or EngineBackend.inline()
        self.cold_interval = index.config.cold_interval if cold_interval is None else cold_interval
        self.delete_fraction = delete_fraction
        self.stats = TrainerStats()
        self._queue: "OrderedDict[int, RetrainRequest]" = OrderedDict()
        self._running: set = set()
        self._cond = threading.Condition()
        self._stopping = False
        self._stopped = False
        self._thread: Optional[threading.Thread] = None
        self._pool: Optional[ThreadPoolExecutor] = None
        self._last_sweep = time.monotonic()
        index.request_sink = self.submit

    # ------------------------------------------------------------- lifecycle

    def start(self) -> "Trainer":
        if self._thread is not None:
            return self
        if self.backend.kind == "parallel":
            self._pool = ThreadPoolExecutor(self.backend.te_count, thread_name_prefix="trainer-te")
        self._thread = threading.Thread(target=self.run_training_loop, name="trainer-loop",
                                        daemon=True)
        self._thread.start()
        return self

    def stop(self, drain: bool = True, timeout: Optional[float] = None):
        """Stop accepting requests; finish queued work first when ``drain``."""
        with self._cond:
            self._stopping = True
            if not drain:
                self._queue.clear()
            self._cond.notify_all()
        if self._thread is not None:
            self._thread.join(timeout)
        if self._pool is not None:
            self._pool.shutdown(wait=True)
        self._stopped = True
        if self.index.request_sink == self.submit:
            self.index.request_sink = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    # -------------------------------------------------------------- requests

    def submit(self, req) -> str:
        if not isinstance(req, RetrainRequest):
            req = RetrainRequest(int(req), "forced", time.monotonic())
        with self._cond:
            if self._stopping:
                raise ShutdownError("trainer is shut down")
            self.stats.submitted += 1
            queued = self._queue.get(req.model_id)
            if queued is not None:
                self.stats.coalesced += 1
                if _PRIORITY.get(req.reason, 0) > _PRIORITY.get(queued.reason, 0):
                    self._queue[req.model_id] = queued._replace(reason=req.reason)
                return "coalesced"
            self._queue[req.model_id] = req
            self._cond.notify_all()
            return "accepted"

    def pending(self) -> int:
        with self._cond:
            return len(self._queue) + len(self._running)

    def wait_idle(self, timeout: Optional[float] = None) -> bool:
        """Block until no request is queued or running."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while self._queue or self._running:
                left = None if deadline is None else deadline - time.monotonic()
                if left is not None and left <= 0:
                    return False
                self._cond.wait(left)
        return True

    # ------------------------------------------------------------------ loop

    def _next(self) -> Optional[RetrainRequest]:
        """Oldest queued request whose leaf has no job running (lock held)."""
        for model_id in self._queue:
            if model_id not in self._running:
                self._running.add(model_id)
                return self._queue.pop(model_id)
        return None

    def run_training_loop(self):
        while True:
            with self._cond:
                while True:
                    req = self._next()
                    if req is not None:
                        break
                    if self._stopping and not self._queue and not self._running:
                        return
                    timeout = None
                    if self.cold_interval:
                        timeout = max(0.0, self._last_sweep + self.cold_interval - time.monotonic())
                        if timeout == 0.0 and not self._stopping:
                            break
                    self._cond.wait(timeout if timeout is None else min(timeout, 0.5))
            if req is None:
                self.cold_sweep_tick()
                continue
            if self.backend.kind == "parallel":
                self._pool.submit(self._execute, req)
            else:
                if self.backend.kind == "fixed_delay" and self.backend.delay:
                    time.sleep(self.backend.delay)
                self._execute(req)

    def _execute(self, req: RetrainRequest):
        t0 = time.perf_counter()
        self.stats.thread_names.add(threading.current_thread().name)
        try:
            self.index.service(req)
            ok = True
        except Exception:
            log.exception("retrain of leaf %s failed; falling back to a cold train", req.model_id)
            ok = self._cold_fallback(req.model_id)
        with self._cond:
            self.stats.busy_seconds += time.perf_counter() - t0
            if ok:
                self.stats.completed += 1
            else:
                self.stats.failed += 1
            self._running.discard(req.model_id)
            self._cond.notify_all()

    def _cold_fallback(self, model_id) -> bool:
        leaf = self.index.leaf(model_id)
        if leaf is None:
            return True
        try:
            self.index.cold_train_leaf(leaf)
            return True
        except Exception:
            log.exception("cold train of leaf %s failed; keeping previous model", model_id)
            return False

    def cold_sweep_tick(self) -> int:
        """Queue a cold rebuild for every leaf with too many deleted slots."""
        self._last_sweep = time.monotonic()
        self.stats.sweeps += 1
        count = 0
        for leaf in self.index.leaves:
            v = leaf.state.version
            if v.n and (v.n - v.live_count()) / v.n > self.delete_fraction:
                try:
                    self.submit(RetrainRequest(leaf.model_id, "cold_sweep", time.monotonic()))
                except ShutdownError:
                    break
                count += 1
        return count
