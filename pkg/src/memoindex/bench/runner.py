"""Run a workload against a target and report throughput, latency and memory."""
from __future__ import annotations

import csv
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..errors import ConfigError
from ..index import IndexConfig, LearnedIndex, RetrainEvent
from ..trainer import EngineBackend, Trainer, parse_backend
from .baseline import OrderedMap
from .workload import DELETE, INSERT, READ, SCAN, Corpus, WorkloadSpec, generate_stream, make_corpus

__all__ = ["TARGETS", "CATEGORIES", "RunReport", "build_target", "run", "report_csv",
           "read_report_csv", "SUMMARY_HEADER", "RETRAIN_HEADER"]

TARGETS = ("learned", "learned_no_memo", "baseline_ordered_map")
CATEGORIES = ("traverse", "ml_inference", "local_search", "buffer_search", "range_scan",
              "buffer_insert")
MEMORY_PARTS = ("model", "memo", "buffer", "structure", "total")

SUMMARY_HEADER = (["target", "ops", "elapsed_s", "throughput_ops_s"]
                  + [f"{c}_{s}" for c in CATEGORIES for s in ("mean_ns", "p99_ns")]
                  + [f"mem_{m}" for m in MEMORY_PARTS])
RETRAIN_HEADER = ["start_ms", "duration_ms", "total_keys", "delta_keys", "model_id"]

_ALIASES = {"btree": "baseline_ordered_map", "learned-no-memo": "learned_no_memo"}


@dataclass
class RunReport:
    target: str
    ops: int
    elapsed: float
    throughput: float
    latency_breakdown: Dict[str, Dict[str, float]] = field(default_factory=dict)
    retrain_log: List[RetrainEvent] = field(default_factory=list)
    memory: Dict[str, int] = field(default_factory=dict)
    lookups: int = 0
    hits: int = 0
    outcomes: Optional[list] = None

    def summary_row(self) -> dict:
        row = {"target": self.target, "ops": self.ops, "elapsed_s": self.elapsed,
               "throughput_ops_s": self.throughput}
        for c in CATEGORIES:
            stats = self.latency_breakdown.get(c, {})
            row[f"{c}_mean_ns"] = stats.get("mean_ns", 0.0)
            row[f"{c}_p99_ns"] = stats.get("p99_ns", 0.0)
        for m in MEMORY_PARTS:
            row[f"mem_{m}"] = self.memory.get(m, 0)
        return row


def build_target(target: str, keys, config: Optional[IndexConfig] = None,
                 backend=None):
    """Bulk-loaded target plus its trainer (or None).  Values are the keys."""
    target = _ALIASES.get(target, target)
    if target not in TARGETS:
        raise ConfigError(f"unknown target {target!r}")
    if target == "baseline_ordered_map":
        return OrderedMap().bulk_load_keys(keys, keys), None
    config = config or IndexConfig()
    if target == "learned_no_memo":
        config = IndexConfig(**{**config.__dict__, "memoize": False})
    index = LearnedIndex(config).bulk_load_keys(keys, keys)
    if target == "learned_no_memo":
        # every retrain is a full rebuild on the serving thread that filled the buffer
        index.request_sink = index.service
        return index, None
    if isinstance(backend, str):
        backend = parse_backend(backend)
    trainer = Trainer(index, backend or EngineBackend.inline(), cold_interval=config.cold_interval)
    return index, trainer.start()


def _execute(target, ops, profile_every, samples, record, stats):
    lookup, insert, delete, scan = target.lookup, target.insert, target.delete, target.range_scan
    profiled = hasattr(target, "lookup_profiled")
    lookups = hits = 0
    for i, (kind, key, arg) in enumerate(ops):
        if profiled and profile_every and i % profile_every == 0:
            t: dict = {}
            t0 = time.perf_counter_ns()
            if kind == READ:
                out = target.lookup_profiled(key, t)
                lookups += 1
                hits += out is not None
            elif kind == INSERT:
                out = target.insert_profiled(key, arg, t)
            elif kind == SCAN:
                out = scan(key, arg)
                t["range_scan"] = time.perf_counter_ns() - t0
            else:
                out = delete(key)
            for c, ns in t.items():
                samples[c].append(ns)
        elif kind == READ:
            out = lookup(key)
            lookups += 1
            hits += out is not None
        elif kind == INSERT:
            out = insert(key, arg)
        elif kind == DELETE:
            out = delete(key)
        else:
            out = scan(key, arg)
        if record is not None:
            record.append(out)
    stats[0] += lookups
    stats[1] += hits


def run(spec: WorkloadSpec, target: str = "learned", *, config: Optional[IndexConfig] = None,
        backend=None, corpus: Optional[Corpus] = None, built=None, profile_every: int = 16,
        record_outcomes: bool = False, quiesce: bool = True) -> RunReport:
    """Bulk-load ``spec.initial_keys`` keys, replay the stream, report.

    ``built`` reuses a ``(target, trainer)`` pair from :func:`build_target`.
    The stream is split into fixed batches handed round-robin to
    ``spec.serving_threads`` workers.  ``record_outcomes`` keeps every op's
    return value (single thread only).
    """
    name = _ALIASES.get(target, target)
    corpus = corpus or make_corpus(spec)
    config = config or IndexConfig(key_len=spec.key_len)
    if built is None:
        built = build_target(name, corpus.initial, config, backend)
    tgt, trainer = built
    if record_outcomes and spec.serving_threads != 1:
        raise ConfigError("record_outcomes needs a single serving thread")
    stream = generate_stream(spec, corpus)
    lock = threading.Lock()
    samples = {c: [] for c in CATEGORIES}
    stats = [0, 0]
    record = [] if record_outcomes else None
    done = [0]
    deadline = [None]
    batch = 1024

    def worker():
        local_samples = {c: [] for c in CATEGORIES}
        local_stats = [0, 0]
        while True:
            with lock:
                if deadline[0] is not None and time.perf_counter() >= deadline[0]:
                    break
                ops = []
                for op in stream:
                    ops.append(op)
                    if len(ops) == batch:
                        break
                done[0] += len(ops)
            if not ops:
                break
            _execute(tgt, ops, profile_every, local_samples, record, local_stats)
        with lock:
            for c in CATEGORIES:
                samples[c].extend(local_samples[c])
            stats[0] += local_stats[0]
            stats[1] += local_stats[1]

    threads = [threading.Thread(target=worker, name=f"serving-{i}")
               for i in range(spec.serving_threads)]
    t0 = time.perf_counter()
    if spec.duration is not None:
        deadline[0] = t0 + spec.duration
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    elapsed = time.perf_counter() - t0
    if trainer is not None:
        if quiesce:
            trainer.stop(drain=True)
        else:
            trainer.stop(drain=False)
    breakdown = {}
    for c, xs in samples.items():
        if xs:
            a = np.asarray(xs, dtype=np.float64)
            breakdown[c] = {"mean_ns": float(a.mean()), "p99_ns": float(np.percentile(a, 99)),
                            "count": len(xs)}
    log = list(getattr(tgt, "retrain_log", []))
    return RunReport(name, done[0], elapsed, done[0] / elapsed if elapsed > 0 else 0.0,
                     breakdown, log, tgt.memory_bytes(), stats[0], stats[1], record)


def report_csv(r: RunReport, out) -> tuple:
    """Write ``<out>_summary.csv`` (one row) and ``<out>_retrains.csv``.

    Retrain rows: start_ms (relative to the first retrain), duration_ms,
    total_keys, delta_keys, model_id.
    """
    out = os.fspath(out)
    summary, retrains = f"{out}_summary.csv", f"{out}_retrains.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_HEADER)
        w.writeheader()
        w.writerow(r.summary_row())
    t0 = r.retrain_log[0].start if r.retrain_log else 0.0
    with open(retrains, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RETRAIN_HEADER)
        for ev in r.retrain_log:
            w.writerow([(ev.start - t0) * 1e3, ev.duration * 1e3, ev.total_keys,
                        ev.delta_keys, ev.model_id])
    return summary, retrains


def read_report_csv(out) -> tuple:
    """Parse the two CSVs back into (summary dict, list of retrain dicts)."""
    out = os.fspath(out)
    with open(f"{out}_summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    with open(f"{out}_retrains.csv", newline="") as fh:
        log = list(csv.DictReader(fh))
    return rows, log
