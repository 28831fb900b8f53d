"""Scaling and throughput experiments built on the runner."""
from __future__ import annotations

import gc
import statistics
import time
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..index import IndexConfig, LearnedIndex
from ..iqrd import MemoizedFactor, absorb, streaming_qrd, xty_accumulate
from ..keycodec import features_from_codes
from ..linalg import solve_beta
from ..trainer import EngineBackend
from .runner import RunReport, build_target, run
from .workload import WorkloadSpec, make_corpus

__all__ = [
    "sorted_codes",
    "retrain_scaling",
    "fixed_delay_sweep",
    "lazy_delete_overhead",
    "background_vs_blocking",
]


def sorted_codes(n: int, key_len: int, seed: int = 0, block: int = 1 << 20) -> np.ndarray:
    """uint8 rows of ``n`` keys already in sorted order.

    The first four bytes spell the row's rank in base 94 (printable range),
    the rest are random printable bytes, so row order is key order.
    """
    rng = np.random.default_rng(seed)
    out = np.empty((n, key_len), dtype=np.uint8)
    head = min(4, key_len)
    for a in range(0, n, block):
        b = min(n, a + block)
        rank = (np.arange(a, b, dtype=np.float64) * (94.0 ** head / n)).astype(np.int64)
        for j in range(head - 1, -1, -1):
            out[a:b, j] = 33 + rank % 94
            rank //= 94
        if key_len > head:
            out[a:b, head:] = rng.integers(33, 127, size=(b - a, key_len - head), dtype=np.uint8)
    return out


def _blocks(codes, lo, hi, rows):
    for a in range(lo, hi, rows):
        yield features_from_codes(codes[a:min(hi, a + rows)])


def _xty(codes, lo, hi, rows):
    acc = np.zeros(codes.shape[1] + 1)
    for a in range(lo, hi, rows):
        b = min(hi, a + rows)
        acc = xty_accumulate(acc, features_from_codes(codes[a:b]),
                             np.arange(a, b, dtype=np.float64))
    return acc


def retrain_scaling(sizes: Sequence[int] = (10**6, 10**7), key_len: int = 96,
                    delta: int = 10**5, chunk_rows: int = 1024, repeats: int = 3,
                    seed: int = 0, verbose: bool = False) -> List[Dict]:
    """Full vs. memoized retrain time as the trained key count grows.

    For each total ``N``: the full retrain factors all ``N`` rows from
    scratch; the memoized retrain absorbs the newest ``delta`` rows into the
    cached R of the first ``N - delta`` rows.  Both include matricizing
    their rows and solving for beta.  Memoized times are medians of
    ``repeats``.
    """
    results = []
    for n in sizes:
        codes = sorted_codes(n, key_len, seed)
        old = n - delta
        t0 = time.perf_counter()
        r_old = streaming_qrd(_blocks(codes, 0, old, chunk_rows))
        xty_old = _xty(codes, 0, old, chunk_rows)
        t_old = time.perf_counter() - t0
        t0 = time.perf_counter()
        r_full = streaming_qrd([r_old, streaming_qrd(_blocks(codes, old, n, chunk_rows))])
        beta_full = solve_beta(r_full, _xty(codes, old, n, chunk_rows) + xty_old)
        full_s = t_old + time.perf_counter() - t0
        memo = MemoizedFactor(r_old, old, 1)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            X_delta = features_from_codes(codes[old:n])
            m = absorb(memo, X_delta, chunk_rows)
            xty = xty_accumulate(xty_old, X_delta, np.arange(old, n, dtype=np.float64))
            beta_memo = solve_beta(m.r, xty)
            times.append(time.perf_counter() - t0)
            del X_delta
        rel = float(np.linalg.norm(beta_memo - beta_full) / np.linalg.norm(beta_full))
        row = {"total_keys": n, "delta": delta, "full_s": full_s,
               "memo_s": statistics.median(times), "memo_runs": times, "beta_rel_diff": rel}
        if verbose:
            print(row)
        results.append(row)
        del codes
        gc.collect()
    return results


def fixed_delay_sweep(delays: Sequence[float] = (0.05, 0.3, 1.0, 3.0), duration: float = 6.0,
                      initial_keys: int = 200_000, key_len: int = 16, max_buffer: int = 256,
                      seed: int = 0) -> List[Dict]:
    """Throughput of a read-latest 95/5 workload as training publication lags.

    Fresh inserts are appended past the loaded keys and the reads favor
    them, so until a retrain lands they are served by buffer search.
    """
    spec = WorkloadSpec.ycsb_d(initial_keys=initial_keys, key_len=key_len, ops=None,
                               duration=duration, seed=seed, insert_order="append",
                               insert_pool=400_000)
    corpus = make_corpus(spec)
    config = IndexConfig(key_len=key_len, max_buffer=max_buffer, cold_interval=0)
    out = []
    for d in delays:
        rep = run(spec, "learned", config=config, backend=EngineBackend.fixed_delay(d),
                  corpus=corpus, quiesce=False)
        out.append({"delay_s": d, "throughput": rep.throughput, "ops": rep.ops,
                    "retrains": len(rep.retrain_log),
                    "buffer_search_mean_ns": rep.latency_breakdown.get("buffer_search", {})
                    .get("mean_ns", 0.0)})
        gc.collect()
    return out


def lazy_delete_overhead(initial_keys: int = 1_000_000, key_len: int = 16,
                         delete_ratio: float = 0.15, ops: int = 300_000, repeats: int = 5,
                         seed: int = 0) -> Dict:
    """Read throughput with ``delete_ratio`` of keys lazily deleted vs. none.

    The cold sweep never runs, so flagged slots stay in place.  Reads are
    uniform over the original keys, deleted ones included.  Runs alternate
    between the two indexes and medians are compared.
    """
    spec = WorkloadSpec(mix={"read": 1.0}, distribution="uniform", initial_keys=initial_keys,
                        key_len=key_len, ops=ops, seed=seed)
    corpus = make_corpus(spec)
    config = IndexConfig(key_len=key_len)
    clean = LearnedIndex(config).bulk_load_keys(corpus.initial, corpus.initial)
    dirty = LearnedIndex(config).bulk_load_keys(corpus.initial, corpus.initial)
    rng = np.random.default_rng(seed)
    victims = rng.choice(len(corpus.initial), int(delete_ratio * len(corpus.initial)), replace=False)
    for i in victims.tolist():
        dirty.delete(corpus.initial[i])
    base, flagged = [], []
    for r in range(repeats):
        s = spec.with_(seed=seed + r)
        base.append(run(s, built=(clean, None), corpus=corpus, profile_every=0).throughput)
        flagged.append(run(s, built=(dirty, None), corpus=corpus, profile_every=0).throughput)
    b, f = statistics.median(base), statistics.median(flagged)
    return {"baseline": b, "with_deletes": f, "degradation": (b - f) / b,
            "baseline_runs": base, "delete_runs": flagged, "deleted": len(victims)}


def background_vs_blocking(initial_keys: int = 10_000_000, key_len: int = 32,
                           ops: int = 1_000_000, max_buffer: int = 256, seed: int = 0,
                           distribution: str = "zipfian", verbose: bool = False) -> Dict:
    """95/5 read/insert: memoized background retraining vs. blocking full retrains."""
    spec = WorkloadSpec(mix={"read": 0.95, "insert": 0.05}, distribution=distribution,
                        initial_keys=initial_keys, key_len=key_len, ops=ops, seed=seed)
    corpus = make_corpus(spec)
    config = IndexConfig(key_len=key_len, max_buffer=max_buffer, cold_interval=0)
    reports: Dict[str, RunReport] = {}
    for target in ("learned", "learned_no_memo"):
        built = build_target(target, corpus.initial, config, EngineBackend.inline())
        reports[target] = run(spec, target, config=config, corpus=corpus, built=built)
        if verbose:
            r = reports[target]
            print(target, r.throughput, len(r.retrain_log))
        del built
        gc.collect()
    a, b = reports["learned"], reports["learned_no_memo"]
    return {"learned": a.throughput, "learned_no_memo": b.throughput,
            "ratio": a.throughput / b.throughput,
            "retrains": {k: len(v.retrain_log) for k, v in reports.items()}}
