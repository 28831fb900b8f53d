"""Workload specs, synthetic key corpora and deterministic query streams.

Distribution parameters are choices of this package:

* zipfian: exponent ``zipf_theta`` (0.99), ranks scattered over the key space
  by a multiplicative hash so hot keys are not adjacent.
* hotspot: 90% of requests hit a contiguous 10% of the key space.
* exponent: exponential decay over rank, 95% of mass in the first 10%.
* latest: zipfian over recency, rank 0 being the newest key.
* sequential: sorted order, cyclic.
* uniform.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, List, NamedTuple, Optional

import numpy as np

from ..errors import ConfigError

__all__ = [
    "WorkloadSpec",
    "Op",
    "DISTRIBUTIONS",
    "synthetic_keys",
    "Corpus",
    "make_corpus",
    "generate_stream",
    "sample_indices",
    "ZipfSampler",
]

DISTRIBUTIONS = ("sequential", "zipfian", "hotspot", "exponent", "uniform", "latest")
OP_KINDS = ("read", "insert", "delete", "scan")

READ, INSERT, DELETE, SCAN = 0, 1, 2, 3


class Op(NamedTuple):
    kind: int
    key: bytes
    arg: object = None


@dataclass
class WorkloadSpec:
    mix: dict = field(default_factory=lambda: {"read": 0.95, "insert": 0.05})
    distribution: str = "zipfian"
    key_len: int = 16
    initial_keys: int = 100_000
    ops: Optional[int] = 100_000
    duration: Optional[float] = None
    serving_threads: int = 1
    seed: int = 0
    scan_length: int = 100
    zipf_theta: float = 0.99
    insert_order: str = "uniform"
    insert_pool: Optional[int] = None

    def __post_init__(self):
        self.mix = {k: float(v) for k, v in self.mix.items() if v}
        unknown = set(self.mix) - set(OP_KINDS)
        if unknown:
            raise ConfigError(f"unknown query types {sorted(unknown)}")
        if any(v < 0 for v in self.mix.values()) or abs(sum(self.mix.values()) - 1.0) > 1e-9:
            raise ConfigError(f"mix ratios must be >= 0 and sum to 1, got {self.mix}")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"unknown distribution {self.distribution!r}")
        if self.serving_threads < 1:
            raise ConfigError("serving_threads must be >= 1")
        if self.key_len < 1 or self.initial_keys < 1:
            raise ConfigError("key_len and initial_keys must be >= 1")
        if self.ops is None and self.duration is None:
            raise ConfigError("give ops or duration")
        if self.ops is not None and self.ops < 0:
            raise ConfigError("ops must be >= 0")
        if self.insert_order not in ("uniform", "append"):
            raise ConfigError("insert_order must be uniform or append")
        if not 0 < self.zipf_theta < 1:
            raise ConfigError("zipf_theta must be in (0, 1)")

    @classmethod
    def ycsb_d(cls, **kw) -> "WorkloadSpec":
        """Read-latest: 95% reads of recent keys, 5% inserts."""
        kw.setdefault("distribution", "latest")
        return cls(mix={"read": 0.95, "insert": 0.05}, **kw)

    @classmethod
    def ycsb_e(cls, **kw) -> "WorkloadSpec":
        """Short ranges: 95% scans, 5% inserts."""
        kw.setdefault("distribution", "zipfian")
        return cls(mix={"scan": 0.95, "insert": 0.05}, **kw)

    def with_(self, **kw) -> "WorkloadSpec":
        return replace(self, **kw)

    def expected_inserts(self) -> int:
        if self.insert_pool is not None:
            return self.insert_pool
        rate = self.mix.get("insert", 0.0)
        if self.ops is not None:
            return int(self.ops * rate * 1.1) + 64
        return int(2_000_000 * rate) + 64


# ------------------------------------------------------------------ keys

def synthetic_keys(n: int, key_len: int, rng: np.random.Generator) -> List[bytes]:
    """``n`` distinct sorted keys of printable bytes, lengths in [key_len//2, key_len]."""
    lo = max(1, key_len // 2)
    out = np.empty(0, dtype=f"S{key_len}")
    while out.shape[0] < n:
        need = int((n - out.shape[0]) * 1.05) + 16
        raw = rng.integers(33, 127, size=(need, key_len), dtype=np.uint8)
        lens = rng.integers(lo, key_len + 1, size=need)
        raw[np.arange(key_len)[None, :] >= lens[:, None]] = 0
        out = np.unique(np.concatenate((out, raw.view(f"S{key_len}").ravel())))
    if out.shape[0] > n:
        out = np.sort(rng.choice(out, n, replace=False))
    return out.tolist()


@dataclass
class Corpus:
    """Initial sorted keys plus a disjoint pool consumed by insert ops."""

    initial: List[bytes]
    pool: List[bytes]
    key_len: int

    def extra_key(self, i: int, append: bool) -> bytes:
        # used once the pool runs dry: longer than any corpus key, so disjoint
        tail = i.to_bytes(8, "big")
        if append:
            return b"\x7f" * self.key_len + tail
        return b"\x7e" * (self.key_len - 1) + b"\x7f" + tail


def make_corpus(spec: WorkloadSpec, initial: Optional[List[bytes]] = None) -> Corpus:
    rng = np.random.default_rng(spec.seed)
    m = spec.expected_inserts() if spec.mix.get("insert") else 0
    if initial is not None:
        have = set(initial)
        pool: List[bytes] = []
        extra = synthetic_keys(m + 16, spec.key_len, rng) if m else []
        pool = [k for k in extra if k not in have][:m]
        if spec.insert_order == "append":
            top = initial[-1]
            pool = sorted(b"\x7f" + k for k in pool) if pool and pool[0] <= top else pool
        return Corpus(list(initial), pool, spec.key_len)
    keys = synthetic_keys(spec.initial_keys + m, spec.key_len, rng)
    if spec.insert_order == "append":
        return Corpus(keys[:spec.initial_keys], keys[spec.initial_keys:], spec.key_len)
    take = np.zeros(len(keys), dtype=bool)
    take[rng.choice(len(keys), m, replace=False)] = True
    pool = [k for k, t in zip(keys, take) if t]
    rng.shuffle(pool)
    initial = [k for k, t in zip(keys, take) if not t]
    return Corpus(initial, pool, spec.key_len)


# ------------------------------------------------------------ distributions

_SCATTER = 0x9E3779B97F4A7C15


class ZipfSampler:
    """Zipfian ranks in [0, n) by Gray et al.'s inversion; n may grow."""

    def __init__(self, theta: float = 0.99):
        self.theta = theta
        self.n = 0
        self.zeta_n = 0.0
        self.zeta2 = 1.0 + 0.5 ** theta

    def _grow(self, n: int):
        if n > self.n:
            ranks = np.arange(self.n + 1, n + 1, dtype=np.float64)
            self.zeta_n += float(np.sum(ranks ** -self.theta))
            self.n = n

    def sample(self, rng: np.random.Generator, size: int, n: int) -> np.ndarray:
        self._grow(n)
        theta = self.theta
        alpha = 1.0 / (1.0 - theta)
        eta = (1 - (2.0 / n) ** (1 - theta)) / (1 - self.zeta2 / self.zeta_n) if n > 1 else 0.0
        u = rng.random(size)
        uz = u * self.zeta_n
        out = (n * (eta * u - eta + 1.0) ** alpha).astype(np.int64)
        out[uz < 1.0 + 0.5 ** theta] = 1
        out[uz < 1.0] = 0
        return np.minimum(out, n - 1)


def _scatter(ranks: np.ndarray, n: int) -> np.ndarray:
    if n <= 1:
        return ranks
    step = _SCATTER % n
    while math.gcd(step, n) != 1:
        step += 1
    return (ranks.astype(object) * step % n).astype(np.int64) if n > 2**31 else (ranks * step) % n


def sample_indices(dist: str, rng: np.random.Generator, size: int, n: int,
                   state: dict) -> np.ndarray:
    """``size`` item indices in [0, n); ``state`` carries cursors across calls."""
    if n < 1:
        raise ConfigError("cannot sample from an empty key set")
    if dist == "uniform":
        return rng.integers(0, n, size)
    if dist == "sequential":
        start = state.get("cursor", 0)
        state["cursor"] = start + size
        return (start + np.arange(size)) % n
    if dist == "hotspot":
        hot = max(1, n // 10)
        in_hot = rng.random(size) < 0.9
        cold_n = n - hot
        idx = rng.integers(0, hot, size)
        if cold_n > 0:
            idx = np.where(in_hot, idx, hot + rng.integers(0, cold_n, size))
        return idx
    if dist == "exponent":
        gamma = -math.log(0.05) / max(1.0, 0.1 * n)
        return (rng.exponential(1.0 / gamma, size).astype(np.int64)) % n
    zipf = state.setdefault("zipf", ZipfSampler(state.get("theta", 0.99)))
    ranks = zipf.sample(rng, size, n)
    if dist == "zipfian":
        return _scatter(ranks, n)
    if dist == "latest":
        return n - 1 - ranks
    raise ConfigError(f"unknown distribution {dist!r}")


def generate_stream(spec: WorkloadSpec, corpus: Optional[Corpus] = None,
                    batch: int = 4096) -> Iterator[Op]:
    """Deterministic op stream; infinite when ``spec.ops`` is None.

    Reads, deletes and scan starts pick from every key issued so far
    (initial keys in sorted order, then inserts in arrival order), so
    ``latest`` favors fresh inserts.
    """
    corpus = corpus or make_corpus(spec)
    rng = np.random.default_rng([spec.seed, 1])
    kinds = [OP_KINDS.index(k) for k in spec.mix]
    probs = np.array(list(spec.mix.values()))
    probs = probs / probs.sum()
    issued: List[bytes] = list(corpus.initial)
    state = {"theta": spec.zipf_theta}
    pool_i = 0
    extra_i = 0
    append = spec.insert_order == "append"
    emitted = 0
    while spec.ops is None or emitted < spec.ops:
        size = batch if spec.ops is None else min(batch, spec.ops - emitted)
        ks = np.asarray(kinds)[rng.choice(len(kinds), size, p=probs)] if len(kinds) > 1 \
            else np.full(size, kinds[0])
        picks = iter(sample_indices(spec.distribution, rng, size, len(issued), state).tolist())
        for kind in ks.tolist():
            if kind == INSERT:
                if pool_i < len(corpus.pool):
                    key = corpus.pool[pool_i]
                    pool_i += 1
                else:
                    key = corpus.extra_key(extra_i, append)
                    extra_i += 1
                issued.append(key)
                yield Op(INSERT, key, emitted)
            else:
                key = issued[min(next(picks), len(issued) - 1)]
                yield Op(kind, key, spec.scan_length if kind == SCAN else None)
            emitted += 1
