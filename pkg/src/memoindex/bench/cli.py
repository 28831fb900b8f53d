"""Command-line workload driver."""
from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

from ..errors import ConfigError, DatasetError
from ..index import IndexConfig
from ..trainer import parse_backend
from .datasets import load_dataset
from .runner import report_csv, run
from .workload import DISTRIBUTIONS, WorkloadSpec, make_corpus

__all__ = ["main", "build_parser"]

_WORKLOADS = {
    "ycsb-d": ({"read": 0.95, "insert": 0.05}, "latest"),
    "ycsb-e": ({"scan": 0.95, "insert": 0.05}, "zipfian"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memoindex-bench",
                                description="Run a key-value workload against a learned index "
                                            "or an ordered-map baseline.")
    p.add_argument("--workload", choices=["ycsb-d", "ycsb-e", "custom"], default="custom")
    for name in ("read", "insert", "delete", "scan"):
        p.add_argument(f"--{name}", type=float, default=None, help=f"{name} ratio (custom mix)")
    p.add_argument("--dist", choices=DISTRIBUTIONS, default=None)
    p.add_argument("--keys", type=int, default=100_000, help="initial key count")
    p.add_argument("--key-len", type=int, default=16)
    p.add_argument("--threads", type=int, default=1)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--ops", type=int, default=None)
    g.add_argument("--duration", type=float, default=None, help="seconds")
    p.add_argument("--target", choices=["learned", "learned-no-memo", "btree"], default="learned")
    p.add_argument("--backend", default="inline", help="inline | parallel:K | delay:MS")
    p.add_argument("--dataset", default=None, help="newline-delimited key file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV path prefix")
    p.add_argument("--max-buffer", type=int, default=1024)
    p.add_argument("--leaf-size", type=int, default=65536)
    p.add_argument("--split-threshold", type=float, default=64.0)
    p.add_argument("--cold-interval", type=float, default=30.0)
    return p


def _spec(args) -> WorkloadSpec:
    if args.workload == "custom":
        given = {k: getattr(args, k) for k in ("read", "insert", "delete", "scan")}
        mix = {k: v for k, v in given.items() if v}
        if not mix:
            mix = {"read": 0.95, "insert": 0.05}
        dist = args.dist or "zipfian"
    else:
        mix, dist = _WORKLOADS[args.workload]
        dist = args.dist or dist
    ops = args.ops
    if ops is None and args.duration is None:
        ops = 100_000
    return WorkloadSpec(mix=mix, distribution=dist, key_len=args.key_len,
                        initial_keys=args.keys, ops=ops, duration=args.duration,
                        serving_threads=args.threads, seed=args.seed)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _spec(args)
        config = IndexConfig(key_len=args.key_len, max_buffer=args.max_buffer,
                             target_leaf_size=args.leaf_size,
                             split_threshold=args.split_threshold,
                             cold_interval=args.cold_interval)
        backend = parse_backend(args.backend)
        initial = load_dataset(args.dataset, args.key_len) if args.dataset else None
        corpus = make_corpus(spec, initial)
        report = run(spec, args.target, config=config, backend=backend, corpus=corpus)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = report.summary_row()
    summary["lookups"] = report.lookups
    summary["hits"] = report.hits
    summary["retrains"] = len(report.retrain_log)
    print(json.dumps(summary, indent=2))
    if args.out:
        for path in report_csv(report, args.out):
            print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
