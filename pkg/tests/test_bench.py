import json

import numpy as np
import pytest

from memoindex.bench import (OrderedMap, WorkloadSpec, build_target, generate_stream, load_dataset,
                             make_corpus, read_report_csv, report_csv, run, synthetic_keys,
                             write_dataset)
from memoindex.bench.cli import main
from memoindex.bench.runner import CATEGORIES, RETRAIN_HEADER, SUMMARY_HEADER
from memoindex.bench.workload import DISTRIBUTIONS, INSERT, READ, sample_indices
from memoindex.errors import ConfigError, DatasetError
from memoindex.index import IndexConfig


def read_only(dist, n=1000, ops=10_000, seed=0):
    return WorkloadSpec(mix={"read": 1.0}, distribution=dist, initial_keys=n, ops=ops, seed=seed,
                        key_len=8)


def test_spec_validation():
    with pytest.raises(ConfigError):
        WorkloadSpec(mix={"read": 0.5, "insert": 0.4})
    with pytest.raises(ConfigError):
        WorkloadSpec(mix={"read": 0.5, "upsert": 0.5})
    with pytest.raises(ConfigError):
        WorkloadSpec(distribution="pareto")
    with pytest.raises(ConfigError):
        WorkloadSpec(serving_threads=0)
    assert WorkloadSpec.ycsb_d().mix == {"read": 0.95, "insert": 0.05}
    assert WorkloadSpec.ycsb_e().mix == {"scan": 0.95, "insert": 0.05}


def test_uniform_chi_square():
    spec = read_only("uniform", n=1000, ops=10**6)
    corpus = make_corpus(spec)
    pos = {k: i for i, k in enumerate(corpus.initial)}
    counts = np.bincount([pos[op.key] for op in generate_stream(spec, corpus)], minlength=1000)
    expected = 1000.0
    sigma = np.sqrt(expected * (1 - 1e-3))
    assert np.abs(counts - expected).max() <= 5 * sigma
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert abs(chi2 - 999) <= 5 * np.sqrt(2 * 999)


def test_sequential_is_cyclic():
    spec = read_only("sequential", n=50, ops=130)
    corpus = make_corpus(spec)
    keys = [op.key for op in generate_stream(spec, corpus)]
    assert keys == [corpus.initial[i % 50] for i in range(130)]


def test_same_seed_same_stream():
    spec = WorkloadSpec(mix={"read": 0.6, "insert": 0.2, "delete": 0.1, "scan": 0.1},
                        initial_keys=500, ops=5000, seed=9)
    a, b = list(generate_stream(spec)), list(generate_stream(spec))
    assert a == b
    assert list(generate_stream(spec.with_(seed=10))) != a


def test_skewed_distributions():
    rng = np.random.default_rng(3)
    n, size = 10_000, 200_000
    hot = sample_indices("hotspot", rng, size, n, {})
    assert abs(np.mean(hot < n // 10) - 0.90) < 0.005
    exp = sample_indices("exponent", rng, size, n, {})
    assert np.mean(exp < n // 10) > 0.93
    latest = sample_indices("latest", rng, size, n, {})
    assert np.mean(latest >= n - 100) > 0.4
    zipf = sample_indices("zipfian", rng, size, n, {})
    top = np.sort(np.bincount(zipf, minlength=n))[::-1]
    assert top[0] > 20 * size / n and top[0] > top[10]
    # hot keys scattered rather than clustered at the low end
    second = np.argsort(np.bincount(zipf, minlength=n))[-2]
    assert second > 100
    for dist in DISTRIBUTIONS:
        idx = sample_indices(dist, rng, 1000, 7, {})
        assert idx.min() >= 0 and idx.max() < 7


def test_latest_follows_inserts():
    spec = WorkloadSpec.ycsb_d(initial_keys=1000, ops=20_000, key_len=8)
    ops = list(generate_stream(spec))
    inserted = [op.key for op in ops if op.kind == INSERT]
    fresh = set(inserted)
    reads = [op.key for op in ops[len(ops) // 2:] if op.kind == READ]
    assert np.mean([k in fresh for k in reads]) > 0.5


def test_corpus_inserts_disjoint():
    for order in ("uniform", "append"):
        spec = WorkloadSpec(initial_keys=2000, ops=4000, insert_order=order, key_len=8)
        corpus = make_corpus(spec)
        assert corpus.initial == sorted(set(corpus.initial))
        assert not set(corpus.initial) & set(corpus.pool)
        if order == "append":
            assert min(corpus.pool) > corpus.initial[-1]


def test_synthetic_keys(rng):
    keys = synthetic_keys(5000, 12, rng)
    assert len(keys) == 5000 and keys == sorted(set(keys))
    assert all(6 <= len(k) <= 12 and min(k) >= 33 for k in keys)


def test_load_dataset(tmp_path):
    p = tmp_path / "keys.txt"
    p.write_bytes(b"b\na\na\n")
    assert load_dataset(p, 8) == [b"a", b"b"]
    p.write_bytes(b"")
    with pytest.raises(DatasetError):
        load_dataset(p, 8)
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "missing.txt", 8)
    p.write_bytes(b"abcdefgh\nabcdefgX\nz\n")
    assert load_dataset(p, 4) == [b"abcd", b"z"]


def test_dataset_round_trip(tmp_path):
    keys = synthetic_keys(10**6, 16, np.random.default_rng(0))
    write_dataset(tmp_path / "big.txt", keys)
    assert load_dataset(tmp_path / "big.txt", 16) == keys


def test_learned_agrees_with_baseline():
    spec = WorkloadSpec(mix={"read": 0.5, "insert": 0.2, "delete": 0.1, "scan": 0.2},
                        initial_keys=20_000, ops=40_000, key_len=12, scan_length=20, seed=4)
    corpus = make_corpus(spec)
    config = IndexConfig(key_len=12, max_buffer=64, target_leaf_size=2048)
    out = {}
    for target in ("learned", "learned_no_memo", "baseline_ordered_map"):
        r = run(spec, target, config=config, corpus=corpus, record_outcomes=True)
        out[target] = r.outcomes
        assert r.ops == 40_000
        if target != "baseline_ordered_map":
            assert r.retrain_log
    assert out["learned"] == out["baseline_ordered_map"]
    assert out["learned_no_memo"] == out["baseline_ordered_map"]


def test_read_only_hits_everything():
    for dist in DISTRIBUTIONS:
        spec = read_only(dist, n=5000, ops=5000)
        for target in ("learned", "btree"):
            r = run(spec, target)
            assert r.lookups == r.hits == 5000


def test_report_and_csv_round_trip(tmp_path):
    spec = WorkloadSpec(mix={"read": 0.7, "insert": 0.3}, initial_keys=5000, ops=20_000,
                        key_len=8, insert_order="append")
    r = run(spec, "learned", config=IndexConfig(key_len=8, max_buffer=128, target_leaf_size=1000),
            profile_every=1)
    assert set(r.latency_breakdown) <= set(CATEGORIES)
    assert {"traverse", "ml_inference", "local_search", "buffer_insert"} <= set(r.latency_breakdown)
    for stats in r.latency_breakdown.values():
        assert 0 < stats["mean_ns"] <= stats["p99_ns"] * 10
    starts = [ev.start for ev in r.retrain_log]
    assert starts == sorted(starts) and len(starts) > 0
    assert r.memory["total"] == sum(r.memory[k] for k in ("model", "memo", "buffer", "structure"))
    summary, retrains = report_csv(r, tmp_path / "run")
    rows, log = read_report_csv(tmp_path / "run")
    assert len(rows) == 1 and list(rows[0]) == SUMMARY_HEADER
    assert len(log) == len(r.retrain_log)
    assert list(log[0]) == RETRAIN_HEADER
    row = r.summary_row()
    for k in SUMMARY_HEADER[1:]:
        assert float(rows[0][k]) == pytest.approx(row[k], rel=1e-12)
    t0 = r.retrain_log[0].start
    for parsed, ev in zip(log, r.retrain_log):
        assert float(parsed["start_ms"]) == pytest.approx((ev.start - t0) * 1e3)
        assert float(parsed["duration_ms"]) == pytest.approx(ev.duration * 1e3)
        assert (int(parsed["total_keys"]), int(parsed["delta_keys"]), int(parsed["model_id"])) == \
            (ev.total_keys, ev.delta_keys, ev.model_id)


def test_multithreaded_run():
    spec = WorkloadSpec(mix={"read": 0.9, "insert": 0.1}, initial_keys=10_000, ops=30_000,
                        key_len=8, serving_threads=4)
    corpus = make_corpus(spec)
    built = build_target("learned", corpus.initial, IndexConfig(key_len=8, max_buffer=64),
                         "parallel:2")
    r = run(spec, "learned", corpus=corpus, built=built)
    # a read may overtake its insert in another batch, so check final contents
    idx = built[0]
    ops = list(generate_stream(spec, corpus))
    assert r.ops == 30_000 and r.hits >= r.lookups - sum(op.kind == INSERT for op in ops)
    assert all(idx.lookup(op.key) is not None for op in ops)
    assert len(idx) == len(corpus.initial) + sum(op.kind == INSERT for op in ops)
    with pytest.raises(ConfigError):
        run(spec, "btree", record_outcomes=True)
    with pytest.raises(ConfigError):
        build_target("skiplist", [b"a"])


def test_baseline_semantics():
    m = OrderedMap().bulk_load([(b"a", 1), (b"c", 3)])
    assert m.insert(b"b", 2) == "inserted" and m.insert(b"b", 5) == "updated"
    assert m.delete(b"zz") == "not-found" and m.delete(b"a") == "deleted"
    assert m.range_scan(b"b", 5) == [(b"b", 5), (b"c", 3)]


def test_cli(tmp_path, capsys):
    assert main(["--workload", "ycsb-e", "--keys", "2000", "--ops", "3000", "--key-len", "8",
                 "--out", str(tmp_path / "e")]) == 0
    out = capsys.readouterr().out
    summary = json.loads(out[:out.rindex("}") + 1])
    assert summary["ops"] == 3000 and summary["target"] == "learned"
    assert (tmp_path / "e_summary.csv").exists() and (tmp_path / "e_retrains.csv").exists()
    ds = tmp_path / "ds.txt"
    write_dataset(ds, [b"%06d" % i for i in range(3000)])
    assert main(["--dataset", str(ds), "--read", "0.9", "--delete", "0.1", "--dist", "uniform",
                 "--ops", "2000", "--target", "btree", "--key-len", "6"]) == 0
    capsys.readouterr()
    assert main(["--read", "0.5", "--insert", "0.4", "--ops", "10"]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["--dataset", str(tmp_path / "nope.txt"), "--ops", "10"]) == 2
    assert main(["--backend", "gpu", "--ops", "10"]) == 2
