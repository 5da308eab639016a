"""Acceptance criteria, each checked at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL ...`` line; the lines are
repeated in the terminal summary. Run just this file with
``pytest tests/test_acceptance.py -v``.
"""
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from ipgm.bench import RunConfig, load_inputs, run_benchmark, summarize, sweep_to_recall
from ipgm.cli import main
from ipgm.maintenance import DeleteStrategy, MaintenanceConfig, OnlineIndex
from ipgm.oracle import random_general_position, verify_theorem1, verify_theorem2
from ipgm.search import greedy_search
from ipgm.store import VectorStore, brute_force_topk
from ipgm.workload import WorkloadSpec

from conftest import ACCEPTANCE, complete_graph

pytestmark = pytest.mark.acceptance

STRATEGIES = [s.value for s in DeleteStrategy]

# seeds for criteria 6, 7 and 8 (criterion 6 fixes 20)
SEEDS_RECALL = 20
SEEDS_COST = 10
SEEDS_AMORTIZE = 3


@pytest.fixture
def report(request):
    def emit(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config.stash[ACCEPTANCE].append(line)
        assert ok, line
    return emit


def test_c1_theorem1_exact_on_delaunay(report):
    t0 = time.perf_counter()
    bad = 0
    rng = np.random.default_rng(101)
    for trial in range(1000):
        n = int(rng.integers(5, 41))
        P = random_general_position(n, seed=[101, trial])
        rep = verify_theorem1(P, trials=1, seed=[102, trial])
        bad += not rep.passed
    secs = time.perf_counter() - t0
    report(1, bad == 0 and secs < 60,
           f"{1000 - bad}/1000 trials exact (every start vertex), {secs:.1f}s (limit 60s)")


def test_c2_theorem2_locality(report):
    t0 = time.perf_counter()
    fails = {"a": 0, "b": 0}
    trials_failed = 0
    rng = np.random.default_rng(202)
    for trial in range(1000):
        n = int(rng.integers(4, 13))
        P = random_general_position(n, seed=[202, trial])
        rep = verify_theorem2(P, int(rng.integers(n)))
        trials_failed += not rep.passed
        for f in rep.failures:
            fails[f[0]] += 1
    secs = time.perf_counter() - t0
    report(2, trials_failed == 0 and secs < 60,
           f"{1000 - trials_failed}/1000 trials, subgraph failures {fails['b']}, "
           f"stability failures {fails['a']}, {secs:.1f}s (limit 60s)")


def _invariant_run(strategy, seed, spec):
    """Replay op by op, checking the graph after each one."""
    cfg = RunConfig(k=16, d=8, spec=spec, synthetic_dim=8)
    W = load_inputs(cfg, seed)
    index = OnlineIndex(W.dimension, MaintenanceConfig(k=16, d=8, strategy=strategy, seed=seed))
    physical = strategy not in ("mask", "rebuild")
    deleted = set()
    ops = checks = 0
    problems = []

    def check(tag):
        nonlocal checks
        checks += 1
        v = index.graph.check_invariants()
        if v:
            problems.append((tag, v[:3]))

    for batch in W.batches:
        index.rng = np.random.default_rng([seed, 0, batch.index])
        for wid in batch.delete_ids.tolist():
            sid = index.id_map.get(wid)
            index.delete(wid)
            ops += 1
            check(("D", wid))
            if sid is not None:
                deleted.add(sid)
                if physical and (sid in index.graph or index.graph.references(sid)):
                    problems.append(("still referenced", sid))
        for wid, vec in zip(batch.insert_ids.tolist(), batch.insert_vectors):
            index.insert(wid, vec)
            ops += 1
            check(("I", wid))
        if strategy == "rebuild":
            index.rebuild()
            check(("rebuild", batch.index))
        if strategy != "mask" and deleted:
            g = index.graph
            gone = np.fromiter(deleted, np.int64, len(deleted))
            mentioned = np.concatenate([np.asarray(g.out_neighbors(u) + g.in_neighbors(u), np.int64)
                                        for u in g.vertices().tolist()] + [g.vertices()])
            if np.isin(gone, mentioned).any():
                problems.append(("referenced after batch", batch.index))
        before = index.graph.to_bytes()
        res, _ = index.run_queries(batch, 16)
        ops += len(batch.query_ids) * batch.query_repeat
        if index.graph.to_bytes() != before:
            problems.append(("query mutated graph", batch.index))
        check(("Q", batch.index))
        hit = np.isin(res.ids, np.fromiter(deleted, np.int64, len(deleted)))
        if hit.any():
            problems.append(("deleted id returned", batch.index))
    return ops, checks, problems


def test_c3_structural_invariants(report):
    spec = WorkloadSpec(base_size=500, delete_per_batch=250, insert_per_batch=250,
                        query_per_batch=450, num_batches=10, pattern="random")
    t0 = time.perf_counter()
    total_ops = total_checks = 0
    bad = []
    for strategy in STRATEGIES:
        for seed in range(5):
            ops, checks, problems = _invariant_run(strategy, seed, spec)
            total_ops += ops
            total_checks += checks
            bad.extend((strategy, seed, p) for p in problems)
            assert ops >= 10_000
    secs = time.perf_counter() - t0
    report(3, not bad and secs < 300,
           f"25 runs x {total_ops // 25} ops, {total_checks} invariant checks, "
           f"{len(bad)} problems, {secs:.1f}s (limit 300s)" + (f" first={bad[0]}" if bad else ""))


def test_c4_oracle_equivalence(report):
    rng = np.random.default_rng(404)
    store = VectorStore(16)
    store.add_many(rng.normal(size=(200, 16)))
    g = complete_graph(200)
    Q = rng.normal(size=(50, 16))
    exact = 0
    for i, q in enumerate(Q):
        got = greedy_search(g, store, q, 200, seed=i).topk
        want = brute_force_topk(store, q, 200)
        exact += [(c.id, c.score) for c in got] == want
    report(4, exact == 50, f"{exact}/50 queries identical (ids and scores) at k=n=200")


def test_c5_base_batch_parity(report):
    spec = WorkloadSpec()
    mismatched = []
    for seed in range(3):
        W = load_inputs(RunConfig(spec=spec), seed)
        b0 = W.batches[0]
        ref = None
        for strategy in STRATEGIES:
            # each strategy builds its own base graph here (no sharing)
            index = OnlineIndex(W.dimension, MaintenanceConfig(strategy=strategy, seed=seed))
            index.apply_updates(b0)
            res, _ = index.run_queries(b0, 64)
            ids = res.ids[:, :10]
            if ref is None:
                ref = ids
            elif not np.array_equal(ids, ref):
                mismatched.append((seed, strategy))
    small = WorkloadSpec(base_size=1000, delete_per_batch=100, insert_per_batch=100,
                         query_per_batch=100, num_batches=1)
    recalls = {}
    for share in (True, False):
        recs = run_benchmark(RunConfig(spec=small, seeds=(0,), share_base=share))
        recalls[share] = {r.strategy: r.recall for r in recs if r.batch == 0}
    same_recall = len(set(recalls[True].values()) | set(recalls[False].values())) == 1
    report(5, not mismatched and same_recall,
           f"batch-0 top-10 ids bitwise equal across 5 strategies on 3 seeds "
           f"(mismatches {mismatched or 0}); bench recall equal shared/unshared: {same_recall}")


def test_c6_recall_ordering(report):
    t0 = time.perf_counter()
    cfg = RunConfig(strategies=["pure", "local", "global"], k=64, d=16,
                    seeds=tuple(range(SEEDS_RECALL)))
    recs = run_benchmark(cfg)
    secs = time.perf_counter() - t0
    last = max(r.batch for r in recs)
    m = summarize(recs, "recall", batch=last)
    g_l, l_p, g_p = m["global"] - m["local"], m["local"] - m["pure"], m["global"] - m["pure"]
    ok = g_l >= -0.01 and l_p >= -0.01 and g_p >= 0.02 and secs < 600
    report(6, ok, f"recall@10 after batch {last}, {SEEDS_RECALL} seeds: "
           f"GLOBAL {m['global']:.4f} LOCAL {m['local']:.4f} PURE {m['pure']:.4f}; "
           f"G-L {g_l:+.4f} (>=-0.01) L-P {l_p:+.4f} (>=-0.01) G-P {g_p:+.4f} (>=0.02), "
           f"{secs:.0f}s (limit 600s)")


def test_c7_cost_at_fixed_recall(report):
    t0 = time.perf_counter()
    cfg = RunConfig(strategies=["mask", "local", "global"], seeds=tuple(range(SEEDS_COST)),
                    calibrate="last")
    recs = sweep_to_recall(cfg, 0.8)
    secs = time.perf_counter() - t0
    last = max(r.batch for r in recs)
    final = [r for r in recs if r.batch == last]
    missed = [(r.seed, r.strategy) for r in final if not r.target_met]
    c = summarize(final, "mean_distance_computations")
    k = summarize(final, "k")
    ratio = c["mask"] / c["global"]
    ok = (c["global"] <= c["local"] <= c["mask"] and ratio >= 1.05 and not missed
          and secs < 900)
    report(7, ok, f"distance computations/query at k* (recall>=0.8) after batch {last}, "
           f"{SEEDS_COST} seeds: GLOBAL {c['global']:.1f} LOCAL {c['local']:.1f} "
           f"MASK {c['mask']:.1f}; MASK/GLOBAL {ratio:.3f} (>=1.05); mean k* "
           f"G {k['global']:.1f} L {k['local']:.1f} M {k['mask']:.1f}; "
           f"target missed {missed or 0}; {secs:.0f}s (limit 900s)")


def test_c8_amortization(report):
    t0 = time.perf_counter()
    # harness defaults, fixed k=64: at a recall target PURE runs at k = n on
    # batches where it cannot reach it, which blows the time budget
    base = RunConfig(seeds=tuple(range(SEEDS_AMORTIZE)))
    acc = {}
    for rep in (1, 5, 100):
        recs = run_benchmark(replace(base, query_repeat=rep))
        last = max(r.batch for r in recs)
        acc[rep] = summarize(recs, "accumulated_time_seconds", batch=last)
    secs = time.perf_counter() - t0
    ratio = {rep: acc[rep]["global"] / acc[rep]["pure"] for rep in acc}
    monotone = ratio[1] >= ratio[5] >= ratio[100]
    best = all(acc[100]["global"] <= v for s, v in acc[100].items())
    ok = monotone and best and secs < 1200
    table = " ".join(f"{s}={acc[100][s]:.1f}s" for s in STRATEGIES)
    report(8, ok, f"GLOBAL/PURE accumulated time at repeat 1/5/100: "
           f"{ratio[1]:.3f}/{ratio[5]:.3f}/{ratio[100]:.3f} (non-increasing: {monotone}); "
           f"repeat 100: {table} (GLOBAL lowest: {best}); k=64, {SEEDS_AMORTIZE} seeds, "
           f"{secs:.0f}s (limit 1200s)")


def _columns(path, names):
    lines = [l for l in open(path, encoding="utf-8").read().splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    idx = [header.index(n) for n in names]
    return "\n".join(",".join(l.split(",")[i] for i in idx) for l in lines)


def test_c9_determinism(report, tmp_path):
    shape = ["--base", "1500", "--deletes", "150", "--inserts", "150", "--queries", "150",
             "--batches", "4"]
    runs = []
    for i in range(2):
        d = tmp_path / f"run{i}"
        rc = main(["run", *shape, "--deterministic", "--seed", "7", "--out", str(d / "r.csv"),
                   "--snapshot-dir", str(d / "snap")])
        assert rc == 0
        runs.append(d)
    cols = ["seed", "batch", "strategy", "recall", "mean_distance_computations"]
    csv_same = _columns(runs[0] / "r.csv", cols) == _columns(runs[1] / "r.csv", cols)
    snaps = sorted(p.name for p in (runs[0] / "snap").iterdir())
    snap_same = snaps == sorted(p.name for p in (runs[1] / "snap").iterdir()) and all(
        (runs[0] / "snap" / n).read_bytes() == (runs[1] / "snap" / n).read_bytes() for n in snaps)
    report(9, csv_same and snap_same and len(snaps) == 5,
           f"recall/distance columns byte-identical: {csv_same}; "
           f"{len(snaps)} snapshots byte-identical: {snap_same}")


@pytest.mark.skipif(not os.environ.get("IPGM_SIFT"), reason="optional: set IPGM_SIFT to sift_base.fvecs")
def test_c10_sift_relative_qps(report):
    cfg = RunConfig(dataset=os.environ["IPGM_SIFT"], strategies=["global", "rebuild"],
                    spec=WorkloadSpec(900_000, 10_000, 10_000, 10_000, 9), target_recall=0.8)
    recs = run_benchmark(cfg)
    rel = [r.relative_qps for r in recs if r.strategy == "global" and r.batch > 0]
    wins = sum(v >= 1.0 for v in rel)
    report(10, wins * 2 >= len(rel), f"GLOBAL relative QPS >= 1 on {wins}/{len(rel)} batches")
