"""ipgm-bench: workload generation, index building, benchmark runs and
report summaries."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from typing import List, Optional

import numpy as np

from .bench import (
    RunConfig,
    emit_report,
    load_inputs,
    read_report,
    run_benchmark,
    synthetic_dataset,
)
from .exceptions import IPGMError
from .maintenance import ALL_STRATEGIES, MaintenanceConfig, OnlineIndex
from .store import Metric, VectorStore, load_dataset, write_fvecs
from .workload import PRESETS, WorkloadSpec, build_workload, write_workload

log = logging.getLogger("ipgm")

STRATEGY_NAMES = [s.value for s in ALL_STRATEGIES]


def _spec_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("workload shape")
    g.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    g.add_argument("--pattern", choices=["random", "clustered"], default=None)
    g.add_argument("--base", type=int, default=None, help="base set size")
    g.add_argument("--deletes", type=int, default=None, help="deletes per batch")
    g.add_argument("--inserts", type=int, default=None, help="inserts per batch")
    g.add_argument("--queries", type=int, default=None, help="queries per batch")
    g.add_argument("--batches", type=int, default=None)
    g.add_argument("--kmeans-k", type=int, default=None)
    g.add_argument("--query-repeat", type=int, default=None)
    g.add_argument("--dim", type=int, default=32,
                   help="dimension of the synthetic dataset (no --dataset)")


def _common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", default=None,
                   help="fvecs or text vectors; omit for a synthetic mixture")
    p.add_argument("--metric", choices=["l2", "cosine"], default="l2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def _index_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=64, help="search queue length")
    p.add_argument("--d", type=int, default=16, help="out-degree bound")
    p.add_argument("--directed-only", action="store_true",
                   help="insert without reverse edges")


def _run_args(p: argparse.ArgumentParser) -> None:
    _common_args(p)
    _index_args(p)
    _spec_args(p)
    p.add_argument("--workload", default=None, help="workload log (overrides the spec)")
    p.add_argument("--strategy", action="append", choices=STRATEGY_NAMES + ["all"],
                   help="repeatable; default all")
    p.add_argument("--topk", type=int, choices=[10, 20, 100], default=10)
    p.add_argument("--seeds", type=int, default=1,
                   help="number of consecutive seeds starting at --seed")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded, byte-stable outputs")
    p.add_argument("--threads", type=int, default=1, help="query-phase worker threads")
    p.add_argument("--snapshot", default=None, help="load the base graph from here")
    p.add_argument("--snapshot-dir", default=None, help="save final graphs here")
    p.add_argument("--calibrate", choices=["all", "last"], default="all")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ipgm-bench", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    gw = sub.add_parser("gen-workload", help="write a workload log")
    _common_args(gw)
    _spec_args(gw)
    gw.add_argument("--dataset-out", default=None,
                    help="also save the (synthetic) dataset as fvecs")

    bi = sub.add_parser("build-index", help="build the base graph and save a snapshot")
    _common_args(bi)
    _index_args(bi)
    _spec_args(bi)
    bi.add_argument("--workload", default=None)

    run = sub.add_parser("run", help="replay a workload under each strategy")
    _run_args(run)
    run.add_argument("--target-recall", type=float, default=None,
                     help="calibrate k per batch to reach this recall")

    sw = sub.add_parser("sweep", help="run at the smallest k reaching a target recall")
    _run_args(sw)
    sw.add_argument("--target", type=float, default=0.8)

    rp = sub.add_parser("report", help="summarize or convert report files")
    rp.add_argument("inputs", nargs="+")
    rp.add_argument("--out", default=None, help="merged output (.csv or .jsonl)")
    rp.add_argument("--column", default="recall")
    return p


def spec_from_args(args) -> WorkloadSpec:
    spec = PRESETS[args.preset]
    updates = {
        "pattern": args.pattern, "base_size": args.base, "delete_per_batch": args.deletes,
        "insert_per_batch": args.inserts, "query_per_batch": args.queries,
        "num_batches": args.batches, "kmeans_k": args.kmeans_k,
        "query_repeat": args.query_repeat, "seed": args.seed,
    }
    return replace(spec, **{k: v for k, v in updates.items() if v is not None})


def config_from_args(args) -> RunConfig:
    names = args.strategy or ["all"]
    strategies = STRATEGY_NAMES if "all" in names else list(dict.fromkeys(names))
    return RunConfig(
        dataset=args.dataset, metric=args.metric, strategies=strategies, k=args.k,
        d=args.d, topk=args.topk, workload=args.workload, spec=spec_from_args(args),
        seeds=tuple(range(args.seed, args.seed + args.seeds)), out=args.out,
        target_recall=getattr(args, "target_recall", None), calibrate=args.calibrate,
        query_repeat=args.query_repeat, deterministic=args.deterministic,
        threads=args.threads, bidirectional=not args.directed_only,
        snapshot=args.snapshot, snapshot_dir=args.snapshot_dir, synthetic_dim=args.dim)


def _dataset(args, spec: WorkloadSpec) -> VectorStore:
    if args.dataset:
        return load_dataset(args.dataset, args.metric)
    store = VectorStore(args.dim, args.metric)
    store.add_many(synthetic_dataset(spec.required_vectors, args.dim, seed=spec.seed))
    return store


def cmd_gen_workload(args) -> int:
    spec = spec_from_args(args)
    data = _dataset(args, spec)
    W = build_workload(data, spec)
    if args.dataset_out:
        write_fvecs(args.dataset_out, data.vectors())
    out = args.out or "workload.log"
    write_workload(out, W)
    print(f"wrote {len(W.batches)} batches, {len(W)} ops to {out}")
    return 0


def cmd_build_index(args) -> int:
    spec = spec_from_args(args)
    cfg = RunConfig(dataset=args.dataset, metric=args.metric, k=args.k, d=args.d,
                    workload=args.workload, spec=spec, synthetic_dim=args.dim,
                    bidirectional=not args.directed_only)
    W = load_inputs(cfg, args.seed)
    if not W.batches:
        raise IPGMError("workload has no batches")
    mcfg = MaintenanceConfig(k=args.k, d=args.d, metric=args.metric, seed=args.seed,
                             bidirectional=not args.directed_only)
    index = OnlineIndex(W.dimension, mcfg)
    _, secs = index.apply_updates(W.batches[0])
    out = args.out or "base.ipgm"
    index.graph.save(out, index.store.dimension, Metric.parse(args.metric).code)
    st = index.graph.stats(args.seed)
    print(f"built {st.live_vertex_count} vertices, {st.edge_count} edges in {secs:.2f}s -> {out}")
    return 0


def _print_table(records, column: str) -> None:
    strategies = list(dict.fromkeys(r.strategy for r in records))
    batches = sorted({r.batch for r in records})
    cells = {}
    for r in records:
        cells.setdefault((r.batch, r.strategy), []).append(getattr(r, column))
    print(f"mean {column} per batch")
    print("batch " + " ".join(f"{s:>10}" for s in strategies))
    for b in batches:
        row = []
        for s in strategies:
            v = cells.get((b, s))
            row.append(f"{float(np.mean(v)):10.4f}" if v else " " * 10)
        print(f"{b:5d} " + " ".join(row))


def cmd_run(args, target: Optional[float] = None) -> int:
    cfg = config_from_args(args)
    if target is not None:
        cfg = replace(cfg, target_recall=target)
    records = run_benchmark(cfg)
    _print_table(records, "recall")
    _print_table(records, "mean_distance_computations")
    if target is not None or cfg.target_recall is not None:
        _print_table(records, "k")
    if cfg.out:
        print(f"wrote {len(records)} records to {cfg.out}")
    return 0


def cmd_report(args) -> int:
    records = []
    for path in args.inputs:
        records.extend(read_report(path))
    if not records:
        print("no records")
        return 0
    _print_table(records, args.column)
    if args.out:
        emit_report(records, args.out)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-workload":
            return cmd_gen_workload(args)
        if args.command == "build-index":
            return cmd_build_index(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_run(args, target=args.target)
        return cmd_report(args)
    except (IPGMError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
