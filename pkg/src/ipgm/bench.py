"""Benchmark harness: replay a workload under each deletion strategy and
collect recall, search cost and timing per batch."""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import TargetUnreachable
from .graph import ProximityGraph
from .maintenance import (
    ALL_STRATEGIES,
    DeleteStrategy,
    MaintenanceConfig,
    OnlineIndex,
)
from .oracle import GroundTruth, GroundTruthCache
from .store import Metric, VectorStore, load_dataset
from .workload import Batch, Workload, WorkloadSpec, build_workload, read_workload

log = logging.getLogger(__name__)

REPORT_NOTE = ("relative_qps divides by the rebuild run's QPS at the same seed "
               "and batch; with a recall target each run is measured at its own "
               "smallest k reaching the target (no interpolation)")


@dataclass
class MetricsRecord:
    seed: int
    batch: int
    strategy: str
    k: int
    K: int
    recall: float
    target_met: bool
    queries_per_second: float
    relative_qps: float
    mean_distance_computations: float
    maintenance_seconds: float
    query_seconds: float
    accumulated_time_seconds: float
    deletes: int
    inserts: int
    queries: int
    skipped_deletes: int
    live_vertices: int
    tombstones: int

    @property
    def op_counts(self) -> Tuple[int, int, int]:
        return self.deletes, self.inserts, self.queries


COLUMNS = [f.name for f in fields(MetricsRecord)]
_TYPES = {f.name: f.type for f in fields(MetricsRecord)}


@dataclass
class RunConfig:
    """Everything one benchmark run needs.

    With ``dataset=None`` a synthetic Gaussian mixture is generated per seed.
    ``workload`` (a log path) overrides ``spec``. ``target_recall`` switches
    from the fixed queue length ``k`` to a per-batch calibrated one;
    ``calibrate`` picks which batches ("all" or "last"; others use ``k``).
    """
    dataset: Optional[str] = None
    metric: str = "l2"
    strategies: Sequence[str] = tuple(s.value for s in ALL_STRATEGIES)
    k: int = 64
    d: int = 16
    topk: int = 10
    workload: Optional[str] = None
    spec: WorkloadSpec = field(default_factory=WorkloadSpec)
    seeds: Sequence[int] = (0,)
    out: Optional[str] = None
    target_recall: Optional[float] = None
    calibrate: str = "all"
    query_repeat: Optional[int] = None
    deterministic: bool = False
    threads: int = 1
    bidirectional: bool = True
    share_base: bool = True
    snapshot: Optional[str] = None
    snapshot_dir: Optional[str] = None
    synthetic_dim: int = 32

    def __post_init__(self):
        self.metric = Metric.parse(self.metric).value
        self.strategies = tuple(DeleteStrategy(s).value for s in self.strategies)
        if not 1 <= self.topk <= self.k:
            raise ValueError(f"need 1 <= topk <= k, got topk={self.topk}, k={self.k}")
        if self.target_recall is not None and not 0 < self.target_recall < 1 + 1e-12:
            raise ValueError("target_recall must be in (0, 1]")
        if self.calibrate not in ("all", "last"):
            raise ValueError("calibrate must be 'all' or 'last'")
        if self.query_repeat is not None and self.query_repeat < 1:
            raise ValueError("query_repeat must be >= 1")
        if self.deterministic:
            self.threads = 1


# --------------------------------------------------------------------------
# data

def synthetic_dataset(n: int, dim: int = 32, components: int = 20, seed=0,
                      spread: float = 0.5) -> np.ndarray:
    """Gaussian mixture: component means ~ N(0, I), isotropic noise with
    standard deviation ``spread``, equal weights."""
    rng = np.random.default_rng([int(seed), 7])
    means = rng.normal(size=(components, dim))
    which = rng.integers(components, size=n)
    return (means[which] + spread * rng.normal(size=(n, dim))).astype(np.float32)


def load_inputs(cfg: RunConfig, seed: int) -> Workload:
    """The seed's workload: read from ``cfg.workload`` (which carries its own
    vectors), else built from the dataset or a synthetic mixture."""
    if cfg.workload is not None:
        W = read_workload(cfg.workload)
    else:
        spec = replace(cfg.spec, seed=seed)
        if cfg.dataset is not None:
            data = load_dataset(cfg.dataset, cfg.metric)
        else:
            data = VectorStore(cfg.synthetic_dim, cfg.metric)
            data.add_many(synthetic_dataset(spec.required_vectors, cfg.synthetic_dim, seed=seed))
        W = build_workload(data, spec)
    if cfg.query_repeat is not None:
        W = W.with_query_repeat(cfg.query_repeat)
    return W


def base_index_from_snapshot(path, batch0: Batch, mcfg: MaintenanceConfig) -> OnlineIndex:
    """Index whose base graph comes from a snapshot; the store is filled
    from batch 0 so store ids line up with the snapshot's vertex ids."""
    g, dim, metric = ProximityGraph.load(path)
    if g.degree_limit != mcfg.d:
        raise ValueError(f"snapshot degree limit {g.degree_limit} != d={mcfg.d}")
    index = OnlineIndex(batch0.insert_vectors.shape[1], mcfg)
    sids = index.store.add_many(batch0.insert_vectors)
    if not np.array_equal(np.sort(sids), g.vertices()):
        raise ValueError("snapshot vertices do not match the workload's base set")
    index.graph = g
    index.id_map = dict(zip(batch0.insert_ids.tolist(), sids.tolist()))
    return index


# --------------------------------------------------------------------------
# measurement

def measure(index: OnlineIndex, batch: Batch, gt: GroundTruth, k: int, K: int,
            starts: Optional[np.ndarray] = None):
    """Untimed search of the batch's queries at queue length ``k``.
    Returns (mean recall@K, result)."""
    Q = index.prepare_queries(batch.query_vectors)
    if starts is None:
        starts = index.query_starts(batch.index, len(Q))
    res = index.search(Q, k, starts)
    return float(gt.recall(res.ids, K).mean()), res


def find_k_star(index: OnlineIndex, batch: Batch, gt: GroundTruth, K: int,
                target: float, k_min: Optional[int] = None) -> Tuple[int, float]:
    """Smallest queue length (found by doubling, then bisection) whose recall
    reaches ``target``. The cap is the number of graph vertices, tombstones
    included. Raises TargetUnreachable if even the cap falls short."""
    cap = max(len(index.graph), 1)
    lo_k = max(k_min or K, 1)
    Q = index.prepare_queries(batch.query_vectors)
    starts = index.query_starts(batch.index, len(Q))
    memo: Dict[int, float] = {}

    def recall(k):
        if k not in memo:
            memo[k] = float(gt.recall(index.search(Q, k, starts).ids, K).mean())
        return memo[k]

    k = min(lo_k, cap)
    prev = None
    while recall(k) < target:
        if k >= cap:
            raise TargetUnreachable(target, max(memo.values()), cap)
        prev, k = k, min(2 * k, cap)
    if prev is None:
        return k, recall(k)
    lo, hi = prev, k            # recall(lo) < target <= recall(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if recall(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi, recall(hi)


def _maintenance_config(cfg: RunConfig, strategy, seed) -> MaintenanceConfig:
    return MaintenanceConfig(k=cfg.k, d=cfg.d, metric=cfg.metric, strategy=strategy,
                             seed=seed, bidirectional=cfg.bidirectional)


def _search_threads(index: OnlineIndex, threads: int):
    if threads <= 1:
        return
    from concurrent.futures import ThreadPoolExecutor
    from .search import BatchSearchResult
    plain = index.search
    pool = ThreadPoolExecutor(threads)

    def fanned(Q, k, starts):
        parts = np.array_split(np.arange(len(Q)), threads)
        outs = list(pool.map(lambda p: plain(Q[p], k, starts[p]), parts))
        return BatchSearchResult(*(np.concatenate([getattr(o, f) for o in outs])
                                   for f in ("ids", "scores", "distance_computations", "hops")))

    index.search = fanned


def run_seed(cfg: RunConfig, seed: int, cache: Optional[GroundTruthCache] = None,
             graphs: Optional[dict] = None) -> List[MetricsRecord]:
    """All configured strategies on one seed's dataset and workload."""
    cache = cache or GroundTruthCache()
    W = load_inputs(cfg, seed)
    if not W.batches:
        return []
    strategies = [DeleteStrategy(s) for s in cfg.strategies]
    last = W.batches[-1].index

    base: Optional[OnlineIndex] = None
    base_seconds = 0.0
    if cfg.share_base or cfg.snapshot:
        # batch 0's updates are strategy independent, so build once and copy
        mcfg = _maintenance_config(cfg, DeleteStrategy.GLOBAL, seed)
        if cfg.snapshot:
            base = base_index_from_snapshot(cfg.snapshot, W.batches[0], mcfg)
        else:
            base = OnlineIndex(W.dimension, mcfg)
            _, base_seconds = base.apply_updates(W.batches[0])

    records: List[MetricsRecord] = []
    for strategy in strategies:
        mcfg = _maintenance_config(cfg, strategy, seed)
        if base is not None:
            index = copy.deepcopy(base)
            index.cfg = mcfg
        else:
            index = OnlineIndex(W.dimension, mcfg)
        _search_threads(index, cfg.threads)
        acc = 0.0
        for batch in W.batches:
            if base is not None and batch.index == W.batches[0].index:
                skipped, maint = 0, base_seconds
            else:
                skipped, maint = index.apply_updates(batch)
            nd, ni, nq = batch.op_counts()
            rec = dict(seed=seed, batch=batch.index, strategy=strategy.value, K=cfg.topk,
                       deletes=nd, inserts=ni, queries=nq, skipped_deletes=skipped,
                       maintenance_seconds=maint, live_vertices=index.graph.live_count,
                       tombstones=index.graph.tombstone_count, relative_qps=math.nan)
            if len(batch.query_ids) == 0:
                acc += maint
                records.append(MetricsRecord(k=cfg.k, recall=math.nan, target_met=False,
                                             queries_per_second=math.nan,
                                             mean_distance_computations=math.nan,
                                             query_seconds=0.0,
                                             accumulated_time_seconds=acc, **rec))
                continue
            gt = cache.get(index.store, batch.query_vectors, cfg.topk, index.live_store_ids())
            k, met = cfg.k, True
            if cfg.target_recall is not None and (cfg.calibrate == "all" or batch.index == last):
                try:
                    k, _ = find_k_star(index, batch, gt, cfg.topk, cfg.target_recall)
                except TargetUnreachable as exc:
                    log.warning("seed %d batch %d %s: %s", seed, batch.index, strategy.value, exc)
                    k, met = exc.k_cap, False
            res, qsec = index.run_queries(batch, k)
            recall = float(gt.recall(res.ids, cfg.topk).mean())
            if cfg.target_recall is not None:
                met = met and recall >= cfg.target_recall
            acc += maint + qsec
            records.append(MetricsRecord(
                k=k, recall=recall, target_met=met,
                queries_per_second=nq / qsec if qsec > 0 else math.inf,
                mean_distance_computations=float(res.distance_computations.mean()),
                query_seconds=qsec, accumulated_time_seconds=acc, **rec))
        if graphs is not None:
            graphs[(seed, strategy.value)] = (index.graph, index.store.dimension)
    return records


def attach_relative_qps(records: List[MetricsRecord]) -> List[MetricsRecord]:
    ref = {(r.seed, r.batch): r.queries_per_second for r in records
           if r.strategy == DeleteStrategy.REBUILD.value}
    for r in records:
        base = ref.get((r.seed, r.batch))
        if base and not math.isnan(base) and not math.isnan(r.queries_per_second):
            r.relative_qps = r.queries_per_second / base
    return records


_WARM = False


def warm_up() -> None:
    """Exercise every compiled kernel once so JIT or cache loading never
    lands inside a timed section."""
    global _WARM
    if _WARM:
        return
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 4)).astype(np.float32)
    for strategy in ALL_STRATEGIES:
        for metric in ("l2", "cosine"):
            index = OnlineIndex(4, MaintenanceConfig(k=8, d=4, metric=metric, strategy=strategy))
            index.apply_updates(Batch(0, insert_ids=np.arange(30), insert_vectors=X[:30]))
            index.apply_updates(Batch(1, delete_ids=np.arange(10), insert_ids=np.arange(30, 40),
                                      insert_vectors=X[30:]))
            Q = index.prepare_queries(X[:3])
            index.search(Q, 8, index.query_starts(1, 3))
    _WARM = True


def run_benchmark(cfg: RunConfig, graphs: Optional[dict] = None) -> List[MetricsRecord]:
    """One record per (seed, strategy, batch); writes ``cfg.out`` if set.

    ``graphs``, if given, collects the final (graph, dimension) per
    (seed, strategy).
    """
    if cfg.snapshot_dir and graphs is None:
        graphs = {}
    warm_up()
    cache = GroundTruthCache()
    records: List[MetricsRecord] = []
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        records.extend(run_seed(cfg, int(seed), cache, graphs))
        log.info("seed %s done in %.1fs", seed, time.perf_counter() - t0)
    attach_relative_qps(records)
    if cfg.snapshot_dir and graphs is not None:
        os.makedirs(cfg.snapshot_dir, exist_ok=True)
        for (seed, strategy), (g, dim) in sorted(graphs.items()):
            g.save(os.path.join(cfg.snapshot_dir, f"graph_s{seed}_{strategy}.ipgm"),
                   dim, Metric.parse(cfg.metric).code)
    if cfg.out:
        emit_report(records, cfg.out)
    return records


def sweep_to_recall(cfg: RunConfig, target_recall: float) -> List[MetricsRecord]:
    """Run with per-batch queue-length calibration to ``target_recall``."""
    return run_benchmark(replace(cfg, target_recall=target_recall))


def summarize(records: Iterable[MetricsRecord], column: str, batch: Optional[int] = None
              ) -> Dict[str, float]:
    """Mean of ``column`` per strategy (optionally for a single batch)."""
    acc: Dict[str, List[float]] = {}
    for r in records:
        if batch is None or r.batch == batch:
            acc.setdefault(r.strategy, []).append(getattr(r, column))
    return {s: float(np.mean(v)) for s, v in acc.items()}


# --------------------------------------------------------------------------
# reports

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(records: Sequence[MetricsRecord], path, fmt: Optional[str] = None) -> None:
    """CSV (header row, fixed column order, one ``#`` note line) or JSON lines."""
    fmt = fmt or ("jsonl" if str(path).endswith((".jsonl", ".json")) else "csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            fh.write(f"# {REPORT_NOTE}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in records:
                w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
        elif fmt in ("jsonl", "json-lines"):
            for r in records:
                row = {c: getattr(r, c) for c in COLUMNS}
                fh.write(json.dumps(row, allow_nan=True) + "\n")
        else:
            raise ValueError(f"unknown report format {fmt!r}")


def _parse(name, text):
    t = _TYPES[name]
    if t in ("int", int):
        return int(text)
    if t in ("bool", bool):
        return text in ("1", "True", "true", True)
    if t in ("float", float):
        return float(text)
    return text


def read_report(path) -> List[MetricsRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        first = fh.read(1)
        fh.seek(0)
        if first == "{":
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    out.append(MetricsRecord(**{c: row[c] for c in COLUMNS}))
            return out
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows, None)
        if header is None:
            return out
        if header != COLUMNS:
            raise ValueError(f"unexpected report columns {header}")
        for row in rows:
            out.append(MetricsRecord(**{c: _parse(c, v) for c, v in zip(COLUMNS, row)}))
    return out
