"""Online insertion, vertex deletion strategies, full rebuild and the
workload dispatcher."""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional

import numpy as np

from .exceptions import AlreadyDeleted, AlreadyMasked, UnknownVertex
from .graph import ProximityGraph
from . import _kernels
from .search import (
    BatchSearchResult,
    as_rng,
    sample_start,
    sample_starts,
    search_batch,
)
from .store import Metric, VectorStore
from .workload import Batch, Workload

log = logging.getLogger(__name__)


class DeleteStrategy(str, enum.Enum):
    PURE = "pure"
    MASK = "mask"
    LOCAL = "local"
    GLOBAL = "global"
    REBUILD = "rebuild"


ALL_STRATEGIES = tuple(DeleteStrategy)


@dataclass
class MaintenanceConfig:
    """``k`` is the search queue length, ``d`` the out-degree bound.

    ``bidirectional`` makes every insertion also offer the new vertex to its
    selected neighbors (re-pruning a full list with the same diversity
    rule). Without it, edges only ever point from newer to older vertices.
    """
    k: int = 64
    d: int = 16
    metric: Metric = Metric.EUCLIDEAN
    strategy: DeleteStrategy = DeleteStrategy.GLOBAL
    seed: int = 0
    bidirectional: bool = True

    def __post_init__(self):
        self.metric = Metric.parse(self.metric)
        self.strategy = DeleteStrategy(self.strategy)
        if not (self.k >= self.d >= 1):
            raise ValueError(f"need k >= d >= 1, got k={self.k}, d={self.d}")


def construction_rng(seed, batch: int = 0) -> np.random.Generator:
    """Maintenance randomness for one batch. A rebuild always uses batch 0's
    stream, so it reproduces the base graph exactly."""
    return np.random.default_rng([int(seed), 0, int(batch)])


def query_rng(seed, batch: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), 1, int(batch)])


# --------------------------------------------------------------------------
# insertion

def link_vertex(g: ProximityGraph, store: VectorStore, vid: int,
                cfg: MaintenanceConfig, rng=None, trace: Optional[list] = None) -> List[int]:
    """Connect the already-stored vector ``vid`` into the graph."""
    rng = as_rng(rng)
    vid = int(vid)
    if g.live_count == 0:
        g.add_vertex(vid)
        if trace is not None:
            trace.append((vid, [], []))
        return []
    start = sample_start(g, rng)
    g.add_vertex(vid)
    g.reserve_in_degree(1)
    cand, chosen, _ = _kernels.link(
        store.data, *g.arrays, g._present, g._tomb, vid, start, int(cfg.k),
        store.metric.code, cfg.strategy is DeleteStrategy.MASK, bool(cfg.bidirectional))
    if trace is not None:
        trace.append((vid, cand.tolist(), chosen.tolist()))
    return chosen.tolist()


def insert(g: ProximityGraph, store: VectorStore, x, cfg: MaintenanceConfig,
           rng=None, trace: Optional[list] = None) -> int:
    """Store ``x`` under a fresh id and link it into the graph."""
    vid = store.add(x)
    link_vertex(g, store, vid, cfg, rng, trace)
    return vid


# --------------------------------------------------------------------------
# deletion

def _require_live(g: ProximityGraph, x) -> int:
    x = int(x)
    if x not in g:
        if g.was_removed(x):
            raise AlreadyDeleted(x)
        raise UnknownVertex(x)
    if g.is_masked(x):
        raise AlreadyDeleted(x)
    return x


def delete_pure(g: ProximityGraph, x) -> None:
    """Remove ``x`` and every incident edge; nothing is reconnected."""
    x = _require_live(g, x)
    g.remove_vertex(x)


def delete_mask(g: ProximityGraph, x) -> None:
    """Tombstone ``x``: edges stay, searches walk through it but never
    return it."""
    x = int(x)
    if x not in g:
        if g.was_removed(x):
            raise AlreadyDeleted(x)
        raise UnknownVertex(x)
    if g.is_masked(x):
        raise AlreadyMasked(x)
    g.mask(x)


def delete_local_reconnect(g: ProximityGraph, store: VectorStore, x,
                           cfg: MaintenanceConfig) -> None:
    """Each in-neighbor of ``x`` trades its edge to ``x`` for at most one
    edge into the former out-neighborhood of ``x``."""
    x = _require_live(g, x)
    g.reserve_in_degree(g.in_degree(x))
    _kernels.local_reconnect(store.data, *g.arrays, x, store.metric.code)
    g._forget(x)


def delete_global_reconnect(g: ProximityGraph, store: VectorStore, x,
                            cfg: MaintenanceConfig, rng=None) -> int:
    """Re-insert every in-neighbor of ``x``: fresh search over the whole
    graph, fresh diversity selection, old out-edges replaced.

    ``x`` may still guide those searches but is never selected. Only the
    out-lists of ``x`` and of its in-neighbors change. Returns the number of
    distance computations spent.
    """
    rng = as_rng(rng)
    x = _require_live(g, x)
    m = g.in_degree(x)
    live = g.live_ids()
    if m == 0 or len(live) < 2:
        g.remove_vertex(x)
        return 0
    # one uniform start per search, drawn from the live set minus x
    r = rng.integers(len(live) - 1, size=m)
    r += r >= np.searchsorted(live, x)
    g.reserve_in_degree(m)
    nd = _kernels.global_reconnect(store.data, *g.arrays, g._present, g._tomb, x,
                                   live[r], int(cfg.k), store.metric.code)
    g._forget(x)
    return int(nd)


def rebuild(store: VectorStore, live, cfg: MaintenanceConfig) -> ProximityGraph:
    """Fresh graph from sequential insertion of ``live`` in ascending id
    order, with a freshly seeded generator."""
    live = sorted(int(i) for i in live)
    if not live:
        raise ValueError("cannot rebuild an empty graph")
    g = ProximityGraph(cfg.d, capacity=live[-1] + 1)
    rng = construction_rng(cfg.seed)
    plain = cfg if cfg.strategy is not DeleteStrategy.MASK else \
        MaintenanceConfig(cfg.k, cfg.d, cfg.metric, DeleteStrategy.REBUILD,
                          cfg.seed, cfg.bidirectional)
    for vid in live:
        link_vertex(g, store, vid, plain, rng)
    return g


# --------------------------------------------------------------------------
# dispatcher

@dataclass
class BatchOutcome:
    """Everything one batch produced. Query results come from the first pass
    over the batch's query set; repeats reuse the same start vertices."""
    batch: int
    strategy: DeleteStrategy
    deletes: int
    inserts: int
    queries: int
    skipped_deletes: int
    maintenance_seconds: float
    query_seconds: float
    query_k: int
    query_ids: np.ndarray
    results: Optional[BatchSearchResult]
    live_vertices: int
    tombstones: int

    def result(self, i):
        return self.results.row(i)


class OnlineIndex:
    """Graph + store + id bookkeeping driven by workload batches.

    Workload ids are external; each inserted vector gets a fresh store id.
    """

    def __init__(self, dimension: int, cfg: MaintenanceConfig,
                 store: Optional[VectorStore] = None,
                 graph: Optional[ProximityGraph] = None):
        self.cfg = cfg
        self.store = store if store is not None else VectorStore(dimension, cfg.metric)
        self.graph = graph if graph is not None else ProximityGraph(cfg.d)
        self.rng = construction_rng(cfg.seed)
        self.id_map: dict = {}
        self.check_each_op = False

    @property
    def strategy(self) -> DeleteStrategy:
        return self.cfg.strategy

    def live_store_ids(self) -> np.ndarray:
        if self.strategy is DeleteStrategy.MASK:
            return self.graph.live_ids()
        return self.store.ids()

    def _after_op(self):
        if self.check_each_op:
            bad = self.graph.check_invariants()
            if bad:
                raise AssertionError(f"invariant violations: {bad[:5]}")

    def delete(self, wid) -> bool:
        """Delete by workload id. Returns False when the id is not live."""
        sid = self.id_map.pop(int(wid), None)
        if sid is None:
            return False
        s = self.strategy
        if s is DeleteStrategy.MASK:
            delete_mask(self.graph, sid)
        else:
            if s is DeleteStrategy.PURE:
                delete_pure(self.graph, sid)
            elif s is DeleteStrategy.LOCAL:
                delete_local_reconnect(self.graph, self.store, sid, self.cfg)
            elif s is DeleteStrategy.GLOBAL:
                delete_global_reconnect(self.graph, self.store, sid, self.cfg, self.rng)
            self.store.remove(sid)
        self._after_op()
        return True

    def insert(self, wid, vector) -> int:
        if int(wid) in self.id_map:
            raise ValueError(f"workload id {wid} is already live")
        if self.strategy is DeleteStrategy.REBUILD:
            sid = self.store.add(vector)
        else:
            sid = insert(self.graph, self.store, vector, self.cfg, self.rng)
        self.id_map[int(wid)] = sid
        self._after_op()
        return sid

    def rebuild(self) -> None:
        self.graph = rebuild(self.store, self.store.ids(), self.cfg)
        self._after_op()

    def prepare_queries(self, Q) -> np.ndarray:
        return self.store.prepare(Q).astype(np.float64)

    def search(self, Q: np.ndarray, k: int, starts: np.ndarray) -> BatchSearchResult:
        return search_batch(self.graph, self.store, Q, k, starts,
                            mask_aware=self.strategy is DeleteStrategy.MASK)

    def query_starts(self, batch: int, m: int) -> np.ndarray:
        return sample_starts(self.graph, query_rng(self.cfg.seed, batch), m)

    def apply_updates(self, batch: Batch):
        """Deletes then inserts (then the rebuild, for that strategy).
        Returns (skipped_deletes, seconds)."""
        self.rng = construction_rng(self.cfg.seed, batch.index)
        t0 = time.perf_counter()
        skipped = 0
        for wid in batch.delete_ids.tolist():
            if not self.delete(wid):
                skipped += 1
        if len(batch.insert_ids):
            for wid, vec in zip(batch.insert_ids.tolist(), batch.insert_vectors):
                self.insert(wid, vec)
        if self.strategy is DeleteStrategy.REBUILD and len(self.store):
            self.rebuild()
        return skipped, time.perf_counter() - t0

    def run_queries(self, batch: Batch, k: int):
        """Timed query phase. Returns (results, seconds)."""
        if len(batch.query_ids) == 0:
            return None, 0.0
        Q = self.prepare_queries(batch.query_vectors)
        starts = self.query_starts(batch.index, len(Q))
        t0 = time.perf_counter()
        res = self.search(Q, k, starts)
        for _ in range(batch.query_repeat - 1):
            self.search(Q, k, starts)
        return res, time.perf_counter() - t0

    def apply_batch(self, batch: Batch, query_k: Optional[int] = None,
                    calibrate: Optional[Callable] = None) -> BatchOutcome:
        skipped, maint = self.apply_updates(batch)
        k = query_k or self.cfg.k
        if calibrate is not None and len(batch.query_ids):
            k = calibrate(self, batch)
        res, qsec = self.run_queries(batch, k)
        nd, ni, nq = batch.op_counts()
        return BatchOutcome(
            batch=batch.index, strategy=self.strategy, deletes=nd, inserts=ni,
            queries=nq, skipped_deletes=skipped, maintenance_seconds=maint,
            query_seconds=qsec, query_k=k, query_ids=batch.query_ids, results=res,
            live_vertices=self.graph.live_count, tombstones=len(self.graph.tombstones))


def apply_workload(g: Optional[ProximityGraph], store: Optional[VectorStore],
                   W: Workload, cfg: MaintenanceConfig, query_k: Optional[int] = None,
                   calibrate: Optional[Callable] = None) -> Iterator[BatchOutcome]:
    """Replay ``W`` batch by batch, yielding one :class:`BatchOutcome` each.

    Pass ``g=None, store=None`` to start from an empty index.
    """
    dim = store.dimension if store is not None else W.dimension
    index = OnlineIndex(dim, cfg, store, g)
    for batch in W.batches:
        yield index.apply_batch(batch, query_k, calibrate)
