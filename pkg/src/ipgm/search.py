"""Greedy beam search over a proximity graph and diversity-based neighbor
selection."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Union

import numpy as np

from . import _kernels
from .exceptions import AllMasked, EmptyGraph
from .graph import ProximityGraph
from .store import VectorStore


@dataclass(frozen=True, order=True)
class Candidate:
    id: int
    score: float


@dataclass
class SearchResult:
    topk: List[Candidate]
    distance_computations: int = 0
    hops: int = 0

    @property
    def ids(self) -> List[int]:
        return [c.id for c in self.topk]

    @property
    def scores(self) -> List[float]:
        return [c.score for c in self.topk]


@dataclass
class BatchSearchResult:
    """Results for many queries: ``ids`` is (m, k), padded with -1."""
    ids: np.ndarray
    scores: np.ndarray
    distance_computations: np.ndarray
    hops: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.ids)

    def row(self, i) -> SearchResult:
        keep = self.ids[i] >= 0
        topk = [Candidate(int(a), float(b))
                for a, b in zip(self.ids[i][keep], self.scores[i][keep])]
        return SearchResult(topk, int(self.distance_computations[i]), int(self.hops[i]))


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_start(g: ProximityGraph, rng: np.random.Generator,
                 hidden: Optional[np.ndarray] = None, exclude: int = -1) -> int:
    """Uniformly sample a live vertex that is neither hidden nor ``exclude``."""
    live = g.live_ids()
    if hidden is not None and hidden is not g._tomb and len(live):
        live = live[~hidden[live]]
    if exclude >= 0:
        live = live[live != exclude]
    if len(live) == 0:
        if len(g):
            raise AllMasked("no live vertex to start from")
        raise EmptyGraph("graph has no vertices")
    return int(live[rng.integers(len(live))])


def _query_vec(store: VectorStore, q) -> np.ndarray:
    return np.ascontiguousarray(store._resolve(q))


def _hidden(g: ProximityGraph, extra) -> np.ndarray:
    if not extra:
        return g._tomb
    h = g._tomb.copy()
    for v in extra:
        v = int(v)
        if 0 <= v < len(h):
            h[v] = True
    return h


def _run(g, store, q, k, hidden, traverse, rng, start, exclude=-1) -> SearchResult:
    if k < 1:
        raise ValueError("k must be >= 1")
    if start is None:
        start = sample_start(g, rng, hidden, exclude)
    start = int(start)
    if start not in g:
        raise EmptyGraph(f"start vertex {start} not in graph")
    ids, sc, nd, hops = _kernels.beam_search(
        store.data, g._out, g._deg, g._present, hidden, _query_vec(store, q),
        int(k), start, store.metric.code, traverse, int(exclude))
    topk = [Candidate(int(a), float(b)) for a, b in zip(ids, sc)]
    return SearchResult(topk, int(nd), int(hops))


def greedy_search(g: ProximityGraph, store: VectorStore, q, k: int,
                  mask: Optional[Iterable[int]] = None, seed=None,
                  start: Optional[int] = None) -> SearchResult:
    """Best-first search from one random live vertex with a queue of size k.

    Vertices in ``mask`` (and any tombstones) are never visited. The search
    stops once every queued candidate has been expanded; the final queue is
    the result, best first.
    """
    hidden = _hidden(g, list(mask or ()))
    return _run(g, store, q, k, hidden, False, as_rng(seed), start)


def greedy_search_mask_aware(g: ProximityGraph, store: VectorStore, q, k: int,
                             Y: Optional[Iterable[int]] = None, seed=None,
                             start: Optional[int] = None,
                             exclude: int = -1) -> SearchResult:
    """Like :func:`greedy_search`, but masked vertices are still expanded and
    counted; they are only filtered out of the returned candidates.

    ``Y`` defaults to the graph's own tombstone set.
    """
    hidden = g._tomb if Y is None else _hidden(g, list(Y))
    return _run(g, store, q, k, hidden, True, as_rng(seed), start, exclude)


def sample_starts(g: ProximityGraph, rng: np.random.Generator, m: int) -> np.ndarray:
    live = g.live_ids()
    if len(live) == 0:
        if len(g):
            raise AllMasked("every vertex is masked")
        raise EmptyGraph("graph has no vertices")
    return live[rng.integers(len(live), size=m)]


def search_batch(g: ProximityGraph, store: VectorStore, Q: np.ndarray, k: int,
                 starts: np.ndarray, mask_aware: bool = False) -> BatchSearchResult:
    """Run many searches in one compiled call. ``Q`` must already be prepared
    by the store (normalised for cosine)."""
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    ids, sc, nd, hops = _kernels.beam_search_many(
        store.data, g._out, g._deg, g._present, g._tomb, Q,
        np.ascontiguousarray(starts, dtype=np.int64), int(k),
        store.metric.code, bool(mask_aware))
    return BatchSearchResult(ids, sc, nd, hops)


def _ids(S) -> np.ndarray:
    out = []
    for s in S:
        out.append(s.id if isinstance(s, Candidate) else int(s))
    return np.asarray(out, dtype=np.int64)


def select_neighbors(store: VectorStore, x: Union[int, np.ndarray], S, d: int,
                     I: Iterable[int] = ()) -> List[int]:
    """Pick up to ``d`` diverse neighbors for ``x`` from candidates ``S``.

    Candidates are visited nearest first; one is accepted when it is valid
    and at least as close to ``x`` as to every neighbor accepted so far.
    There is no backfill, so fewer than ``d`` may come back.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    xv = _query_vec(store, x)
    cand = _ids(S)
    invalid = np.asarray(sorted(int(i) for i in I), dtype=np.int64)
    return _kernels.select_neighbors(store.data, xv, cand, int(d), invalid,
                                     store.metric.code).tolist()
