"""Independent ground truth: brute-force top-K and recall, plus an exact
2-D Delaunay construction for checking greedy search and deletion locality
on small instances."""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .exceptions import DegeneratePosition
from .graph import ProximityGraph
from .store import Metric, VectorStore, read_ivecs, write_ivecs

INSIDE_TOL = 1e-12
DEGENERATE_TOL = 1e-9
PERTURB_SCALE = 1e-6


# --------------------------------------------------------------------------
# recall and ground truth

def recall_at_k(retrieved: Sequence[int], truth: Sequence[int], K: int) -> float:
    """|retrieved[:K] & truth[:K]| / min(K, |truth|)."""
    if K < 1:
        raise ValueError("K must be positive")
    truth = list(truth)[:K]
    if not truth:
        raise ValueError("truth must be non-empty")
    hit = set(int(i) for i in list(retrieved)[:K]) & set(int(i) for i in truth)
    return len(hit) / len(truth)


@dataclass
class GroundTruth:
    """Exact top-K ids per query, best first, ties by ascending id.

    Rows are padded with -1 when the live set has fewer than K members.
    """
    ids: np.ndarray
    K: int

    def __len__(self):
        return len(self.ids)

    def row(self, i) -> List[int]:
        r = self.ids[i]
        return r[r >= 0].tolist()

    def recall(self, retrieved: np.ndarray, K: Optional[int] = None) -> np.ndarray:
        """Per-query recall@K of a (m, >=K) id matrix (padding -1 ignored)."""
        K = K or self.K
        return np.array([recall_at_k([j for j in retrieved[i][:K] if j >= 0],
                                     self.row(i), K)
                         for i in range(len(self))])

    def save(self, path) -> None:
        write_ivecs(path, self.ids.astype(np.int32))

    @classmethod
    def load(cls, path) -> "GroundTruth":
        ids = read_ivecs(path).astype(np.int64)
        return cls(ids, ids.shape[1])


def ground_truth(store: VectorStore, Q: np.ndarray, K: int, live=None,
                 chunk: int = 256) -> GroundTruth:
    """Brute-force top-K over ``live`` (default: every stored id).

    ``Q`` is a batch of raw query vectors; it is ingested like a stored
    vector before scoring.
    """
    if K < 1:
        raise ValueError("K must be positive")
    ids = store.ids() if live is None else np.sort(np.asarray(live, dtype=np.int64))
    Qp = store.prepare(Q).astype(np.float64)
    out = np.full((len(Qp), K), -1, dtype=np.int64)
    if len(ids) == 0:
        return GroundTruth(out, K)
    kk = min(K, len(ids))
    for lo in range(0, len(Qp), chunk):
        S = _kernels.score_matrix(store.data, ids, Qp[lo:lo + chunk], store.metric.code)
        for r in range(len(S)):
            s = S[r]
            if kk < len(ids):
                # everything tied with the K-th best must be considered
                cut = np.partition(s, len(s) - kk)[len(s) - kk]
                cand = np.flatnonzero(s >= cut)
            else:
                cand = np.arange(len(ids))
            order = np.lexsort((ids[cand], -s[cand]))[:kk]
            out[lo + r, :kk] = ids[cand[order]]
    return GroundTruth(out, K)


def _digest(*arrays) -> str:
    h = hashlib.sha1()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str((a.dtype, a.shape)).encode())
        h.update(a.tobytes())
    return h.hexdigest()


class GroundTruthCache:
    """Memoises :func:`ground_truth` on (live-set vectors, queries, K).

    The key hashes the live vectors themselves, not their ids, so runs that
    number the same data differently still share entries.
    """

    def __init__(self):
        self._memo: Dict[Tuple[str, str, int], np.ndarray] = {}
        self.hits = 0
        self.misses = 0

    def get(self, store: VectorStore, Q: np.ndarray, K: int, live=None) -> GroundTruth:
        ids = store.ids() if live is None else np.sort(np.asarray(live, dtype=np.int64))
        X = store.data[ids]
        key = (_digest(X), _digest(np.asarray(Q, dtype=np.float32)), int(K))
        rows = self._memo.get(key)
        if rows is None:
            self.misses += 1
            gt = ground_truth(store, Q, K, ids)
            # store positions into the sorted live array, not ids
            pos = np.where(gt.ids >= 0, np.searchsorted(ids, gt.ids), -1)
            self._memo[key] = pos
            return gt
        self.hits += 1
        return GroundTruth(np.where(rows >= 0, ids[np.maximum(rows, 0)], -1), K)


# --------------------------------------------------------------------------
# exact 2-D Delaunay graph

def perturb(points, seed=0, scale: float = PERTURB_SCALE) -> np.ndarray:
    """Uniform noise in [-scale, scale] to break degeneracies, rounded to
    float32 so the oracle sees exactly what a store would hold."""
    P = np.asarray(points, dtype=np.float64)
    noise = np.random.default_rng(seed).uniform(-scale, scale, size=P.shape)
    return (P + noise).astype(np.float32).astype(np.float64)


@dataclass
class DelaunayGraph2D:
    points: np.ndarray
    edges: FrozenSet[Tuple[int, int]]

    @property
    def n(self) -> int:
        return len(self.points)

    def neighbors(self, i) -> set:
        return {b if a == i else a for a, b in self.edges if i in (a, b)}

    def adjacency(self) -> Dict[int, set]:
        adj = {i: set() for i in range(self.n)}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        adj = self.adjacency()
        seen, stack = {0}, [0]
        while stack:
            for v in adj[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n

    def to_graph(self, ids: Optional[Sequence[int]] = None) -> ProximityGraph:
        """Both directions of every edge, as a proximity graph."""
        ids = list(range(self.n)) if ids is None else [int(i) for i in ids]
        g = ProximityGraph(max(self.n - 1, 1), capacity=max(ids, default=0) + 1)
        for u in ids:
            g.add_vertex(u)
        for a, b in sorted(self.edges):
            g.add_edge(ids[a], ids[b])
            g.add_edge(ids[b], ids[a])
        return g


def delaunay_2d(points) -> DelaunayGraph2D:
    """Brute force: {i, j} is an edge iff some triangle (i, j, k) has a
    circumcircle with no other point strictly inside.

    Raises DegeneratePosition for (near-)collinear triples and for a fourth
    point lying on an otherwise empty circumcircle.
    """
    P = np.asarray(points, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] != 2:
        raise ValueError("expected an (n, 2) array of points")
    n = len(P)
    if n < 3:
        return DelaunayGraph2D(P, frozenset(itertools.combinations(range(n), 2)))
    tri = np.array(list(itertools.combinations(range(n), 3)), dtype=np.int64)
    a, b, c = P[tri[:, 0]], P[tri[:, 1]], P[tri[:, 2]]
    orient = ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
              - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    if np.any(np.abs(orient) < DEGENERATE_TOL):
        t = tri[np.argmin(np.abs(orient))]
        raise DegeneratePosition(f"points {t.tolist()} are collinear")
    sign = np.sign(orient)

    # incircle determinant for every (triangle, point) pair. Lifting p to
    # (px, py, px^2 + py^2, 1) makes it linear in the lifted point, with
    # coefficients given by the 3x3 minors of the triangle's lifted rows.
    L = np.column_stack([P, (P ** 2).sum(axis=1), np.ones(n)])
    T = np.stack([L[tri[:, 0]], L[tri[:, 1]], L[tri[:, 2]]], axis=1)
    coef = np.empty((len(tri), 4))
    for j, s in enumerate((-1.0, 1.0, -1.0, 1.0)):
        cols = [c for c in range(4) if c != j]
        coef[:, j] = s * np.linalg.det(T[:, :, cols])
    det = (coef @ L.T) * sign[:, None]
    own = np.zeros_like(det, dtype=bool)
    rows = np.arange(len(tri))
    for col in range(3):
        own[rows, tri[:, col]] = True
    det[own] = -np.inf

    empty = ~(det > INSIDE_TOL).any(axis=1)
    on_circle = (np.abs(det) <= DEGENERATE_TOL).any(axis=1)
    if np.any(empty & on_circle):
        t = tri[np.flatnonzero(empty & on_circle)[0]]
        raise DegeneratePosition(f"circumcircle of {t.tolist()} passes through a fourth point")
    edges = set()
    for i, j, k in tri[empty].tolist():
        edges.update(((i, j), (i, k), (j, k)))
    return DelaunayGraph2D(P, frozenset(edges))


# --------------------------------------------------------------------------
# theorem checks

@dataclass
class TheoremReport:
    passed: bool
    checks: int
    failures: List[tuple] = field(default_factory=list)

    def __bool__(self):
        return self.passed


def _store_2d(P: np.ndarray) -> VectorStore:
    store = VectorStore(2, Metric.EUCLIDEAN, capacity=len(P))
    store.add_many(P)
    return store


def verify_theorem1(points, trials: int, seed=0, drop_edges: int = 0) -> TheoremReport:
    """Greedy search with k=1 on the exact Delaunay graph, from every start
    vertex, must return the brute-force nearest neighbor of each of
    ``trials`` random queries.

    ``drop_edges`` removes that many random Delaunay edges first (negative
    control; failures are then expected but not guaranteed).
    """
    from .search import greedy_search
    from .store import brute_force_topk

    P = np.asarray(points, dtype=np.float64)
    dg = delaunay_2d(P)
    store = _store_2d(P)
    g = dg.to_graph()
    rng = np.random.default_rng(seed)
    if drop_edges:
        edges = sorted(dg.edges)
        for e in rng.choice(len(edges), size=min(drop_edges, len(edges)), replace=False):
            a, b = edges[int(e)]
            g.remove_edge(a, b)
            g.remove_edge(b, a)
    lo, hi = P.min(axis=0), P.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    failures, checks = [], 0
    for _ in range(trials):
        q = rng.uniform(lo - 0.25 * span, hi + 0.25 * span)
        best = brute_force_topk(store, q, 1)[0][0]
        for s in range(len(P)):
            got = greedy_search(g, store, q, 1, start=s).ids
            checks += 1
            if got != [best]:
                failures.append((q.tolist(), s, got, best))
    return TheoremReport(not failures, checks, failures)


def verify_theorem2(points, x0: int) -> TheoremReport:
    """Deleting x0 from an exact Delaunay graph: (b) the surviving edges are
    a subset of the Delaunay graph of the remaining points, and (a) vertices
    that were not neighbors of x0 keep exactly their neighbor sets."""
    P = np.asarray(points, dtype=np.float64)
    n = len(P)
    x0 = int(x0)
    if not 0 <= x0 < n:
        raise IndexError(x0)
    G = delaunay_2d(P)
    keep = [i for i in range(n) if i != x0]
    sub = delaunay_2d(P[keep])
    # relabel the reduced graph back to original indices
    G2 = {(keep[a], keep[b]) for a, b in sub.edges}
    failures = []
    survivors = {e for e in G.edges if x0 not in e}
    for e in sorted(survivors - G2):
        failures.append(("b", e))
    adj = G.adjacency()
    adj2 = {i: set() for i in keep}
    for a, b in G2:
        adj2[a].add(b)
        adj2[b].add(a)
    for i in keep:
        if i in adj[x0]:
            continue
        if adj[i] != adj2[i]:
            failures.append(("a", i, sorted(adj[i]), sorted(adj2[i])))
    return TheoremReport(not failures, len(survivors) + len(keep), failures)


def random_general_position(n: int, seed=0) -> np.ndarray:
    """``n`` uniform points in the unit square, perturbed; resamples if the
    draw turns out degenerate."""
    rng = np.random.default_rng(seed)
    while True:
        P = perturb(rng.uniform(0.0, 1.0, size=(n, 2)), seed=rng.integers(2 ** 32))
        try:
            delaunay_2d(P)
        except DegeneratePosition:
            continue
        return P
