"""Directed proximity graph with a maintained reverse graph and tombstones."""
from __future__ import annotations

import io
import struct
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import _kernels
from .exceptions import (
    AlreadyMasked,
    DegreeOverflow,
    MalformedFile,
    SelfLoop,
    UnknownVertex,
)

SNAPSHOT_MAGIC = b"IPGM"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Violation:
    kind: str
    u: int
    v: int = -1
    detail: str = ""


@dataclass(frozen=True)
class GraphStats:
    live_vertex_count: int
    tombstone_count: int
    edge_count: int
    mean_out_degree: float
    reachable_fraction_from_random_start: float


class ProximityGraph:
    """Out-adjacency G (bounded by ``degree_limit``), reverse adjacency G'
    (unbounded), and the tombstone set Y.

    Both adjacencies are fixed-width int64 matrices so the compiled search
    and maintenance kernels can edit them in place; slot order is insertion
    order. The reverse matrix widens on demand.
    """

    def __init__(self, degree_limit: int, capacity: int = 16):
        if degree_limit < 1:
            raise ValueError("degree_limit must be positive")
        self.degree_limit = int(degree_limit)
        capacity = max(int(capacity), 16)
        self._out = np.full((capacity, self.degree_limit), -1, dtype=np.int64)
        self._deg = np.zeros(capacity, dtype=np.int64)
        self._inn = np.full((capacity, 2 * self.degree_limit), -1, dtype=np.int64)
        self._indeg = np.zeros(capacity, dtype=np.int64)
        self._present = np.zeros(capacity, dtype=bool)
        self._tomb = np.zeros(capacity, dtype=bool)
        self._gone = np.zeros(capacity, dtype=bool)
        self._n_present = 0
        self._n_tomb = 0
        self._live_cache: Optional[np.ndarray] = None

    # ---------------------------------------------------------------- storage
    @property
    def capacity(self) -> int:
        return len(self._deg)

    def reserve(self, n_vertices: int) -> None:
        cap = self.capacity
        if n_vertices <= cap:
            return
        new = max(int(n_vertices), 2 * cap)
        for name in ("_out", "_inn"):
            old = getattr(self, name)
            arr = np.full((new, old.shape[1]), -1, dtype=np.int64)
            arr[:cap] = old
            setattr(self, name, arr)
        for name in ("_deg", "_indeg", "_present", "_tomb", "_gone"):
            old = getattr(self, name)
            arr = np.zeros(new, dtype=old.dtype)
            arr[:cap] = old
            setattr(self, name, arr)

    def reserve_in_degree(self, extra: int) -> None:
        """Make room for ``extra`` more in-edges on any single vertex."""
        need = int(self._indeg.max(initial=0)) + int(extra)
        width = self._inn.shape[1]
        if need <= width:
            return
        arr = np.full((self.capacity, max(need, 2 * width)), -1, dtype=np.int64)
        arr[:, :width] = self._inn
        self._inn = arr

    @property
    def arrays(self):
        """(out, deg, inn, indeg) as used by the kernels."""
        return self._out, self._deg, self._inn, self._indeg

    # ---------------------------------------------------------------- vertices
    def __contains__(self, u) -> bool:
        u = int(u)
        return 0 <= u < self.capacity and bool(self._present[u])

    def __len__(self) -> int:
        return self._n_present

    def _check(self, u) -> int:
        u = int(u)
        if u not in self:
            raise UnknownVertex(u)
        return u

    def add_vertex(self, u) -> None:
        u = int(u)
        if u < 0:
            raise ValueError("vertex ids are non-negative")
        self.reserve(u + 1)
        if self._present[u] or self._gone[u]:
            raise ValueError(f"vertex id {u} already used")
        self._present[u] = True
        self._n_present += 1
        self._live_cache = None

    def remove_vertex(self, u) -> None:
        """Drop ``u`` together with every incident edge."""
        u = self._check(u)
        _kernels.isolate(*self.arrays, u)
        self._forget(u)

    def _forget(self, u: int) -> None:
        # bookkeeping for a vertex whose edges are already gone
        if self._tomb[u]:
            self._tomb[u] = False
            self._n_tomb -= 1
        self._present[u] = False
        self._gone[u] = True
        self._n_present -= 1
        self._live_cache = None

    def was_removed(self, u) -> bool:
        u = int(u)
        return 0 <= u < self.capacity and bool(self._gone[u])

    def vertices(self) -> np.ndarray:
        return np.flatnonzero(self._present).astype(np.int64)

    def is_live(self, u) -> bool:
        return u in self and not self._tomb[int(u)]

    def live_ids(self) -> np.ndarray:
        """Sorted ids that are present and not tombstoned."""
        if self._live_cache is None:
            self._live_cache = np.flatnonzero(self._present & ~self._tomb).astype(np.int64)
        return self._live_cache

    @property
    def live_count(self) -> int:
        return self._n_present - self._n_tomb

    # ------------------------------------------------------------- tombstones
    @property
    def tombstones(self) -> frozenset:
        return frozenset(int(i) for i in np.flatnonzero(self._tomb))

    @property
    def tombstone_count(self) -> int:
        return self._n_tomb

    def is_masked(self, u) -> bool:
        u = int(u)
        return 0 <= u < self.capacity and bool(self._tomb[u])

    def mask(self, u) -> None:
        u = self._check(u)
        if self._tomb[u]:
            raise AlreadyMasked(u)
        self._tomb[u] = True
        self._n_tomb += 1
        self._live_cache = None

    # ------------------------------------------------------------------ edges
    def out_neighbors(self, u) -> List[int]:
        u = self._check(u)
        return self._out[u, : self._deg[u]].tolist()

    def in_neighbors(self, u) -> List[int]:
        u = self._check(u)
        return self._inn[u, : self._indeg[u]].tolist()

    def out_degree(self, u) -> int:
        return int(self._deg[self._check(u)])

    def in_degree(self, u) -> int:
        return int(self._indeg[self._check(u)])

    def has_edge(self, u, v) -> bool:
        u = int(u)
        return u in self and int(v) in self._out[u, : self._deg[u]]

    def add_edge(self, u, v) -> bool:
        """Add u -> v. Returns False if the edge already existed."""
        u, v = int(u), int(v)
        if u == v:
            raise SelfLoop(u)
        self._check(u)
        self._check(v)
        self.reserve_in_degree(1)
        status = _kernels.add_edge(*self.arrays, u, v)
        if status == _kernels.OVERFLOW:
            raise DegreeOverflow(f"vertex {u} already has {self.degree_limit} out-edges")
        return status == _kernels.ADDED

    def remove_edge(self, u, v) -> bool:
        """Remove u -> v. Returns False (no-op) if the edge was absent."""
        u, v = self._check(u), int(v)
        return bool(_kernels.remove_edge(*self.arrays, u, v))

    def clear_out_edges(self, u) -> None:
        _kernels.clear_out(*self.arrays, self._check(u))

    @property
    def edge_count(self) -> int:
        return int(self._deg[self._present].sum())

    # ------------------------------------------------------------- diagnostics
    def check_invariants(self) -> List[Violation]:
        """Reverse consistency, degree bound, self-loops and duplicates."""
        if _kernels.graph_is_clean(self._out, self._deg, self._inn, self._indeg,
                                   self._present, self._tomb, self.degree_limit):
            return []
        return self._violations()

    def _violations(self) -> List[Violation]:
        bad: List[Violation] = []
        cap = len(self._present)
        deg, indeg = self._deg[:cap], self._indeg[:cap]
        for u in np.flatnonzero(self._present & (deg > self.degree_limit)).tolist():
            bad.append(Violation("DegreeOverflow", u, detail=f"degree {int(deg[u])}"))
        fwd = np.arange(self._out.shape[1]) < deg[:, None]
        rev = np.arange(self._inn.shape[1]) < indeg[:, None]
        fwd[~self._present] = False
        rev[~self._present] = False
        # every edge as one integer key u * cap + v
        rows_o, cols_o = np.nonzero(fwd)
        out_keys = rows_o.astype(np.int64) * cap + self._out[rows_o, cols_o]
        rows_i, cols_i = np.nonzero(rev)
        in_keys = self._inn[rows_i, cols_i].astype(np.int64) * cap + rows_i
        ko, co = np.unique(out_keys, return_counts=True)
        ki, ci = np.unique(in_keys, return_counts=True)
        keys = np.union1d(ko, ki)
        c_out = np.zeros(len(keys), np.int64)
        c_in = np.zeros(len(keys), np.int64)
        c_out[np.searchsorted(keys, ko)] = co
        c_in[np.searchsorted(keys, ki)] = ci
        u_of, v_of = keys // cap, keys % cap
        ok_v = (v_of >= 0) & (v_of < cap)
        present = np.zeros(len(keys), bool)
        present[ok_v] = self._present[u_of[ok_v]] & self._present[v_of[ok_v]]
        flag = ((u_of == v_of) | (np.maximum(c_out, c_in) > 1)
                | ((c_out > 0) != (c_in > 0)) | ~present)
        for j in np.flatnonzero(flag).tolist():
            u, v = int(u_of[j]), int(v_of[j])
            o, i = int(c_out[j]), int(c_in[j])
            if u == v:
                bad.append(Violation("SelfLoop", u, v))
            if max(o, i) > 1:
                bad.append(Violation("DuplicateEdge", u, v, f"out={o} in={i}"))
            if (o > 0) != (i > 0):
                bad.append(Violation("ReverseInconsistency", u, v, f"out={o} in={i}"))
            if not present[j]:
                bad.append(Violation("DanglingEdge", u, v))
        absent = ~self._present
        for u in np.flatnonzero(absent & ((deg > 0) | (indeg > 0))).tolist():
            bad.append(Violation("DanglingEdge", u, detail="edges on absent vertex"))
        for u in np.flatnonzero(absent & self._tomb[:cap]).tolist():
            bad.append(Violation("TombstoneAbsent", u))
        return bad

    def references(self, u) -> bool:
        """True if any adjacency row, forward or reverse, mentions ``u``."""
        u = int(u)
        fwd = np.arange(self._out.shape[1]) < self._deg[:, None]
        rev = np.arange(self._inn.shape[1]) < self._indeg[:, None]
        return bool(((self._out == u) & fwd).any() or ((self._inn == u) & rev).any())

    def reachable_fraction(self, start) -> float:
        """Fraction of live vertices reachable from ``start`` (tombstones are
        traversed but not counted)."""
        start = self._check(start)
        live = self.live_ids()
        if len(live) == 0:
            return 0.0
        seen = _kernels.reachable(self._out, self._deg, self._present, start)
        return float(seen[live].sum()) / len(live)

    def stats(self, seed=0) -> GraphStats:
        live = self.live_ids()
        frac = 0.0
        if len(live):
            start = int(live[np.random.default_rng(seed).integers(len(live))])
            frac = self.reachable_fraction(start)
        edges = self.edge_count
        return GraphStats(
            live_vertex_count=len(live),
            tombstone_count=self._n_tomb,
            edge_count=edges,
            mean_out_degree=edges / self._n_present if self._n_present else 0.0,
            reachable_fraction_from_random_start=frac,
        )

    # ------------------------------------------------------------ copy / io
    def copy(self) -> "ProximityGraph":
        g = ProximityGraph.__new__(ProximityGraph)
        g.__dict__.update(self.__dict__)
        for name in ("_out", "_deg", "_inn", "_indeg", "_present", "_tomb", "_gone"):
            setattr(g, name, getattr(self, name).copy())
        g._live_cache = None
        return g

    def adjacency(self) -> dict:
        return {u: self.out_neighbors(u) for u in self.vertices().tolist()}

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProximityGraph):
            return NotImplemented
        return (self.degree_limit == other.degree_limit
                and self.adjacency() == other.adjacency()
                and self.tombstones == other.tombstones)

    def to_bytes(self, dimension: int = 0, metric: int = 0) -> bytes:
        """Little-endian snapshot: header, one record per vertex (id,
        out-degree, neighbor ids), then the tombstone list."""
        buf = io.BytesIO()
        verts = self.vertices().tolist()
        buf.write(SNAPSHOT_MAGIC)
        buf.write(struct.pack("<IIIIQ", SNAPSHOT_VERSION, dimension,
                              self.degree_limit, metric, len(verts)))
        for u in verts:
            n = int(self._deg[u])
            buf.write(struct.pack("<QI", u, n))
            buf.write(self._out[u, :n].astype("<u8").tobytes())
        tomb = np.flatnonzero(self._tomb)
        buf.write(struct.pack("<Q", len(tomb)))
        buf.write(tomb.astype("<u8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes):
        """Returns (graph, dimension, metric_code); G' is rebuilt from G."""
        view = memoryview(blob)
        if bytes(view[:4]) != SNAPSHOT_MAGIC:
            raise MalformedFile("bad snapshot magic")
        try:
            version, dim, d, metric, nverts = struct.unpack_from("<IIIIQ", view, 4)
        except struct.error:
            raise MalformedFile("truncated snapshot header") from None
        if version != SNAPSHOT_VERSION:
            raise MalformedFile(f"unsupported snapshot version {version}")
        if d < 1:
            raise MalformedFile("degree limit must be positive")
        off = 4 + struct.calcsize("<IIIIQ")
        rows = []
        try:
            for _ in range(nverts):
                u, n = struct.unpack_from("<QI", view, off)
                off += 12
                nbrs = np.frombuffer(view, dtype="<u8", count=n, offset=off)
                off += 8 * n
                rows.append((u, nbrs.astype(np.int64)))
            (ntomb,) = struct.unpack_from("<Q", view, off)
            off += 8
            tomb = np.frombuffer(view, dtype="<u8", count=ntomb, offset=off)
            off += 8 * ntomb
        except (struct.error, ValueError) as exc:
            raise MalformedFile(f"truncated snapshot: {exc}") from None
        if off != len(blob):
            raise MalformedFile("trailing bytes in snapshot")
        cap = max([u for u, _ in rows], default=-1) + 1
        g = cls(d, capacity=cap)
        try:
            for u, _ in rows:
                g.add_vertex(u)
            for u, nbrs in rows:
                for v in nbrs.tolist():
                    if not g.add_edge(u, v):
                        raise MalformedFile(f"duplicate edge {u}->{v}")
            for u in tomb.tolist():
                g.mask(int(u))
        except (DegreeOverflow, SelfLoop, UnknownVertex, AlreadyMasked) as exc:
            raise MalformedFile(f"inconsistent snapshot: {exc!r}") from None
        except MalformedFile:
            raise
        except ValueError as exc:
            raise MalformedFile(f"inconsistent snapshot: {exc}") from None
        return g, dim, metric

    def save(self, path, dimension: int = 0, metric: int = 0) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes(dimension, metric))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
