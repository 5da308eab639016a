"""Benchmark workloads: base / delete / insert / query partitions under random
and clustered update patterns, plus the line-oriented workload log."""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional

import numpy as np

from .exceptions import (
    DanglingDeleteReference,
    EmptyCluster,
    InsufficientData,
    MalformedLog,
)
from .store import VectorStore, format_float


class OpKind(str, enum.Enum):
    QUERY = "Q"
    INSERT = "I"
    DELETE = "D"


class Pattern(str, enum.Enum):
    RANDOM = "random"
    CLUSTERED = "clustered"


@dataclass(frozen=True)
class WorkloadOp:
    op: OpKind
    id: int
    batch: int
    vector: Optional[np.ndarray] = None


def _empty_ids():
    return np.zeros(0, dtype=np.int64)


@dataclass
class Batch:
    """One step of the workload, always applied deletes -> inserts -> queries.

    Batch 0 carries the base set as inserts and has no deletes.
    """
    index: int
    delete_ids: np.ndarray = field(default_factory=_empty_ids)
    insert_ids: np.ndarray = field(default_factory=_empty_ids)
    insert_vectors: Optional[np.ndarray] = None
    query_ids: np.ndarray = field(default_factory=_empty_ids)
    query_vectors: Optional[np.ndarray] = None
    query_repeat: int = 1

    def ops(self) -> Iterator[WorkloadOp]:
        for i in self.delete_ids.tolist():
            yield WorkloadOp(OpKind.DELETE, i, self.index)
        for j, i in enumerate(self.insert_ids.tolist()):
            yield WorkloadOp(OpKind.INSERT, i, self.index, self.insert_vectors[j])
        for _ in range(self.query_repeat):
            for j, i in enumerate(self.query_ids.tolist()):
                yield WorkloadOp(OpKind.QUERY, i, self.index, self.query_vectors[j])

    def op_counts(self):
        return (len(self.delete_ids), len(self.insert_ids),
                len(self.query_ids) * self.query_repeat)

    def __eq__(self, other):
        if not isinstance(other, Batch):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return (a is None or len(a) == 0) and (b is None or len(b) == 0)
            return np.array_equal(a, b)

        return (self.index == other.index and self.query_repeat == other.query_repeat
                and np.array_equal(self.delete_ids, other.delete_ids)
                and np.array_equal(self.insert_ids, other.insert_ids)
                and np.array_equal(self.query_ids, other.query_ids)
                and same(self.insert_vectors, other.insert_vectors)
                and same(self.query_vectors, other.query_vectors))


@dataclass
class Workload:
    batches: List[Batch] = field(default_factory=list)

    def __len__(self) -> int:
        return sum(sum(b.op_counts()) for b in self.batches)

    def __iter__(self) -> Iterator[WorkloadOp]:
        for b in self.batches:
            yield from b.ops()

    def __eq__(self, other):
        if not isinstance(other, Workload):
            return NotImplemented
        return self.batches == other.batches

    @property
    def dimension(self) -> Optional[int]:
        for b in self.batches:
            for arr in (b.insert_vectors, b.query_vectors):
                if arr is not None and len(arr):
                    return arr.shape[1]
        return None

    def with_query_repeat(self, repeat: int) -> "Workload":
        return Workload([replace(b, query_repeat=int(repeat)) for b in self.batches])


@dataclass(frozen=True)
class WorkloadSpec:
    base_size: int = 5000
    delete_per_batch: int = 500
    insert_per_batch: int = 500
    query_per_batch: int = 500
    num_batches: int = 10
    pattern: Pattern = Pattern.CLUSTERED
    kmeans_k: int = 10
    seed: int = 0
    query_repeat: int = 1

    def __post_init__(self):
        object.__setattr__(self, "pattern", Pattern(self.pattern))
        if self.query_repeat < 1:
            raise ValueError("query_repeat must be >= 1")
        if min(self.base_size, self.query_per_batch) < 1:
            raise ValueError("base_size and query_per_batch must be positive")

    @property
    def required_vectors(self) -> int:
        return self.base_size + self.num_batches * self.insert_per_batch + self.query_per_batch


# Scaled-down default and full-size shapes of the published setup.
PRESETS = {
    "desk": WorkloadSpec(),
    "sift": WorkloadSpec(900_000, 10_000, 10_000, 10_000, 10),
    "glove200": WorkloadSpec(900_000, 10_000, 10_000, 10_000, 10),
    "gist": WorkloadSpec(900_000, 10_000, 10_000, 10_000, 10),
    "nytimes": WorkloadSpec(180_000, 10_000, 10_000, 10_000, 10),
}


# --------------------------------------------------------------------------
# k-means

def kmeans(X: np.ndarray, k: int, seed=0, max_iter: int = 50, tol: float = 1e-4):
    """Lloyd's algorithm with k-means++ seeding.

    Stops after ``max_iter`` rounds or once no centroid moves more than
    ``tol``. A cluster that empties is re-seeded at the point farthest from
    its current centroid. Returns (labels, centroids).
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if k < 1 or k > n:
        raise EmptyCluster(f"cannot form {k} clusters from {n} points")
    rng = np.random.default_rng(seed)
    sq = (X ** 2).sum(axis=1)

    def sqdist(C):
        d = sq[:, None] - 2.0 * X @ C.T + (C ** 2).sum(axis=1)[None, :]
        return np.maximum(d, 0.0)

    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = sqdist(centers[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers[c] = X[idx]
        closest = np.minimum(closest, sqdist(centers[c:c + 1])[:, 0])

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        D = sqdist(centers)
        labels = D.argmin(axis=1)
        new = centers.copy()
        counts = np.bincount(labels, minlength=k)
        for c in range(k):
            if counts[c]:
                new[c] = X[labels == c].mean(axis=0)
        for c in np.flatnonzero(counts == 0):
            far = int(D[np.arange(n), labels].argmax())
            new[c] = X[far]
            labels[far] = c
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if shift < tol:
            break
    labels = sqdist(centers).argmin(axis=1)
    return labels, centers


# --------------------------------------------------------------------------
# builders

def _check_size(dataset: VectorStore, spec: WorkloadSpec) -> np.ndarray:
    ids = dataset.ids()
    if len(ids) < spec.required_vectors:
        raise InsufficientData(
            f"need {spec.required_vectors} vectors, dataset has {len(ids)}")
    return ids


def _assemble(dataset, spec, base, insert_slices, queries, pick_deletes) -> Workload:
    qv = dataset.vectors(queries)
    batches = [Batch(0, insert_ids=base, insert_vectors=dataset.vectors(base),
                     query_ids=queries, query_vectors=qv,
                     query_repeat=spec.query_repeat)]
    for b, ins in enumerate(insert_slices, start=1):
        dels = pick_deletes()
        batches.append(Batch(b, delete_ids=dels, insert_ids=ins,
                             insert_vectors=dataset.vectors(ins),
                             query_ids=queries, query_vectors=qv,
                             query_repeat=spec.query_repeat))
    return Workload(batches)


def build_random_workload(dataset: VectorStore, spec: WorkloadSpec) -> Workload:
    """Permute the dataset, take base / per-batch inserts / held-out queries
    as consecutive slices; deletes are drawn uniformly from the live set."""
    ids = _check_size(dataset, spec)
    rng = np.random.default_rng(spec.seed)
    perm = ids[rng.permutation(len(ids))]
    B, n_ins = spec.num_batches, spec.insert_per_batch
    base = perm[: spec.base_size]
    end = spec.base_size + B * n_ins
    slices = [perm[spec.base_size + i * n_ins: spec.base_size + (i + 1) * n_ins]
              for i in range(B)]
    queries = perm[end: end + spec.query_per_batch]
    live = set(base.tolist())
    pending = iter(slices)

    def pick():
        if spec.delete_per_batch > len(live):
            raise InsufficientData("delete set larger than the live set")
        pool = np.array(sorted(live), dtype=np.int64)
        dels = rng.choice(pool, size=spec.delete_per_batch, replace=False)
        live.difference_update(dels.tolist())
        live.update(next(pending).tolist())
        return dels.astype(np.int64)

    return _assemble(dataset, spec, base, slices, queries, pick)


def build_clustered_workload(dataset: VectorStore, spec: WorkloadSpec) -> Workload:
    """Order the dataset cluster by cluster (k-means over the whole dataset,
    clusters in shuffled order) so that each batch removes the oldest
    contiguous cluster region and inserts the next one."""
    if spec.kmeans_k < 1:
        raise ValueError("kmeans_k must be >= 1")
    ids = _check_size(dataset, spec)
    rng = np.random.default_rng(spec.seed)
    perm = ids[rng.permutation(len(ids))]
    queries = perm[: spec.query_per_batch]
    rest = perm[spec.query_per_batch:]
    if spec.kmeans_k == 1:
        seq = rest
    else:
        labels, _ = kmeans(dataset.vectors(ids), spec.kmeans_k, seed=rng)
        label_of = dict(zip(ids.tolist(), labels.tolist()))
        rest_labels = np.array([label_of[i] for i in rest.tolist()])
        order = rng.permutation(spec.kmeans_k)
        seq = np.concatenate([rest[rest_labels == c] for c in order])
    B, n_ins = spec.num_batches, spec.insert_per_batch
    base = seq[: spec.base_size]
    slices = [seq[spec.base_size + i * n_ins: spec.base_size + (i + 1) * n_ins]
              for i in range(B)]
    live = deque(base.tolist())
    pending = iter(slices)

    def pick():
        if spec.delete_per_batch > len(live):
            raise InsufficientData("delete set larger than the live set")
        dels = [live.popleft() for _ in range(spec.delete_per_batch)]
        live.extend(next(pending).tolist())
        return np.asarray(dels, dtype=np.int64)

    return _assemble(dataset, spec, base, slices, queries, pick)


def build_workload(dataset: VectorStore, spec: WorkloadSpec) -> Workload:
    if spec.pattern is Pattern.RANDOM:
        return build_random_workload(dataset, spec)
    return build_clustered_workload(dataset, spec)


# --------------------------------------------------------------------------
# log format

def write_workload(path, workload: Workload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for b in workload.batches:
            fh.write(f"B {b.index}\n")
            if b.query_repeat != 1:
                fh.write(f"R {b.query_repeat}\n")
            for i in b.delete_ids.tolist():
                fh.write(f"D {i}\n")
            for tag, ids, vecs in (("I", b.insert_ids, b.insert_vectors),
                                   ("Q", b.query_ids, b.query_vectors)):
                for j, i in enumerate(ids.tolist()):
                    fh.write(f"{tag} {i} " + " ".join(format_float(v) for v in vecs[j]) + "\n")


_ORDER = {"D": 0, "I": 1, "Q": 2}


def read_workload(path) -> Workload:
    """Parse a workload log, validating batch order and delete references."""
    batches: List[Batch] = []
    cur = None
    seen_ids = set()
    dim = None

    def finish():
        if cur is None:
            return
        ins_v = np.asarray(cur["iv"], dtype=np.float32).reshape(len(cur["ii"]), -1) \
            if cur["ii"] else None
        q_v = np.asarray(cur["qv"], dtype=np.float32).reshape(len(cur["qi"]), -1) \
            if cur["qi"] else None
        batches.append(Batch(cur["b"], np.asarray(cur["d"], dtype=np.int64),
                             np.asarray(cur["ii"], dtype=np.int64), ins_v,
                             np.asarray(cur["qi"], dtype=np.int64), q_v, cur["r"]))

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            tag = parts[0]
            try:
                if tag == "B":
                    b = int(parts[1])
                    if len(parts) != 2 or (cur is not None and b <= cur["b"]) or b < 0:
                        raise MalformedLog(f"line {lineno}: non-monotone batch marker")
                    finish()
                    cur = dict(b=b, d=[], ii=[], iv=[], qi=[], qv=[], r=1, stage=0)
                    continue
                if cur is None:
                    raise MalformedLog(f"line {lineno}: operation before first batch marker")
                if tag == "R":
                    cur["r"] = int(parts[1])
                    if cur["r"] < 1:
                        raise MalformedLog(f"line {lineno}: repeat must be >= 1")
                    continue
                if tag not in _ORDER:
                    raise MalformedLog(f"line {lineno}: unknown tag {tag!r}")
                if _ORDER[tag] < cur["stage"]:
                    raise MalformedLog(f"line {lineno}: {tag} after a later-stage op")
                cur["stage"] = _ORDER[tag]
                ident = int(parts[1])
                if tag == "D":
                    if len(parts) != 2:
                        raise MalformedLog(f"line {lineno}: D takes one id")
                    if ident not in seen_ids:
                        raise DanglingDeleteReference(
                            f"line {lineno}: delete of never-inserted id {ident}")
                    cur["d"].append(ident)
                    continue
                vec = [float(t) for t in parts[2:]]
                if not vec or (dim is not None and len(vec) != dim):
                    raise MalformedLog(f"line {lineno}: bad vector length {len(vec)}")
                dim = len(vec)
                if tag == "I":
                    seen_ids.add(ident)
                    cur["ii"].append(ident)
                    cur["iv"].extend(vec)
                else:
                    cur["qi"].append(ident)
                    cur["qv"].extend(vec)
            except (IndexError, ValueError) as exc:
                if isinstance(exc, MalformedLog):
                    raise
                raise MalformedLog(f"line {lineno}: {exc}") from None
    finish()
    return Workload(batches)
