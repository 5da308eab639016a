"""Vector storage, similarity functions and dataset file formats."""
from __future__ import annotations

import enum
import os
from typing import Iterable, Optional, Union

import numpy as np

from . import _kernels
from .exceptions import (
    DimensionMismatch,
    EmptyFile,
    InvalidVector,
    MalformedFile,
    UnknownVertex,
    ZeroNormVector,
)


class Metric(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"

    @classmethod
    def parse(cls, value: Union[str, "Metric"]) -> "Metric":
        if isinstance(value, Metric):
            return value
        v = str(value).lower()
        if v in ("l2", "euclidean", "euclid"):
            return cls.EUCLIDEAN
        if v in ("cosine", "cos", "angular"):
            return cls.COSINE
        raise ValueError(f"unknown metric {value!r}")

    @property
    def code(self) -> int:
        # integer tag understood by the compiled kernels
        return 0 if self is Metric.EUCLIDEAN else 1


class VectorStore:
    """Growable float32 matrix of vectors keyed by monotonically assigned ids.

    Ids are row indices and are never reused: removing an entry only clears
    its presence flag. With the cosine metric vectors are normalised once on
    the way in, so similarity reduces to a dot product.
    """

    def __init__(self, dimension: int, metric: Union[str, Metric] = Metric.EUCLIDEAN,
                 capacity: int = 0):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self._dim = int(dimension)
        self._metric = Metric.parse(metric)
        capacity = max(int(capacity), 16)
        self._data = np.zeros((capacity, self._dim), dtype=np.float32)
        self._present = np.zeros(capacity, dtype=bool)
        self._size = 0
        self._count = 0

    @property
    def dimension(self) -> int:
        return self._dim

    @property
    def metric(self) -> Metric:
        return self._metric

    @property
    def next_id(self) -> int:
        return self._size

    @property
    def data(self) -> np.ndarray:
        """Backing matrix; rows of removed ids are stale but kept."""
        return self._data

    def __len__(self) -> int:
        return self._count

    def __contains__(self, vid) -> bool:
        vid = int(vid)
        return 0 <= vid < self._size and bool(self._present[vid])

    def __getitem__(self, vid) -> np.ndarray:
        vid = int(vid)
        if vid not in self:
            raise UnknownVertex(vid)
        row = self._data[vid].view()
        row.flags.writeable = False
        return row

    def ids(self) -> np.ndarray:
        return np.flatnonzero(self._present[: self._size]).astype(np.int64)

    def _reserve(self, extra: int) -> None:
        need = self._size + extra
        if need <= len(self._data):
            return
        cap = max(need, 2 * len(self._data))
        data = np.zeros((cap, self._dim), dtype=np.float32)
        data[: self._size] = self._data[: self._size]
        present = np.zeros(cap, dtype=bool)
        present[: self._size] = self._present[: self._size]
        self._data, self._present = data, present

    def prepare(self, X) -> np.ndarray:
        """Validate (and for cosine, normalise) a batch of vectors."""
        X = np.asarray(X, dtype=np.float32)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self._dim:
            raise DimensionMismatch(
                f"expected dimension {self._dim}, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InvalidVector("vectors must be finite")
        if self._metric is Metric.COSINE:
            norms = np.linalg.norm(X.astype(np.float64), axis=1)
            if np.any(norms == 0):
                raise ZeroNormVector("cosine metric cannot store an all-zero vector")
            X = (X / norms[:, None]).astype(np.float32)
        return X

    def add(self, vector) -> int:
        return int(self.add_many(vector)[0])

    def add_many(self, X) -> np.ndarray:
        X = self.prepare(X)
        n = len(X)
        self._reserve(n)
        start = self._size
        self._data[start:start + n] = X
        self._present[start:start + n] = True
        self._size += n
        self._count += n
        return np.arange(start, start + n, dtype=np.int64)

    def remove(self, vid) -> None:
        vid = int(vid)
        if vid not in self:
            raise UnknownVertex(vid)
        self._present[vid] = False
        self._count -= 1

    def vectors(self, ids=None) -> np.ndarray:
        if ids is None:
            ids = self.ids()
        return self._data[np.asarray(ids, dtype=np.int64)]

    def _resolve(self, v) -> np.ndarray:
        # queries go through the same ingestion as stored vectors, so a query
        # equal to a stored vector scores exactly like it
        if isinstance(v, (int, np.integer)):
            return self[v].astype(np.float64)
        arr = np.asarray(v)
        if arr.shape != (self._dim,):
            raise DimensionMismatch(f"expected dimension {self._dim}, got {arr.shape}")
        return self.prepare(arr)[0].astype(np.float64)

    def scores(self, q, ids) -> np.ndarray:
        """Similarity f(x, q) for each stored id, in float64."""
        return _kernels.score_ids(self._data, np.asarray(ids, dtype=np.int64),
                                  self._resolve(q), self._metric.code)


def similarity(store: VectorStore, a, b) -> float:
    """f(a, b): negative Euclidean distance, or cosine similarity.

    ``a`` and ``b`` may be stored ids or raw vectors.
    """
    x = store._resolve(a)
    y = store._resolve(b)
    return float(_kernels.score_ids(x[None, :], np.zeros(1, np.int64), y,
                                    store.metric.code)[0])


def brute_force_topk(store: VectorStore, q, K: int,
                     live: Optional[Iterable[int]] = None) -> list:
    """Exact top-K live ids by similarity to ``q``, ties by ascending id."""
    if K < 1:
        raise ValueError("K must be >= 1")
    ids = store.ids() if live is None else np.fromiter(
        (int(i) for i in live), dtype=np.int64)
    for i in ids:
        if i not in store:
            raise UnknownVertex(int(i))
    if len(ids) == 0:
        return []
    s = store.scores(q, ids)
    order = np.lexsort((ids, -s))[:K]
    return [(int(ids[i]), float(s[i])) for i in order]


# --------------------------------------------------------------------------
# fvecs / ivecs / plain text

def _read_vecs(path, dtype) -> np.ndarray:
    raw = np.fromfile(path, dtype="<i4")
    if raw.size == 0:
        raise EmptyFile(str(path))
    d = int(raw[0])
    if d <= 0:
        raise MalformedFile(f"{path}: record dimension {d}")
    if raw.size % (d + 1):
        raise MalformedFile(f"{path}: truncated record")
    rec = raw.reshape(-1, d + 1)
    if np.any(rec[:, 0] != d):
        raise MalformedFile(f"{path}: inconsistent record dimensions")
    return rec[:, 1:].copy().view(dtype)


def read_fvecs(path) -> np.ndarray:
    if os.path.getsize(path) % 4:
        raise MalformedFile(f"{path}: size is not a multiple of 4")
    return _read_vecs(path, "<f4").astype(np.float32, copy=False)


def read_ivecs(path) -> np.ndarray:
    if os.path.getsize(path) % 4:
        raise MalformedFile(f"{path}: size is not a multiple of 4")
    return _read_vecs(path, "<i4").astype(np.int32, copy=False)


def _write_vecs(path, X, dtype) -> None:
    X = np.ascontiguousarray(X, dtype=dtype)
    if X.ndim != 2:
        raise ValueError("expected a 2-D array")
    n, d = X.shape
    out = np.empty((n, d + 1), dtype="<i4")
    out[:, 0] = d
    out[:, 1:] = X.view("<i4")
    out.tofile(path)


def write_fvecs(path, X) -> None:
    if isinstance(X, VectorStore):
        X = X.vectors()
    _write_vecs(path, X, "<f4")


def write_ivecs(path, X) -> None:
    _write_vecs(path, X, "<i4")


def load_fvecs(path, metric: Union[str, Metric] = Metric.EUCLIDEAN) -> VectorStore:
    """Load an fvecs file into a store; ids are 0..n-1 in file order."""
    X = read_fvecs(path)
    store = VectorStore(X.shape[1], metric, capacity=len(X))
    store.add_many(X)
    return store


def read_text_vectors(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append([float(t) for t in line.split()])
    if not rows:
        raise EmptyFile(str(path))
    if len({len(r) for r in rows}) != 1:
        raise MalformedFile(f"{path}: rows of different lengths")
    return np.asarray(rows, dtype=np.float32)


def write_text_vectors(path, X) -> None:
    X = np.asarray(X, dtype=np.float32)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in X:
            fh.write(" ".join(format_float(v) for v in row) + "\n")


def format_float(v) -> str:
    """Shortest decimal that round-trips a float32."""
    v = np.float32(v)
    a = abs(float(v))
    if a != 0 and (a < 1e-4 or a >= 1e16):
        return np.format_float_scientific(v, unique=True, trim="-")
    return np.format_float_positional(v, unique=True, trim="-")


def load_dataset(path, metric: Union[str, Metric] = Metric.EUCLIDEAN) -> VectorStore:
    """Load fvecs, or whitespace-separated text for any other suffix."""
    p = str(path)
    if p.endswith(".fvecs"):
        return load_fvecs(p, metric)
    X = read_text_vectors(p)
    store = VectorStore(X.shape[1], metric, capacity=len(X))
    store.add_many(X)
    return store
