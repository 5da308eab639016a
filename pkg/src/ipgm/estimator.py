"""scikit-learn style facade over the online index."""
from __future__ import annotations

from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .maintenance import BatchOutcome, MaintenanceConfig, OnlineIndex, query_rng
from .search import search_batch, sample_starts
from .store import Metric
from .workload import Workload


class ProximityGraphIndex(BaseEstimator):
    """Approximate nearest neighbor index that stays usable under inserts
    and deletes.

    ``fit`` builds the graph from scratch; ``partial_fit`` / ``insert`` add
    vectors and ``delete`` removes them with the configured strategy. Ids
    are assigned in insertion order starting at 0 and never reused.
    """

    def __init__(self, k=64, d=16, metric="l2", strategy="global", n_neighbors=10,
                 seed=0, bidirectional=True):
        self.k = k
        self.d = d
        self.metric = metric
        self.strategy = strategy
        self.n_neighbors = n_neighbors
        self.seed = seed
        self.bidirectional = bidirectional

    def _config(self) -> MaintenanceConfig:
        return MaintenanceConfig(k=self.k, d=self.d, metric=self.metric,
                                 strategy=self.strategy, seed=self.seed,
                                 bidirectional=self.bidirectional)

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float32)
        if X.ndim != 2:
            raise ValueError("X must be 2-D")
        self.index_ = OnlineIndex(X.shape[1], self._config())
        self.n_features_in_ = X.shape[1]
        self._n_queries = 0
        self.insert(X)
        return self

    def partial_fit(self, X, y=None):
        if not hasattr(self, "index_"):
            return self.fit(X)
        self.insert(X)
        return self

    def insert(self, X) -> np.ndarray:
        """Add rows of ``X``; returns their ids."""
        check_is_fitted(self, "index_")
        X = np.atleast_2d(np.asarray(X, dtype=np.float32))
        idx = self.index_
        ids = []
        for x in X:
            wid = idx.store.next_id
            ids.append(idx.insert(wid, x))
        if idx.strategy.value == "rebuild" and len(idx.store):
            idx.rebuild()
        return np.asarray(ids, dtype=np.int64)

    def delete(self, ids) -> int:
        """Delete by id; returns how many were live."""
        check_is_fitted(self, "index_")
        idx = self.index_
        n = sum(idx.delete(int(i)) for i in np.atleast_1d(ids))
        if n and idx.strategy.value == "rebuild" and len(idx.store):
            idx.rebuild()
        return n

    @property
    def n_live_(self) -> int:
        check_is_fitted(self, "index_")
        return len(self.index_.id_map)

    def kneighbors(self, X, n_neighbors: Optional[int] = None, return_distance=True):
        """Approximate neighbors of each row of ``X``, nearest first.

        Distances are Euclidean for ``l2`` and ``1 - cosine`` for cosine.
        Rows are padded with id -1 (distance inf) if fewer are found.
        """
        check_is_fitted(self, "index_")
        K = n_neighbors or self.n_neighbors
        idx = self.index_
        Q = idx.prepare_queries(np.atleast_2d(X))
        rng = query_rng(self.seed, 1_000_000 + self._n_queries)
        self._n_queries += 1
        starts = sample_starts(idx.graph, rng, len(Q))
        res = search_batch(idx.graph, idx.store, Q, max(self.k, K), starts,
                           mask_aware=idx.strategy.value == "mask")
        ids = res.ids[:, :K]
        if not return_distance:
            return ids
        sc = res.scores[:, :K]
        if Metric.parse(self.metric) is Metric.COSINE:
            dist = 1.0 - sc
        else:
            dist = -sc
        dist = np.where(ids >= 0, dist, np.inf)
        return dist, ids

    def transform(self, X):
        """Neighbor id matrix, shape (n_samples, n_neighbors)."""
        return self.kneighbors(X, return_distance=False)

    def apply_workload(self, W: Workload, query_k: Optional[int] = None) -> List[BatchOutcome]:
        """Replay a workload against a fresh index (ids are the workload's)."""
        self.index_ = OnlineIndex(W.dimension, self._config())
        self.n_features_in_ = W.dimension
        self._n_queries = 0
        return [self.index_.apply_batch(b, query_k) for b in W.batches]
