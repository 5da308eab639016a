import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ipgm import ProximityGraphIndex
from ipgm.workload import Batch, Workload


@pytest.fixture
def X(rng):
    return rng.normal(size=(400, 6)).astype(np.float32)


def exact(X, live, q, K):
    live = np.asarray(sorted(live))
    d = np.linalg.norm(X[live].astype(np.float64) - q, axis=1)
    return live[np.lexsort((live, d))][:K]


def test_params_and_clone():
    est = ProximityGraphIndex(k=32, d=8, strategy="local")
    assert est.get_params()["k"] == 32
    c = clone(est)
    assert c.get_params() == est.get_params() and not hasattr(c, "index_")
    est.set_params(n_neighbors=3)
    assert est.n_neighbors == 3


def test_not_fitted():
    with pytest.raises(NotFittedError):
        ProximityGraphIndex().kneighbors([[0.0]])


def test_kneighbors_high_recall(X, rng):
    est = ProximityGraphIndex(k=64, d=12, n_neighbors=5).fit(X)
    Q = rng.normal(size=(20, 6))
    dist, ids = est.kneighbors(Q)
    assert ids.shape == (20, 5) and np.all(np.diff(dist, axis=1) >= 0)
    hits = sum(len(set(ids[i]) & set(exact(X, range(400), Q[i], 5))) for i in range(20))
    assert hits / 100 >= 0.9
    np.testing.assert_allclose(dist[0, 0], np.linalg.norm(X[ids[0, 0]] - Q[0].astype(np.float32)),
                               rtol=1e-5)


@pytest.mark.parametrize("strategy", ["pure", "mask", "local", "global", "rebuild"])
def test_deleted_ids_never_returned(strategy, X):
    est = ProximityGraphIndex(k=32, d=8, strategy=strategy, n_neighbors=10).fit(X[:300])
    gone = np.arange(0, 300, 3)
    assert est.delete(gone) == 100
    assert est.delete(gone[:5]) == 0
    assert est.n_live_ == 200
    new = est.insert(X[300:])
    assert new.tolist() == list(range(300, 400))
    ids = est.transform(X[:50])
    assert not np.isin(ids, gone).any()


def test_cosine_distances(rng):
    X = rng.normal(size=(100, 4))
    est = ProximityGraphIndex(k=32, d=8, metric="cosine", n_neighbors=1).fit(X)
    dist, ids = est.kneighbors(X[:5] * 3.0)
    assert ids[:, 0].tolist() == list(range(5))
    np.testing.assert_allclose(dist[:, 0], 0.0, atol=1e-6)


def test_padding_when_few_vectors():
    est = ProximityGraphIndex(k=8, d=4, n_neighbors=5).fit([[0, 0], [1, 1]])
    dist, ids = est.kneighbors([[0, 0]])
    assert ids[0].tolist() == [0, 1, -1, -1, -1]
    assert np.isinf(dist[0, 2:]).all()


def test_partial_fit(X):
    est = ProximityGraphIndex(k=16, d=6)
    est.partial_fit(X[:100]).partial_fit(X[100:150])
    assert est.n_live_ == 150
    assert est.index_.graph.check_invariants() == []


def test_apply_workload(X):
    W = Workload([
        Batch(0, insert_ids=np.arange(200), insert_vectors=X[:200],
              query_ids=np.arange(3), query_vectors=X[390:393]),
        Batch(1, delete_ids=np.arange(50), insert_ids=np.arange(200, 250),
              insert_vectors=X[200:250], query_ids=np.arange(3), query_vectors=X[390:393]),
    ])
    outs = ProximityGraphIndex(k=16, d=6).apply_workload(W)
    assert len(outs) == 2 and outs[1].live_vertices == 200
