import numpy as np
import pytest

from ipgm.exceptions import (
    DanglingDeleteReference,
    EmptyCluster,
    InsufficientData,
    MalformedLog,
)
from ipgm.workload import (
    PRESETS,
    Batch,
    OpKind,
    Workload,
    WorkloadSpec,
    build_clustered_workload,
    build_random_workload,
    build_workload,
    kmeans,
    read_workload,
    write_workload,
)

from conftest import make_store

SMALL = dict(base_size=100, delete_per_batch=20, insert_per_batch=20,
             query_per_batch=15, num_batches=4)


@pytest.fixture
def data(rng):
    spec = WorkloadSpec(**SMALL)
    return make_store(rng.normal(size=(spec.required_vectors + 10, 3)))


def live_after(W, b):
    live = set()
    for batch in W.batches[: b + 1]:
        live.difference_update(batch.delete_ids.tolist())
        live.update(batch.insert_ids.tolist())
    return live


def test_presets():
    assert PRESETS["nytimes"].base_size == 180_000
    assert PRESETS["sift"].base_size == 900_000
    s = PRESETS["sift"]
    per_batch = s.delete_per_batch + s.insert_per_batch + s.query_per_batch
    assert s.num_batches * per_batch == 300_000
    d = PRESETS["desk"]
    assert (d.base_size, d.delete_per_batch, d.insert_per_batch, d.query_per_batch,
            d.num_batches, d.kmeans_k) == (5000, 500, 500, 500, 10, 10)


@pytest.mark.parametrize("pattern", ["random", "clustered"])
def test_live_set_is_conserved(pattern, data):
    W = build_workload(data, WorkloadSpec(**SMALL, pattern=pattern))
    assert len(W.batches) == 5
    for b in range(5):
        assert len(live_after(W, b)) == 100
    assert len(W.batches[0].delete_ids) == 0
    # each op count: base inserts + per-batch ops
    assert len(W) == 100 + 15 + 4 * (20 + 20 + 15)


@pytest.mark.parametrize("pattern", ["random", "clustered"])
def test_deletes_hit_live_ids_and_queries_held_out(pattern, data):
    W = build_workload(data, WorkloadSpec(**SMALL, pattern=pattern))
    inserted = set()
    for b, batch in enumerate(W.batches):
        live = live_after(W, b - 1) if b else set()
        assert set(batch.delete_ids.tolist()) <= live
        inserted.update(batch.insert_ids.tolist())
    assert not inserted & set(W.batches[0].query_ids.tolist())
    for batch in W.batches:
        assert np.array_equal(batch.query_ids, W.batches[0].query_ids)


@pytest.mark.parametrize("pattern", ["random", "clustered"])
def test_same_seed_same_bytes(pattern, data, tmp_path):
    spec = WorkloadSpec(**SMALL, pattern=pattern, seed=9)
    write_workload(tmp_path / "a", build_workload(data, spec))
    write_workload(tmp_path / "b", build_workload(data, spec))
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_clustered_deletes_follow_blobs(rng):
    A = rng.normal(size=(150, 2)) * 0.1
    B = rng.normal(size=(150, 2)) * 0.1 + 50
    data = make_store(np.vstack([A, B]))
    spec = WorkloadSpec(base_size=100, delete_per_batch=25, insert_per_batch=25,
                        query_per_batch=20, num_batches=4, kmeans_k=2, seed=3)
    W = build_clustered_workload(data, spec)
    blob = lambda i: int(i >= 150)
    first = blob(W.batches[0].insert_ids[0])
    # the base set and the first deletions come from one blob only
    assert {blob(i) for i in W.batches[0].insert_ids.tolist()} == {first}
    for batch in W.batches[1:]:
        assert {blob(i) for i in batch.delete_ids.tolist()} == {first}


def test_kmeans_k1_is_plain_permutation(data):
    spec = WorkloadSpec(**SMALL, pattern="clustered", kmeans_k=1, seed=5)
    W = build_clustered_workload(data, spec)
    perm = data.ids()[np.random.default_rng(5).permutation(len(data))]
    seq = perm[spec.query_per_batch:]
    assert np.array_equal(W.batches[0].insert_ids, seq[:100])
    assert np.array_equal(W.batches[1].insert_ids, seq[100:120])
    assert np.array_equal(W.batches[1].delete_ids, seq[:20])


def test_random_deletes_uniform_from_live(data):
    W = build_random_workload(data, WorkloadSpec(**SMALL, pattern="random", seed=2))
    dels = np.concatenate([b.delete_ids for b in W.batches[1:]])
    assert len(set(dels.tolist())) == len(dels)


def test_insufficient_data(rng):
    with pytest.raises(InsufficientData):
        build_workload(make_store(rng.normal(size=(50, 2))), WorkloadSpec(**SMALL))


def test_kmeans(rng):
    X = np.vstack([rng.normal(size=(40, 2)), rng.normal(size=(40, 2)) + 20])
    labels, C = kmeans(X, 2, seed=0)
    assert len(set(labels[:40])) == 1 and len(set(labels[40:])) == 1
    assert labels[0] != labels[-1]
    with pytest.raises(EmptyCluster):
        kmeans(X[:3], 4)


def test_spec_validation():
    with pytest.raises(ValueError):
        WorkloadSpec(query_repeat=0)
    with pytest.raises(ValueError):
        WorkloadSpec(pattern="sorted")


# ---------------------------------------------------------------- log format

def test_log_roundtrip(data, tmp_path):
    W = build_workload(data, WorkloadSpec(**SMALL, query_repeat=3))
    write_workload(tmp_path / "w.log", W)
    back = read_workload(tmp_path / "w.log")
    assert back == W
    assert back.batches[2].query_repeat == 3
    ops = list(back)
    assert ops[0].op is OpKind.INSERT
    assert sum(o.op is OpKind.QUERY for o in ops) == 5 * 15 * 3


def test_empty_log(tmp_path):
    (tmp_path / "e.log").write_text("")
    W = read_workload(tmp_path / "e.log")
    assert W == Workload() and len(W) == 0


@pytest.mark.parametrize("text, exc", [
    ("B 0\nI 1 0 0\nB 1\nD 2\n", DanglingDeleteReference),
    ("I 1 0 0\n", MalformedLog),
    ("B 1\nB 0\n", MalformedLog),
    ("B 0\nQ 1 0 0\nI 2 0 0\n", MalformedLog),
    ("B 0\nI 1 0 0\nI 2 0\n", MalformedLog),
    ("B 0\nX 1\n", MalformedLog),
    ("B 0\nI one 0 0\n", MalformedLog),
    ("B 0\nR 0\n", MalformedLog),
])
def test_malformed_logs(tmp_path, text, exc):
    (tmp_path / "bad.log").write_text(text)
    with pytest.raises(exc):
        read_workload(tmp_path / "bad.log")


def test_batch_ops_order():
    b = Batch(1, delete_ids=np.array([4]), insert_ids=np.array([7]),
              insert_vectors=np.ones((1, 2), np.float32), query_ids=np.array([9]),
              query_vectors=np.zeros((1, 2), np.float32), query_repeat=2)
    assert [o.op.value for o in b.ops()] == ["D", "I", "Q", "Q"]
    assert b.op_counts() == (1, 1, 2)
