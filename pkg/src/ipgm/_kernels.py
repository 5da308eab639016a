"""Compiled inner loops: beam search, diversity selection, reachability.

Scores are f(x, q): negative Euclidean distance (metric 0) or dot product
of pre-normalised vectors (metric 1). Accumulation is float64 regardless of
the float32 storage.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True, inline="always")
def _score_vec(data, i, q, metric):
    s = 0.0
    if metric == 0:
        for t in range(q.shape[0]):
            diff = np.float64(data[i, t]) - q[t]
            s += diff * diff
        return -np.sqrt(s)
    for t in range(q.shape[0]):
        s += np.float64(data[i, t]) * q[t]
    return s


@njit(cache=True, nogil=True, inline="always")
def _score_rows(data, i, j, metric):
    s = 0.0
    if metric == 0:
        for t in range(data.shape[1]):
            diff = np.float64(data[i, t]) - np.float64(data[j, t])
            s += diff * diff
        return -np.sqrt(s)
    for t in range(data.shape[1]):
        s += np.float64(data[i, t]) * np.float64(data[j, t])
    return s


@njit(cache=True, nogil=True)
def score_ids(data, ids, q, metric):
    s = np.empty(ids.shape[0], np.float64)
    for i in range(ids.shape[0]):
        s[i] = _score_vec(data, ids[i], q, metric)
    return s


@njit(cache=True, nogil=True)
def score_matrix(data, ids, Q, metric):
    """(len(Q), len(ids)) similarities, same arithmetic as the search."""
    out = np.empty((Q.shape[0], ids.shape[0]), np.float64)
    for r in range(Q.shape[0]):
        for i in range(ids.shape[0]):
            out[r, i] = _score_vec(data, ids[i], Q[r], metric)
    return out


@njit(cache=True, nogil=True, inline="always")
def _better(s1, i1, s2, i2):
    return s1 > s2 or (s1 == s2 and i1 < i2)


@njit(cache=True, nogil=True)
def _heap_push(hs, hi, n, s, v):
    j = n
    while j > 0:
        p = (j - 1) >> 1
        if not _better(s, v, hs[p], hi[p]):
            break
        hs[j] = hs[p]
        hi[j] = hi[p]
        j = p
    hs[j] = s
    hi[j] = v
    return n + 1


@njit(cache=True, nogil=True)
def _heap_pop(hs, hi, n):
    n -= 1
    s, v = hs[n], hi[n]
    j = 0
    while True:
        c = 2 * j + 1
        if c >= n:
            break
        if c + 1 < n and _better(hs[c + 1], hi[c + 1], hs[c], hi[c]):
            c += 1
        if not _better(hs[c], hi[c], s, v):
            break
        hs[j] = hs[c]
        hi[j] = hi[c]
        j = c
    if n > 0:
        hs[j] = s
        hi[j] = v
    return n


@njit(cache=True, nogil=True)
def beam_search(data, out, deg, present, hidden, q, k, start, metric,
                traverse_hidden, exclude):
    """Best-first search with a bounded queue of ``k`` result candidates.

    Hidden vertices (and ``exclude``) are skipped entirely unless
    ``traverse_hidden``. In that mode they never take a result slot; they
    wait in a separate frontier, admitted only while they could still beat
    the worst result, and are expanded in score order alongside the queue.
    Returns (ids, scores, distance_computations, hops).
    """
    n = out.shape[0]
    visited = np.zeros(n, np.bool_)
    ids = np.empty(k, np.int64)
    sc = np.empty(k, np.float64)
    expanded = np.zeros(k, np.bool_)
    hs = np.empty(0, np.float64)
    hi = np.empty(0, np.int64)
    if traverse_hidden:
        hs = np.empty(n, np.float64)
        hi = np.empty(n, np.int64)
    nh = 0

    visited[start] = True
    s0 = _score_vec(data, start, q, metric)
    size = 0
    if hidden[start] or start == exclude:
        nh = _heap_push(hs, hi, nh, s0, start)
    else:
        ids[0] = start
        sc[0] = s0
        size = 1
    ndist = 1
    hops = 0
    while True:
        i = 0
        while i < size and expanded[i]:
            i += 1
        if nh > 0 and size == k and not _better(hs[0], hi[0], sc[k - 1], ids[k - 1]):
            nh = 0      # no waiting hidden vertex can improve the results
        if nh > 0 and (i == size or _better(hs[0], hi[0], sc[i], ids[i])):
            u = hi[0]
            nh = _heap_pop(hs, hi, nh)
        elif i < size:
            expanded[i] = True
            u = ids[i]
        else:
            break
        hops += 1
        for e in range(deg[u]):
            v = out[u, e]
            if visited[v] or not present[v]:
                continue
            masked = hidden[v] or v == exclude
            if masked and not traverse_hidden:
                continue
            visited[v] = True
            s = _score_vec(data, v, q, metric)
            ndist += 1
            if size == k and not _better(s, v, sc[k - 1], ids[k - 1]):
                continue
            if masked:
                nh = _heap_push(hs, hi, nh, s, v)
                continue
            if size == k:
                pos = k - 1
            else:
                pos = size
                size += 1
            while pos > 0 and _better(s, v, sc[pos - 1], ids[pos - 1]):
                ids[pos] = ids[pos - 1]
                sc[pos] = sc[pos - 1]
                expanded[pos] = expanded[pos - 1]
                pos -= 1
            ids[pos] = v
            sc[pos] = s
            expanded[pos] = False
    return ids[:size].copy(), sc[:size].copy(), ndist, hops


@njit(cache=True, nogil=True)
def beam_search_many(data, out, deg, present, hidden, Q, starts, k, metric,
                     traverse_hidden):
    m = Q.shape[0]
    res_ids = np.full((m, k), -1, np.int64)
    res_sc = np.full((m, k), -np.inf, np.float64)
    ndist = np.zeros(m, np.int64)
    hops = np.zeros(m, np.int64)
    for r in range(m):
        ids, sc, nd, hp = beam_search(data, out, deg, present, hidden, Q[r],
                                      k, starts[r], metric, traverse_hidden, -1)
        res_ids[r, : ids.shape[0]] = ids
        res_sc[r, : ids.shape[0]] = sc
        ndist[r] = nd
        hops[r] = hp
    return res_ids, res_sc, ndist, hops


@njit(cache=True, nogil=True)
def select_neighbors(data, x, cand, d, invalid, metric):
    """Diversity selection over candidate ids for target vector ``x``.

    Candidates are scanned by descending f(x, y) (ties: ascending id); y is
    kept iff it is not invalid and f(x, y) >= f(z, y) for every kept z.
    """
    m = cand.shape[0]
    acc = np.empty(d, np.int64)
    if m == 0 or d == 0:
        return acc[:0]
    by_id = np.sort(cand)
    s = np.empty(m, np.float64)
    for i in range(m):
        s[i] = _score_vec(data, by_id[i], x, metric)
    order = np.argsort(-s, kind="mergesort")
    na = 0
    prev = -1
    for t in order:
        if na >= d:
            break
        y = by_id[t]
        if y == prev:
            continue
        prev = y
        bad = False
        for b in range(invalid.shape[0]):
            if invalid[b] == y:
                bad = True
                break
        if bad:
            continue
        ok = True
        for a in range(na):
            if _score_rows(data, acc[a], y, metric) > s[t]:
                ok = False
                break
        if ok:
            acc[na] = y
            na += 1
    return acc[:na].copy()


@njit(cache=True, nogil=True)
def reachable(out, deg, present, start):
    n = out.shape[0]
    seen = np.zeros(n, np.bool_)
    stack = np.empty(n, np.int64)
    seen[start] = True
    stack[0] = start
    top = 1
    while top > 0:
        top -= 1
        u = stack[top]
        for e in range(deg[u]):
            v = out[u, e]
            if present[v] and not seen[v]:
                seen[v] = True
                stack[top] = v
                top += 1
    return seen


# --------------------------------------------------------------------------
# edge primitives over (out, deg) and the reverse lists (inn, indeg)

ADDED, DUPLICATE, OVERFLOW, IN_FULL = 0, 1, 2, 3


@njit(cache=True, nogil=True)
def add_edge(out, deg, inn, indeg, u, v):
    n = deg[u]
    for i in range(n):
        if out[u, i] == v:
            return DUPLICATE
    if n >= out.shape[1]:
        return OVERFLOW
    if indeg[v] >= inn.shape[1]:
        return IN_FULL
    out[u, n] = v
    deg[u] = n + 1
    inn[v, indeg[v]] = u
    indeg[v] += 1
    return ADDED


@njit(cache=True, nogil=True, inline="always")
def _drop(row, n, value):
    i = 0
    while i < n and row[i] != value:
        i += 1
    if i == n:
        return False
    for j in range(i, n - 1):
        row[j] = row[j + 1]
    row[n - 1] = -1
    return True


@njit(cache=True, nogil=True)
def remove_edge(out, deg, inn, indeg, u, v):
    if not _drop(out[u], deg[u], v):
        return False
    deg[u] -= 1
    if _drop(inn[v], indeg[v], u):
        indeg[v] -= 1
    return True


@njit(cache=True, nogil=True)
def clear_out(out, deg, inn, indeg, u):
    while deg[u] > 0:
        remove_edge(out, deg, inn, indeg, u, out[u, deg[u] - 1])


@njit(cache=True, nogil=True)
def isolate(out, deg, inn, indeg, u):
    clear_out(out, deg, inn, indeg, u)
    while indeg[u] > 0:
        w = inn[u, 0]
        if not remove_edge(out, deg, inn, indeg, w, u):
            # reverse record without a forward edge
            _drop(inn[u], indeg[u], w)
            indeg[u] -= 1


# --------------------------------------------------------------------------
# fused maintenance procedures

@njit(cache=True, nogil=True)
def _backlink(data, out, deg, inn, indeg, z, new, metric):
    d = out.shape[1]
    if deg[z] < d:
        add_edge(out, deg, inn, indeg, z, new)
        return
    cand = np.empty(deg[z] + 1, np.int64)
    cand[: deg[z]] = out[z, : deg[z]]
    cand[deg[z]] = new
    zv = data[z].astype(np.float64)
    own = np.empty(1, np.int64)
    own[0] = z
    keep = select_neighbors(data, zv, cand, d, own, metric)
    has_new = False
    for i in range(cand.shape[0]):
        kept = False
        for j in range(keep.shape[0]):
            if keep[j] == cand[i]:
                kept = True
                break
        if cand[i] == new:
            has_new = kept
        elif not kept:
            remove_edge(out, deg, inn, indeg, z, cand[i])
    if has_new:
        add_edge(out, deg, inn, indeg, z, new)


@njit(cache=True, nogil=True)
def link(data, out, deg, inn, indeg, present, hidden, vid, start, k, metric,
         traverse_hidden, bidirectional):
    """Search from ``start`` for the stored vector ``vid``, select its
    out-neighbors and wire them (plus back-links when requested).
    Returns (candidate ids, chosen ids, distance computations)."""
    q = data[vid].astype(np.float64)
    cand, _, nd, _ = beam_search(data, out, deg, present, hidden, q, k, start,
                                 metric, traverse_hidden, -1)
    chosen = select_neighbors(data, q, cand, out.shape[1], np.empty(0, np.int64), metric)
    for z in chosen:
        add_edge(out, deg, inn, indeg, vid, z)
    if bidirectional:
        for z in chosen:
            _backlink(data, out, deg, inn, indeg, z, vid, metric)
    return cand, chosen, nd


@njit(cache=True, nogil=True)
def local_reconnect(data, out, deg, inn, indeg, x, metric):
    targets = out[x, : deg[x]].copy()
    sources = inn[x, : indeg[x]].copy()
    for xj in sources:
        n = deg[xj]
        invalid = np.empty(n + 2, np.int64)
        invalid[:n] = out[xj, :n]
        invalid[n] = xj
        invalid[n + 1] = x
        z = select_neighbors(data, data[xj].astype(np.float64), targets, 1,
                             invalid, metric)
        remove_edge(out, deg, inn, indeg, xj, x)
        if z.shape[0] > 0 and deg[xj] < out.shape[1]:
            add_edge(out, deg, inn, indeg, xj, z[0])
    isolate(out, deg, inn, indeg, x)


@njit(cache=True, nogil=True)
def global_reconnect(data, out, deg, inn, indeg, present, hidden, x, starts, k, metric):
    """``starts[i]`` seeds the search for the i-th in-neighbor of ``x``.
    Returns total distance computations."""
    sources = inn[x, : indeg[x]].copy()
    invalid = np.empty(2, np.int64)
    total = 0
    for i in range(sources.shape[0]):
        xj = sources[i]
        q = data[xj].astype(np.float64)
        cand, _, nd, _ = beam_search(data, out, deg, present, hidden, q, k,
                                     starts[i], metric, True, x)
        total += nd
        invalid[0] = x
        invalid[1] = xj
        chosen = select_neighbors(data, q, cand, out.shape[1], invalid, metric)
        clear_out(out, deg, inn, indeg, xj)
        for z in chosen:
            add_edge(out, deg, inn, indeg, xj, z)
    isolate(out, deg, inn, indeg, x)
    return total


@njit(cache=True, nogil=True)
def _count_in_row(row, n, x):
    c = 0
    for j in range(n):
        if row[j] == x:
            c += 1
    return c


@njit(cache=True, nogil=True)
def graph_is_clean(out, deg, inn, indeg, present, tomb, limit):
    """Cheap yes/no version of the invariant check: True only if every
    edge is recorded exactly once in both directions between present,
    distinct vertices, degrees are in bounds and absent vertices are bare."""
    n = present.shape[0]
    for u in range(n):
        if not present[u]:
            if deg[u] != 0 or indeg[u] != 0 or tomb[u]:
                return False
            continue
        if deg[u] > limit:
            return False
        for e in range(deg[u]):
            v = out[u, e]
            if v < 0 or v >= n or v == u or not present[v]:
                return False
            if _count_in_row(out[u], deg[u], v) != 1:
                return False
            if _count_in_row(inn[v], indeg[v], u) != 1:
                return False
        for e in range(indeg[u]):
            w = inn[u, e]
            if w < 0 or w >= n or w == u or not present[w]:
                return False
            if _count_in_row(inn[u], indeg[u], w) != 1:
                return False
            if _count_in_row(out[w], deg[w], u) != 1:
                return False
    return True
