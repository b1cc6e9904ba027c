"""Dinic max-flow on a CSR residual graph, compiled with numba.

Node ``n`` is the source and ``n + 1`` the sink.  Every undirected pair
edge is stored as two mutually reverse arcs that both start with the edge
capacity; terminal arcs get a zero-capacity reverse arc.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _build_csr(n_nodes, tail, head, cap, rcap):
    m = tail.size
    deg = np.zeros(n_nodes + 1, np.int64)
    for e in range(m):
        deg[tail[e] + 1] += 1
        deg[head[e] + 1] += 1
    start = np.cumsum(deg)
    pos = start[:-1].copy()
    to = np.empty(2 * m, np.int64)
    res = np.empty(2 * m, np.float64)
    rev = np.empty(2 * m, np.int64)
    for e in range(m):
        u, v = tail[e], head[e]
        i, j = pos[u], pos[v]
        pos[u] += 1
        pos[v] += 1
        to[i], res[i], rev[i] = v, cap[e], j
        to[j], res[j], rev[j] = u, rcap[e], i
    return start, to, res, rev


@numba.njit(cache=True)
def _bfs(start, to, res, s, t, eps, level, queue):
    level[:] = -1
    level[s] = 0
    qh, qt = 0, 1
    queue[0] = s
    while qh < qt:
        u = queue[qh]
        qh += 1
        for k in range(start[u], start[u + 1]):
            v = to[k]
            if level[v] < 0 and res[k] > eps:
                level[v] = level[u] + 1
                queue[qt] = v
                qt += 1
    return level[t] >= 0


@numba.njit(cache=True)
def _dinic(start, to, res, rev, s, t, eps):
    n = start.size - 1
    level = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    it = np.empty(n, np.int64)
    stack = np.empty(n, np.int64)
    arcs = np.empty(n, np.int64)
    flow = 0.0
    while _bfs(start, to, res, s, t, eps, level, queue):
        it[:] = start[:-1]
        while True:
            # iterative DFS along the level graph using current-arc pointers
            depth = 0
            stack[0] = s
            found = False
            while depth >= 0:
                u = stack[depth]
                if u == t:
                    found = True
                    break
                advanced = False
                while it[u] < start[u + 1]:
                    k = it[u]
                    v = to[k]
                    if res[k] > eps and level[v] == level[u] + 1:
                        arcs[depth] = k
                        depth += 1
                        stack[depth] = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    level[u] = -1
                    depth -= 1
                    if depth >= 0:
                        it[stack[depth]] += 1
            if not found:
                break
            push = np.inf
            for d in range(depth):
                if res[arcs[d]] < push:
                    push = res[arcs[d]]
            for d in range(depth):
                k = arcs[d]
                res[k] -= push
                res[rev[k]] += push
            flow += push
    return flow


@numba.njit(cache=True)
def _reach(start, to, res, rev, root, eps, forward):
    n = start.size - 1
    seen = np.zeros(n, np.bool_)
    queue = np.empty(n, np.int64)
    seen[root] = True
    queue[0] = root
    qh, qt = 0, 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for k in range(start[u], start[u + 1]):
            v = to[k]
            r = res[k] if forward else res[rev[k]]
            if not seen[v] and r > eps:
                seen[v] = True
                queue[qt] = v
                qt += 1
    return seen


def max_flow(n: int, tail, head, cap, rcap, eps: float):
    """Solve on ``n`` inner nodes; returns (flow, source side, not-sink side).

    The source side holds the nodes reachable from the source in the final
    residual graph; ``not-sink side`` holds those that cannot reach the sink.
    """
    start, to, res, rev = _build_csr(
        n + 2,
        np.asarray(tail, np.int64),
        np.asarray(head, np.int64),
        np.asarray(cap, np.float64),
        np.asarray(rcap, np.float64),
    )
    s, t = n, n + 1
    flow = _dinic(start, to, res, rev, s, t, eps)
    src = _reach(start, to, res, rev, s, eps, True)
    snk = _reach(start, to, res, rev, t, eps, False)
    return flow, src[:n], ~snk[:n]


@numba.njit(cache=True)
def persistency(free, c, s_free, deltas, weights):
    """Fix free cells whose marginal cost has a strict sign for every labelling.

    Arrays are flat over a grid padded so every ``p + delta`` is in range;
    padding cells must be marked not free.  Returns the state per cell:
    0 free, 1 fixed in, 2 fixed out.  ``c`` and ``s_free`` are updated.
    """
    n = free.size
    state = np.where(free, 0, 3).astype(np.int8)
    queue = np.empty(n, np.int64)
    queued = np.zeros(n, np.bool_)
    qt = 0
    for p in range(n):
        if free[p]:
            queue[qt] = p
            qt += 1
            queued[p] = True
    qh = 0
    while qh != qt:
        p = queue[qh]
        qh = (qh + 1) % n
        queued[p] = False
        if state[p] != 0:
            continue
        if c[p] + s_free[p] < 0:
            state[p] = 1
            sign = -1.0
        elif c[p] - s_free[p] > 0:
            state[p] = 2
            sign = 1.0
        else:
            continue
        for k in range(deltas.size):
            q = p + deltas[k]
            if state[q] == 0:
                c[q] += sign * weights[k]
                s_free[q] -= weights[k]
                if not queued[q]:
                    queued[q] = True
                    queue[qt] = q
                    qt = (qt + 1) % n
    return state
