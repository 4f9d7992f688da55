"""Hot numeric kernels, each with a numba and a fallback implementation.

The public functions dispatch on :func:`cuniform._accel.numba_enabled`.  The
``*_numpy`` / ``*_python`` variants are importable directly so tests and the
benchmark can compare both paths.

Max flow is the one kernel whose fallback is not vectorized numpy: Dinic's
algorithm is inherently sequential, so the fallback runs the very same
Python source that numba compiles.  Both paths therefore return the same
flow, not merely the same flow value.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit, numba_enabled

TWO_PI = 2.0 * math.pi

# --------------------------------------------------------------------------
# max flow (Dinic)


def _build_residual(n_nodes, tail, head, cap):
    m = tail.shape[0]
    to = np.empty(2 * m, dtype=np.int64)
    res = np.empty(2 * m, dtype=np.int64)
    to[0::2] = head
    to[1::2] = tail
    res[0::2] = cap
    res[1::2] = 0
    owner = np.empty(2 * m, dtype=np.int64)
    owner[0::2] = tail
    owner[1::2] = head
    order = np.argsort(owner, kind="stable")
    start = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(start, owner + 1, 1)
    start = np.cumsum(start)
    return to, res, order.astype(np.int64), start


def _dinic_python(n_nodes, to, res, adj, start, s, t):
    total = 0
    level = np.empty(n_nodes, dtype=np.int64)
    it = np.empty(n_nodes, dtype=np.int64)
    queue = np.empty(n_nodes, dtype=np.int64)
    path = np.empty(n_nodes, dtype=np.int64)
    while True:
        for i in range(n_nodes):
            level[i] = -1
        level[s] = 0
        qh = 0
        qt = 1
        queue[0] = s
        while qh < qt:
            u = queue[qh]
            qh += 1
            for j in range(start[u], start[u + 1]):
                e = adj[j]
                w = to[e]
                if res[e] > 0 and level[w] < 0:
                    level[w] = level[u] + 1
                    queue[qt] = w
                    qt += 1
        if level[t] < 0:
            break
        for i in range(n_nodes):
            it[i] = start[i]
        depth = 0
        u = s
        while True:
            if u == t:
                b = res[path[0]]
                for i in range(1, depth):
                    if res[path[i]] < b:
                        b = res[path[i]]
                for i in range(depth):
                    e = path[i]
                    res[e] -= b
                    res[e ^ 1] += b
                total += b
                depth = 0
                u = s
                continue
            advanced = False
            while it[u] < start[u + 1]:
                e = adj[it[u]]
                w = to[e]
                if res[e] > 0 and level[w] == level[u] + 1:
                    path[depth] = e
                    depth += 1
                    u = w
                    advanced = True
                    break
                it[u] += 1
            if not advanced:
                if u == s:
                    break
                level[u] = -1
                depth -= 1
                u = to[path[depth] ^ 1]
                it[u] += 1
    return total


_dinic_numba = njit(_dinic_python)


def max_flow_arrays(n_nodes: int, tail, head, cap, s: int, t: int, *, numba: bool | None = None):
    """Exact integral maximum flow on an arc list.

    Returns ``(value, flow)`` with ``flow[i]`` the flow on arc ``i``.
    """
    tail = np.ascontiguousarray(tail, dtype=np.int64)
    head = np.ascontiguousarray(head, dtype=np.int64)
    cap = np.ascontiguousarray(cap, dtype=np.int64)
    if np.any(cap < 0):
        raise ValueError("capacities must be non-negative")
    to, res, adj, start = _build_residual(n_nodes, tail, head, cap)
    use = numba_enabled() if numba is None else numba
    fn = _dinic_numba if use else _dinic_python
    value = int(fn(n_nodes, to, res, adj, start, s, t))
    flow = res[1::2].copy()
    return value, flow


# --------------------------------------------------------------------------
# C-Uniform cell-chain walk


@njit
def _walk_numba(cdf, succ, start_row, u):
    K, T = u.shape
    A = cdf.shape[1]
    actions = np.empty((K, T), dtype=np.int64)
    rows = np.empty((K, T + 1), dtype=np.int64)
    for k in range(K):
        r = start_row
        rows[k, 0] = r
        for t in range(T):
            if r < 0:
                actions[k, t] = -1
                rows[k, t + 1] = -1
                continue
            x = u[k, t]
            a = 0
            while a < A and cdf[r, a] <= x:
                a += 1
            actions[k, t] = a
            r = succ[r, a]
            rows[k, t + 1] = r
    return actions, rows


def _walk_numpy(cdf, succ, start_row, u):
    K, T = u.shape
    actions = np.empty((K, T), dtype=np.int64)
    rows = np.empty((K, T + 1), dtype=np.int64)
    r = np.full(K, start_row, dtype=np.int64)
    rows[:, 0] = r
    for t in range(T):
        live = r >= 0
        rc = np.where(live, r, 0)
        a = (cdf[rc] <= u[:, t:t + 1]).sum(axis=1)
        a = np.where(live, a, -1)
        actions[:, t] = a
        r = np.where(live, succ[rc, np.maximum(a, 0)], -1)
        rows[:, t + 1] = r
    return actions, rows


def cuniform_walk(cdf, succ, start_row: int, u, *, numba: bool | None = None):
    """Walk ``K`` cell chains through a stacked policy.

    ``cdf`` rows are cumulative action probabilities with every entry from the
    last positive-probability action onward set to ``+inf``, so the chosen
    action is ``#{a : cdf[r, a] <= u}`` and zero-probability actions are never
    picked.  ``succ[r, a]`` is the global row of the successor cell; a chain
    that hits ``-1`` (successor off the grid) stays at ``-1`` with action
    ``-1``.
    """
    use = numba_enabled() if numba is None else numba
    fn = _walk_numba if use else _walk_numpy
    return fn(np.ascontiguousarray(cdf), np.ascontiguousarray(succ, dtype=np.int64),
              int(start_row), np.ascontiguousarray(u, dtype=np.float64))


# --------------------------------------------------------------------------
# Dubins batch rollout


@njit
def _dubins_rollout_numba(x0, omega, v, dt):
    K, T = omega.shape
    out = np.empty((K, T + 1, 3))
    for k in range(K):
        x = x0[k, 0]
        y = x0[k, 1]
        th = x0[k, 2]
        out[k, 0, 0] = x
        out[k, 0, 1] = y
        out[k, 0, 2] = th
        for t in range(T):
            nx = x + v * math.cos(th) * dt
            ny = y + v * math.sin(th) * dt
            nth = (th + omega[k, t] * dt) % TWO_PI
            if nth >= TWO_PI:
                nth = 0.0
            x, y, th = nx, ny, nth
            out[k, t + 1, 0] = x
            out[k, t + 1, 1] = y
            out[k, t + 1, 2] = th
    return out


def _dubins_rollout_numpy(x0, omega, v, dt):
    K, T = omega.shape
    out = np.empty((K, T + 1, 3))
    out[:, 0] = x0
    for t in range(T):
        prev = out[:, t]
        out[:, t + 1, 0] = prev[:, 0] + v * np.cos(prev[:, 2]) * dt
        out[:, t + 1, 1] = prev[:, 1] + v * np.sin(prev[:, 2]) * dt
        th = np.mod(prev[:, 2] + omega[:, t] * dt, TWO_PI)
        out[:, t + 1, 2] = np.where(th >= TWO_PI, 0.0, th)
    return out


def dubins_rollout(x0, omega, v: float, dt: float, *, numba: bool | None = None):
    """Roll out ``K`` Dubins trajectories; ``x0`` is ``(K, 3)``, ``omega`` ``(K, T)``."""
    use = numba_enabled() if numba is None else numba
    fn = _dubins_rollout_numba if use else _dubins_rollout_numpy
    return fn(np.ascontiguousarray(x0, dtype=np.float64), np.ascontiguousarray(omega, dtype=np.float64),
              float(v), float(dt))


# --------------------------------------------------------------------------
# trajectory costs


@njit
def _costs_numba(pos, goal, circles, rects, stop_radius):
    K, T1, _ = pos.shape
    out = np.empty(K)
    r2 = stop_radius * stop_radius if stop_radius >= 0 else -1.0
    for k in range(K):
        c = 0.0
        hit = False
        for t in range(T1):
            px = pos[k, t, 0]
            py = pos[k, t, 1]
            dx = px - goal[0]
            dy = py - goal[1]
            d2 = dx * dx + dy * dy
            c += d2
            for i in range(circles.shape[0]):
                ex = px - circles[i, 0]
                ey = py - circles[i, 1]
                if ex * ex + ey * ey <= circles[i, 2] * circles[i, 2]:
                    hit = True
            for i in range(rects.shape[0]):
                if rects[i, 0] <= px < rects[i, 2] and rects[i, 1] <= py < rects[i, 3]:
                    hit = True
            if d2 <= r2:
                break
        out[k] = math.inf if hit else c
    return out


def _costs_numpy(pos, goal, circles, rects, stop_radius):
    d = pos - goal
    d2 = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1]
    # states after the first one within stop_radius of the goal are ignored
    reached = d2 <= stop_radius * stop_radius if stop_radius >= 0 else np.zeros(d2.shape, dtype=bool)
    active = np.ones_like(reached)
    active[:, 1:] = np.cumsum(reached, axis=1)[:, :-1] == 0
    cost = np.sum(np.where(active, d2, 0.0), axis=1)
    hit = np.zeros(pos.shape[0], dtype=bool)
    if len(circles):
        ex = pos[:, :, None, 0] - circles[:, 0]
        ey = pos[:, :, None, 1] - circles[:, 1]
        inside = ex * ex + ey * ey <= circles[:, 2] * circles[:, 2]
        hit |= np.any(inside & active[:, :, None], axis=(1, 2))
    if len(rects):
        px = pos[:, :, None, 0]
        py = pos[:, :, None, 1]
        inside = (rects[:, 0] <= px) & (px < rects[:, 2]) & (rects[:, 1] <= py) & (py < rects[:, 3])
        hit |= np.any(inside & active[:, :, None], axis=(1, 2))
    return np.where(hit, np.inf, cost)


def trajectory_costs(pos, goal, circles, rects, stop_radius: float = -1.0, *, numba: bool | None = None):
    """Sum of squared goal distances per trajectory, ``inf`` on any obstacle hit.

    ``pos`` is ``(K, T+1, 2)``; ``circles`` rows are ``(cx, cy, r)`` and
    ``rects`` rows are ``(xmin, ymin, xmax, ymax)``.  With ``stop_radius >= 0``
    a trajectory stops accruing cost (and collisions) after its first state
    within that distance of the goal.
    """
    use = numba_enabled() if numba is None else numba
    fn = _costs_numba if use else _costs_numpy
    circles = np.asarray(circles, dtype=np.float64).reshape(-1, 3)
    rects = np.asarray(rects, dtype=np.float64).reshape(-1, 4)
    return fn(np.ascontiguousarray(pos, dtype=np.float64), np.asarray(goal, dtype=np.float64),
              np.ascontiguousarray(circles), np.ascontiguousarray(rects), float(stop_radius))
