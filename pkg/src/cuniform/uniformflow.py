"""C-Uniform action probabilities.

Two routes are provided:

* :func:`closed_form_1d` -- the analytic table for the 1D walker with ``2k+1``
  equally spaced actions between a level of ``n`` cells and one of
  ``m = n + 2k`` cells.
* the flow route -- :func:`build_flow_network`, :func:`max_flow`,
  :func:`extract_policy`, chained level by level in :func:`precompute`.

Flow network layout (node ids): ``0`` is the source, ``1..n`` the cells of
``L``, ``n+1..n+m`` the cells of ``L'`` and ``n+m+1`` the sink.  Source arcs
carry ``m``, inner arcs ``m`` and sink arcs ``n``, so a flow of value ``n*m``
exists exactly when a C-Uniform transition does.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .dynamics import SystemModel
from .gridspace import GridSpec, cell_of
from .levelsets import EdgeRecord, LevelSet, Transition, build_all_levels, expand_level

log = logging.getLogger(__name__)


def closed_form_1d(n: int, k: int, exact: bool = False) -> np.ndarray:
    """Walker action table: row ``i`` (1-based) is ``[n-i+1, 1, ..., 1, i] / m``.

    Columns are ordered from the leftmost action to the rightmost.  With
    ``exact=True`` the entries are :class:`fractions.Fraction`.
    """
    if n < 1 or k < 1:
        raise ValueError("n and k must be >= 1")
    m = n + 2 * k
    counts = np.ones((n, 2 * k + 1), dtype=np.int64)
    i = np.arange(1, n + 1)
    counts[:, 0] = n - i + 1
    counts[:, -1] = i
    if exact:
        out = np.empty(counts.shape, dtype=object)
        for idx, c in np.ndenumerate(counts):
            out[idx] = Fraction(int(c), m)
        return out
    return counts / m


@dataclass
class FlowNetwork:
    n: int
    m: int
    tail: np.ndarray
    head: np.ndarray
    cap: np.ndarray
    pair_src: np.ndarray  # layer-1 row of each inner arc
    pair_tgt: np.ndarray  # layer-2 row of each inner arc
    isolated: np.ndarray  # layer-2 rows without any incoming arc

    source: int = 0

    @property
    def sink(self) -> int:
        return self.n + self.m + 1

    @property
    def n_nodes(self) -> int:
        return self.n + self.m + 2

    @property
    def n_arcs(self) -> int:
        return len(self.tail)

    @property
    def target_value(self) -> int:
        return self.n * self.m

    @property
    def inner(self) -> slice:
        return slice(self.n, self.n + len(self.pair_src))


@dataclass
class FlowResult:
    value: int
    flow: np.ndarray  # per arc, aligned with FlowNetwork.tail/head

    def arc_flows(self, net: FlowNetwork) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): int(f) for a, b, f in zip(net.tail, net.head, self.flow)}


def _edges_to_pairs(L: LevelSet, Lp: LevelSet, edges) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(edges, Transition):
        ps, pt, _ = edges.pairs()
        return ps, pt
    src, tgt = [], []
    for e in edges:
        s = L.index_of(L.spec.keys(np.asarray(e.source)))
        g = Lp.index_of(Lp.spec.keys(np.asarray(e.target)))
        if s < 0 or g < 0:
            raise ValueError(f"edge {e} has an endpoint outside its level")
        src.append(int(s))
        tgt.append(int(g))
    if not src:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    code = np.unique(np.asarray(src, np.int64) * len(Lp) + np.asarray(tgt, np.int64))
    return code // len(Lp), code % len(Lp)


def build_flow_network(L: LevelSet, Lp: LevelSet, edges) -> FlowNetwork:
    """Source / ``L`` / ``L'`` / sink network for one level transition.

    ``edges`` is a :class:`Transition` or an iterable of :class:`EdgeRecord`.
    Layer-2 cells that no edge reaches are listed in ``isolated``; the network
    is still built (its max flow then falls short of ``n*m``).
    """
    n, m = len(L), len(Lp)
    ps, pt = _edges_to_pairs(L, Lp, edges)
    src_node = 0
    sink = n + m + 1
    tail = np.concatenate([np.full(n, src_node), 1 + ps, 1 + n + np.arange(m)]).astype(np.int64)
    head = np.concatenate([1 + np.arange(n), 1 + n + pt, np.full(m, sink)]).astype(np.int64)
    cap = np.concatenate([np.full(n, m), np.full(len(ps), m), np.full(m, n)]).astype(np.int64)
    reached = np.zeros(m, dtype=bool)
    reached[pt] = True
    isolated = np.flatnonzero(~reached)
    if len(isolated):
        log.warning("level %d -> %d: %d layer-2 cells have no incoming edge", L.t, Lp.t, len(isolated))
    return FlowNetwork(n=n, m=m, tail=tail, head=head, cap=cap, pair_src=ps.astype(np.int64),
                       pair_tgt=pt.astype(np.int64), isolated=isolated)


def max_flow(net: FlowNetwork) -> FlowResult:
    value, flow = kernels.max_flow_arrays(net.n_nodes, net.tail, net.head, net.cap, net.source, net.sink)
    return FlowResult(value=value, flow=flow)


@dataclass
class PolicyLevel:
    """Action distributions for every cell of one level.

    ``probs[r, a]`` equals ``num[r, a] / den[r, a]`` (reduced integers).
    """

    t: int
    probs: np.ndarray
    num: np.ndarray
    den: np.ndarray
    succ: np.ndarray
    stats: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def deficit(self) -> float:
        return self.stats["deficit"]

    def distribution(self, row: int) -> dict[int, Fraction]:
        nz = np.flatnonzero(self.num[row])
        return {int(a): Fraction(int(self.num[row, a]), int(self.den[row, a])) for a in nz}


def extract_policy(net: FlowNetwork, flows: FlowResult, edges: Transition, t: int | None = None) -> PolicyLevel:
    """Turn an integral flow into per-cell action probabilities.

    An arc's probability is its flow over the source cell's total outflow and
    is split evenly over the actions that realize the arc.  Cells with no
    outflow fall back to a uniform choice over their available actions.
    """
    if not isinstance(edges, Transition):
        raise TypeError("extract_policy needs the Transition that produced the network")
    A = edges.n_actions
    n = net.n
    ps, pt, pair_of = edges.pairs()
    if len(ps) != len(net.pair_src) or np.any(ps != net.pair_src) or np.any(pt != net.pair_tgt):
        raise ValueError("network arcs do not match the transition edges")
    arc_flow = flows.flow[net.inner].astype(np.int64)
    f_out = np.bincount(ps, weights=arc_flow, minlength=n).astype(np.int64) if len(ps) else np.zeros(n, np.int64)

    set_size = np.bincount(pair_of, minlength=len(ps)).astype(np.int64)
    # common denominator per row: f_out * lcm(set sizes in that row)
    row_lcm = np.ones(n, dtype=np.int64)
    np.lcm.at(row_lcm, ps, set_size)
    trip_src = edges.src
    trip_pair = pair_of
    num = np.zeros((n, A), dtype=np.int64)
    np.add.at(num, (trip_src, edges.action),
              arc_flow[trip_pair] * (row_lcm[trip_src] // set_size[trip_pair]))
    den = np.broadcast_to((f_out * row_lcm)[:, None], (n, A)).copy()

    warnings: list[str] = []
    dead = np.flatnonzero(f_out == 0)
    if len(dead):
        avail = np.zeros((n, A), dtype=bool)
        avail[edges.src, edges.action] = True
        for r in dead:
            k = int(avail[r].sum())
            if k == 0:
                avail[r] = True
                k = A
            num[r] = avail[r].astype(np.int64)
            den[r] = k
        warnings.append(f"level {edges.t}: {len(dead)} cells had zero outflow; uniform fallback used")
        log.warning(warnings[-1])

    g = np.gcd(num, den)
    g[g == 0] = 1
    num //= g
    den //= g
    den[num == 0] = 1
    probs = num / den
    value = int(flows.value)
    stats = {
        "cells": n,
        "next_cells": net.m,
        "edges": len(ps),
        "flow_value": value,
        "capacity": net.target_value,
        "deficit": 1.0 - value / net.target_value,
        "isolated_targets": int(len(net.isolated)),
        "fallback_cells": int(len(dead)),
        "out_of_bounds": int(edges.out_of_bounds),
    }
    return PolicyLevel(t=edges.t if t is None else t, probs=probs, num=num, den=den,
                       succ=edges.succ.copy(), stats=stats, warnings=warnings)


def induced_marginal(policy: PolicyLevel, edges: Transition, m: int, prior=None, exact: bool = False):
    """Next-level cell probabilities ``sum_x sum_{u: x'=F(x,u)} p(x,u) p(x)``.

    ``prior`` defaults to the uniform distribution over the source level.
    Uses the triple list, so it is valid for multi-sample expansions too (each
    triple contributes its action probability split over the targets that
    action reaches from that cell).
    """
    n = policy.probs.shape[0]
    # how many distinct targets each (src, action) reaches
    reach = np.zeros((n, edges.n_actions), dtype=np.int64)
    np.add.at(reach, (edges.src, edges.action), 1)
    if exact:
        px = [Fraction(1, n)] * n if prior is None else list(prior)
        out = [Fraction(0)] * m
        for s, g, a in zip(edges.src, edges.tgt, edges.action):
            p = Fraction(int(policy.num[s, a]), int(policy.den[s, a]))
            if p:
                out[g] += p * px[s] / int(reach[s, a])
        return out
    px = np.full(n, 1.0 / n) if prior is None else np.asarray(prior, dtype=float)
    w = policy.probs[edges.src, edges.action] * px[edges.src] / np.maximum(reach[edges.src, edges.action], 1)
    return np.bincount(edges.tgt, weights=w, minlength=m)


@dataclass
class PolicyTable:
    model: SystemModel
    grid: GridSpec
    dt: float
    actions: np.ndarray  # (A, control_dim)
    N: int
    x0: np.ndarray
    n_samples: int
    seed: int
    levels: list[LevelSet]
    policies: list[PolicyLevel]
    timing: dict = field(default_factory=dict)

    _stack: tuple | None = field(default=None, init=False, repr=False)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def deficits(self) -> list[float]:
        return [p.deficit for p in self.policies]

    @property
    def origin(self) -> np.ndarray:
        """Midpoint of the single level-0 cell."""
        return self.grid.midpoints(self.levels[0].cells[0])

    def content_hash(self) -> str:
        from .policyio import policy_hash

        return policy_hash(self.model.config(), self.grid, self.actions, self.dt)

    def uniform_through(self) -> int:
        """Largest ``t`` such that every transition into levels ``1..t`` is saturated."""
        t = 0
        for p in self.policies:
            if p.stats["flow_value"] != p.stats["capacity"]:
                break
            t += 1
        return t

    def stacked(self):
        """Concatenated ``(cdf, succ, offsets)`` over all levels for the walk kernel."""
        if self._stack is None:
            offsets = np.cumsum([0] + [len(lv) for lv in self.levels])
            cdfs, succs = [], []
            for t, p in enumerate(self.policies):
                cdf = np.cumsum(p.probs, axis=1)
                pos = p.probs > 0
                last = p.probs.shape[1] - 1 - np.argmax(pos[:, ::-1], axis=1)
                cdf[np.arange(p.probs.shape[1])[None, :] >= last[:, None]] = np.inf
                cdfs.append(cdf)
                succs.append(np.where(p.succ >= 0, p.succ + offsets[t + 1], -1))
            self._stack = (np.vstack(cdfs), np.vstack(succs), offsets)
        return self._stack


def precompute(model: SystemModel, spec: GridSpec, x0, actions, N: int, dt: float,
               n_samples: int = 1, seed: int = 0, progress=None) -> PolicyTable:
    """Build levels ``0..N`` and solve one max flow per transition.

    ``progress`` is called with each finished level's stats dict.
    """
    actions = np.asarray(actions, dtype=float).reshape(-1, model.control_dim)
    rng = np.random.default_rng(seed)
    t_start = time.perf_counter()
    levels = [LevelSet.from_cells(0, spec, [cell_of(spec, x0)])]
    policies = []
    for t in range(N):
        t0 = time.perf_counter()
        nxt, tr = expand_level(model, spec, levels[-1], actions, n_samples, dt, rng)
        t1 = time.perf_counter()
        net = build_flow_network(levels[-1], nxt, tr)
        res = max_flow(net)
        t2 = time.perf_counter()
        pol = extract_policy(net, res, tr)
        pol.stats["expand_ms"] = (t1 - t0) * 1e3
        pol.stats["solve_ms"] = (t2 - t1) * 1e3
        levels.append(nxt)
        policies.append(pol)
        if progress is not None:
            progress(pol.stats | {"t": t})
    table = PolicyTable(model=model, grid=spec, dt=float(dt), actions=actions, N=N,
                        x0=np.asarray(x0, dtype=float), n_samples=n_samples, seed=seed,
                        levels=levels, policies=policies)
    table.timing["total_s"] = time.perf_counter() - t_start
    return table


__all__ = [
    "EdgeRecord",
    "FlowNetwork",
    "FlowResult",
    "PolicyLevel",
    "PolicyTable",
    "build_all_levels",
    "build_flow_network",
    "closed_form_1d",
    "extract_policy",
    "induced_marginal",
    "max_flow",
    "precompute",
]
