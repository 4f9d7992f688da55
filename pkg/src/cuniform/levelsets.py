"""Forward construction of reachable level sets and their transition edges.

Each level ``L_t`` is stored as a sorted array of packed cell keys, so cell
lookup is a binary search and iteration order is canonical (independent of
the order in which successors were discovered).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import SystemModel
from .errors import DeadLevelError
from .gridspace import GridSpec, cell_of


@dataclass(frozen=True)
class EdgeRecord:
    source: tuple[int, ...]
    target: tuple[int, ...]
    actions: frozenset[int]  # indices into the action list


class LevelSet:
    """Reachable cells at step ``t``, sorted by packed key."""

    def __init__(self, t: int, spec: GridSpec, keys: np.ndarray):
        keys = np.asarray(keys, dtype=np.int64)
        if keys.ndim != 1 or (len(keys) > 1 and np.any(np.diff(keys) <= 0)):
            raise ValueError("level keys must be strictly increasing")
        self.t = int(t)
        self.spec = spec
        self.keys = keys
        self._cells = None

    @classmethod
    def from_cells(cls, t: int, spec: GridSpec, cells) -> "LevelSet":
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, spec.dim)
        return cls(t, spec, np.unique(spec.keys(cells)))

    def __len__(self):
        return len(self.keys)

    def __repr__(self):
        return f"LevelSet(t={self.t}, cells={len(self)})"

    @property
    def cells(self) -> np.ndarray:
        if self._cells is None:
            self._cells = self.spec.unpack(self.keys)
        return self._cells

    def cell_tuples(self) -> list[tuple[int, ...]]:
        return [tuple(int(v) for v in c) for c in self.cells]

    def index_of(self, keys) -> np.ndarray:
        """Row of each key in this level, ``-1`` where absent."""
        keys = np.asarray(keys, dtype=np.int64)
        pos = np.searchsorted(self.keys, keys)
        pos_c = np.minimum(pos, max(len(self.keys) - 1, 0))
        hit = (pos < len(self.keys)) & (self.keys[pos_c] == keys) if len(self.keys) else np.zeros(keys.shape, bool)
        return np.where(hit, pos_c, -1)

    def __contains__(self, cell) -> bool:
        key = self.spec.keys(np.asarray(cell, dtype=np.int64))
        return bool(self.index_of(key) >= 0)


@dataclass
class Transition:
    """Edges between ``L_t`` and ``L_{t+1}``.

    ``src``, ``tgt`` and ``action`` are parallel arrays of unique
    ``(source row, target row, action index)`` triples sorted in that order.
    ``succ[r, a]`` is the target row reached from the midpoint of source row
    ``r`` under action ``a`` (``-1`` if it left the grid).
    """

    t: int
    src: np.ndarray
    tgt: np.ndarray
    action: np.ndarray
    succ: np.ndarray
    n_actions: int
    out_of_bounds: int = 0

    def pairs(self):
        """Unique ``(src, tgt)`` pairs plus, per triple, the index of its pair."""
        if len(self.src) == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty
        new = np.ones(len(self.src), dtype=bool)
        new[1:] = (self.src[1:] != self.src[:-1]) | (self.tgt[1:] != self.tgt[:-1])
        pair_of = np.cumsum(new) - 1
        return self.src[new], self.tgt[new], pair_of

    @property
    def n_edges(self) -> int:
        return len(self.pairs()[0])

    def edge_records(self, level: LevelSet, next_level: LevelSet) -> list[EdgeRecord]:
        ps, pt, pair_of = self.pairs()
        cells = level.cells
        nxt = next_level.cells
        acts: list[set[int]] = [set() for _ in range(len(ps))]
        for i, a in zip(pair_of, self.action):
            acts[i].add(int(a))
        return [
            EdgeRecord(tuple(int(v) for v in cells[s]), tuple(int(v) for v in nxt[g]), frozenset(a))
            for s, g, a in zip(ps, pt, acts)
        ]


def expand_level(model: SystemModel, spec: GridSpec, level: LevelSet, actions, n_samples: int,
                 dt: float, rng: np.random.Generator | None = None) -> tuple[LevelSet, Transition]:
    """Propagate every cell of ``level`` under every action.

    The first sample of each cell is its midpoint; with ``n_samples > 1`` the
    remaining ``n_samples - 1`` points are drawn uniformly in the cell box
    from ``rng``.  Successors outside the grid are dropped and counted.
    """
    if len(level) == 0:
        raise ValueError("cannot expand an empty level")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    actions = np.asarray(actions, dtype=float).reshape(-1, model.control_dim)
    A = len(actions)
    n = len(level)
    mids = spec.midpoints(level.cells)
    if n_samples == 1:
        pts = mids[:, None, :]
    else:
        if rng is None:
            raise ValueError("multi-sample expansion needs an rng")
        d = np.asarray(spec.delta)
        lo = np.asarray(spec.lower) + level.cells * d
        u = rng.random((n, n_samples - 1, spec.dim))
        extra = np.minimum(lo[:, None, :] + u * d, np.nextafter(lo + d, lo)[:, None, :])
        pts = np.concatenate([mids[:, None, :], extra], axis=1)
    nxt = model.step(pts[:, :, None, :], actions[None, None, :, :], dt)  # (n, S, A, p)
    idx, ok = spec.cells_of(nxt)
    keys = spec.keys(idx)
    n_oob = int((~ok).sum())
    if not ok.any():
        raise DeadLevelError(level.t + 1)
    next_keys = np.unique(keys[ok])
    m = len(next_keys)
    tgt = np.searchsorted(next_keys, keys)
    src = np.broadcast_to(np.arange(n)[:, None, None], keys.shape)
    act = np.broadcast_to(np.arange(A)[None, None, :], keys.shape)
    code = (src[ok].astype(np.int64) * m + tgt[ok]) * A + act[ok]
    code = np.unique(code)
    a_out = code % A
    rest = code // A
    succ = np.where(ok[:, 0, :], tgt[:, 0, :], -1).astype(np.int64)
    trans = Transition(t=level.t, src=rest // m, tgt=rest % m, action=a_out, succ=succ,
                       n_actions=A, out_of_bounds=n_oob)
    return LevelSet(level.t + 1, spec, next_keys), trans


def build_all_levels(model: SystemModel, spec: GridSpec, x0, actions, N: int, n_samples: int = 1,
                     dt: float = 0.2, rng: np.random.Generator | None = None):
    """Levels ``L_0 .. L_N`` and the ``N`` transitions between them."""
    if N < 1:
        raise ValueError("N must be >= 1")
    c0 = cell_of(spec, x0)
    levels = [LevelSet.from_cells(0, spec, [c0])]
    transitions = []
    for _ in range(N):
        nxt, tr = expand_level(model, spec, levels[-1], actions, n_samples, dt, rng)
        levels.append(nxt)
        transitions.append(tr)
    return levels, transitions
