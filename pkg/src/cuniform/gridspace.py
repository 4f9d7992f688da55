"""Axis-aligned delta-cell tiling of a bounded configuration space.

Cells are half-open boxes ``[lower + i*delta, lower + (i+1)*delta)``.  Nothing
is allocated per cell: indices are computed on demand, and a cell's identity
is its integer index tuple (or, for vectorized work, a packed ``int64`` key
from :meth:`GridSpec.keys`).  Angular dimensions wrap modulo their cell count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OutOfDomainError


@dataclass(frozen=True)
class GridSpec:
    delta: tuple[float, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    angular: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "delta", tuple(float(d) for d in self.delta))
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "angular", tuple(bool(a) for a in self.angular))
        p = len(self.delta)
        if not (len(self.lower) == len(self.upper) == len(self.angular) == p):
            raise ValueError("delta, lower, upper and angular must have equal length")
        counts = []
        for d, lo, hi, ang in zip(self.delta, self.lower, self.upper, self.angular):
            if not d > 0:
                raise ValueError("cell width must be positive")
            if not lo < hi:
                raise ValueError("lower bound must be below upper bound")
            ratio = (hi - lo) / d
            if ang:
                if abs(ratio - round(ratio)) > 1e-9:
                    raise ValueError("angular span must be an integer multiple of its cell width")
                counts.append(int(round(ratio)))
            else:
                counts.append(int(math.ceil(ratio - 1e-12)))
        object.__setattr__(self, "_counts", tuple(counts))

    @property
    def dim(self) -> int:
        return len(self.delta)

    @property
    def counts(self) -> tuple[int, ...]:
        return self._counts

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.delta))

    def to_dict(self) -> dict:
        return {
            "delta": list(self.delta),
            "lower": list(self.lower),
            "upper": list(self.upper),
            "angular": list(self.angular),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(tuple(d["delta"]), tuple(d["lower"]), tuple(d["upper"]), tuple(d["angular"]))

    # vectorized API -------------------------------------------------------

    def cells_of(self, states) -> tuple[np.ndarray, np.ndarray]:
        """Index every state; return ``(indices, in_bounds)``.

        ``indices`` has shape ``(..., dim)`` (``int64``); entries for
        out-of-bounds states are meaningless and flagged ``False`` in the mask.
        """
        s = np.asarray(states, dtype=float)
        lo = np.asarray(self.lower)
        d = np.asarray(self.delta)
        counts = np.asarray(self.counts)
        raw = np.floor((s - lo) / d)
        ang = np.asarray(self.angular)
        finite = np.isfinite(raw)
        raw = np.where(finite, raw, 0.0).astype(np.int64)
        wrapped = np.mod(raw, counts)
        idx = np.where(ang, wrapped, raw)
        ok = finite & (ang | ((idx >= 0) & (idx < counts) & (s >= lo)))
        return idx, np.all(ok, axis=-1)

    def midpoints(self, indices) -> np.ndarray:
        i = np.asarray(indices, dtype=float)
        return np.asarray(self.lower) + (i + 0.5) * np.asarray(self.delta)

    def keys(self, indices) -> np.ndarray:
        """Pack index tuples into sortable ``int64`` keys (row-major)."""
        idx = np.asarray(indices, dtype=np.int64)
        key = np.zeros(idx.shape[:-1], dtype=np.int64)
        for j, c in enumerate(self.counts):
            key = key * c + idx[..., j]
        return key

    def unpack(self, keys) -> np.ndarray:
        k = np.asarray(keys, dtype=np.int64).copy()
        out = np.empty(k.shape + (self.dim,), dtype=np.int64)
        for j in range(self.dim - 1, -1, -1):
            c = self.counts[j]
            out[..., j] = k % c
            k //= c
        return out

    def valid_index(self, c) -> bool:
        c = np.asarray(c)
        return c.shape == (self.dim,) and bool(np.all((c >= 0) & (c < np.asarray(self.counts))))


def cell_of(spec: GridSpec, s) -> tuple[int, ...]:
    s = np.asarray(s, dtype=float).reshape(spec.dim)
    idx, ok = spec.cells_of(s)
    if not ok:
        raise OutOfDomainError(f"state {s.tolist()} is outside the grid bounds")
    return tuple(int(i) for i in idx)


def midpoint_of(spec: GridSpec, c) -> np.ndarray:
    if not spec.valid_index(c):
        raise IndexError(f"invalid cell index {c!r}")
    return spec.midpoints(np.asarray(c))


def sample_in_cell(spec: GridSpec, c, n: int, rng: np.random.Generator,
                   midpoint_only: bool = False) -> np.ndarray:
    """Draw ``n`` states uniformly from the box of cell ``c``.

    With ``midpoint_only`` every returned state is the cell midpoint.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    mid = midpoint_of(spec, c)
    if midpoint_only:
        return np.tile(mid, (n, 1))
    c = np.asarray(c, dtype=float)
    lo = np.asarray(spec.lower) + c * np.asarray(spec.delta)
    hi = lo + np.asarray(spec.delta)
    u = rng.random((n, spec.dim))
    pts = lo + u * np.asarray(spec.delta)
    # rounding can land exactly on the excluded upper face
    pts = np.minimum(pts, np.nextafter(hi, lo))
    pts = np.maximum(pts, lo)
    return pts
