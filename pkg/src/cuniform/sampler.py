"""Trajectory batches under C-Uniform, Gaussian and normal/log-normal inputs.

Randomness is drawn as one ``(K, T, ...)`` block from a fresh
``numpy.random.default_rng(seed)``.  Row ``k`` of that block depends only on
``(seed, k)``, so a batch of ``K`` trajectories is a prefix of the batch of
``K' > K`` trajectories with the same seed.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._defaults import SIGMA_LN, VARIANCE_LABELS
from .dynamics import DubinsCar, SystemModel, Trajectory
from .errors import OutOfDomainError
from .uniformflow import PolicyTable


@dataclass
class NoiseConfig:
    sigma_u: float  # variance of the omega noise, (rad/s)^2
    kind: str = "gaussian"
    sigma_ln: float = SIGMA_LN

    def __post_init__(self):
        if isinstance(self.sigma_u, str):
            self.sigma_u = VARIANCE_LABELS[self.sigma_u.lower()]
        if not self.sigma_u > 0:
            raise ValueError("sigma_u must be positive")
        if self.kind not in ("gaussian", "lognormal"):
            raise ValueError(f"unknown noise kind {self.kind!r}")

    @property
    def label(self) -> str | None:
        for name, v in VARIANCE_LABELS.items():
            if v == self.sigma_u:
                return name
        return None


@dataclass
class SampleBatch:
    states: np.ndarray  # (K, T+1, p)
    controls: np.ndarray  # (K, T, q)
    kind: str
    seed: int
    dt: float
    action_index: np.ndarray | None = None  # (K, T) for C-Uniform batches
    cells: np.ndarray | None = None  # (K, T+1) level rows, -1 after drift
    drift: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.states.shape[0]

    @property
    def T(self) -> int:
        return self.controls.shape[1]

    def trajectory(self, k: int) -> Trajectory:
        return Trajectory(states=self.states[k], controls=self.controls[k], dt=self.dt)

    def to_csv(self, fh, state_names=None) -> None:
        p = self.states.shape[2]
        names = list(state_names or [f"s{j}" for j in range(p)])
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["traj_id", "t", *names, "u"])
        for k in range(self.K):
            for t in range(self.T + 1):
                u = repr(float(self.controls[k, t, 0])) if t < self.T else ""
                w.writerow([k, t, *(repr(float(v)) for v in self.states[k, t]), u])

    def csv_text(self, state_names=None) -> str:
        buf = io.StringIO()
        self.to_csv(buf, state_names)
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "dt": self.dt,
            "drift": self.drift,
            "states": self.states.tolist(),
            "controls": self.controls.tolist(),
        }


def _start_row(policy: PolicyTable, x0) -> None:
    """Check that ``x0`` sits in (or next to) the level-0 cell."""
    if x0 is None:
        return
    grid = policy.grid
    idx, ok = grid.cells_of(np.asarray(x0, dtype=float))
    if not ok:
        raise OutOfDomainError(f"x0={np.asarray(x0).tolist()} is outside the policy grid")
    c0 = policy.levels[0].cells[0]
    diff = np.abs(idx - c0)
    counts = np.asarray(grid.counts)
    ang = np.asarray(grid.angular)
    diff = np.where(ang, np.minimum(diff, counts - diff), diff)
    if diff.max() > 1:
        raise OutOfDomainError(f"x0 cell {idx.tolist()} is not within one cell of the policy origin {c0.tolist()}")


def sample_cuniform(policy: PolicyTable, x0=None, T_steps: int | None = None, K: int = 1000, seed: int = 0,
                    snap: bool = True) -> SampleBatch:
    """Draw ``K`` trajectories from a precomputed C-Uniform policy.

    With ``snap=True`` (default) each step is propagated from the midpoint of
    the current cell, exactly as during precomputation, so the cell sequence
    follows the policy's transition graph and never drifts.  The emitted
    ``states[:, t+1]`` are the propagated points, ``states[:, 0]`` is the
    origin midpoint.

    With ``snap=False`` the continuous state is propagated and re-indexed
    every step; cells missing from level ``t`` get the zero control and are
    counted in ``drift``.
    """
    T = policy.N if T_steps is None else int(T_steps)
    if T > policy.N:
        raise ValueError(f"T_steps={T} exceeds the policy horizon N={policy.N}")
    _start_row(policy, x0)
    model = policy.model
    grid = policy.grid
    rng = np.random.default_rng(seed)
    u = rng.random((K, T))
    acts = policy.actions
    if snap:
        cdf, succ, offsets = policy.stacked()
        a_idx, rows = kernels.cuniform_walk(cdf, succ, 0, u)
        states = np.empty((K, T + 1, model.state_dim))
        controls = np.empty((K, T, model.control_dim))
        states[:, 0] = policy.origin
        zero = model.zero_control()
        for t in range(T):
            live = rows[:, t] >= 0
            controls[:, t] = np.where(live[:, None], acts[np.maximum(a_idx[:, t], 0)], zero)
            base = states[:, t].copy()
            if live.any():
                base[live] = grid.midpoints(policy.levels[t].cells[rows[live, t] - offsets[t]])
            states[:, t + 1] = model.step(base, controls[:, t], policy.dt)
        local = np.where(rows >= 0, rows - offsets[:T + 1][None, :], -1)
        drift = int((rows[:, T] < 0).sum())
        return SampleBatch(states=states, controls=controls, kind="cuniform", seed=seed, dt=policy.dt,
                           action_index=a_idx, cells=local, drift=drift)

    x = np.asarray(policy.origin if x0 is None else x0, dtype=float)
    states = np.empty((K, T + 1, model.state_dim))
    states[:, 0] = x
    a_idx = np.empty((K, T), dtype=np.int64)
    controls = np.empty((K, T, model.control_dim))
    cells = np.full((K, T + 1), -1, dtype=np.int64)
    drifted = np.zeros(K, dtype=bool)
    zero = model.zero_control()
    for t in range(T):
        idx, ok = grid.cells_of(states[:, t])
        row = policy.levels[t].index_of(grid.keys(idx))
        row = np.where(ok, row, -1)
        cells[:, t] = row
        miss = row < 0
        drifted |= miss
        cdf, _, offsets = policy.stacked()
        good = ~miss
        a = np.full(K, -1, dtype=np.int64)
        if good.any():
            a[good] = (cdf[row[good] + offsets[t]] <= u[good, t:t + 1]).sum(axis=1)
        a_idx[:, t] = a
        controls[:, t] = np.where(good[:, None], acts[np.maximum(a, 0)], zero)
        states[:, t + 1] = model.step(states[:, t], controls[:, t], policy.dt)
    idx, ok = grid.cells_of(states[:, T])
    cells[:, T] = np.where(ok, policy.levels[T].index_of(grid.keys(idx)), -1)
    drifted |= cells[:, T] < 0
    return SampleBatch(states=states, controls=controls, kind="cuniform", seed=seed, dt=policy.dt,
                       action_index=a_idx, cells=cells, drift=int(drifted.sum()), meta={"snap": False})


def _noise_rollout(model: SystemModel, x0, controls, dt):
    K, T, _ = controls.shape
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (K, model.state_dim))
    if isinstance(model, DubinsCar):
        return kernels.dubins_rollout(x0, controls[..., 0], model.v, dt)
    states = np.empty((K, T + 1, model.state_dim))
    states[:, 0] = x0
    for t in range(T):
        states[:, t + 1] = model.step(states[:, t], controls[:, t], dt)
    return states


def _nominal(model: SystemModel, nominal_U, T: int) -> np.ndarray:
    if nominal_U is None:
        return np.zeros((T, model.control_dim))
    U = np.asarray(nominal_U, dtype=float).reshape(-1, model.control_dim)
    if len(U) < T:
        raise ValueError(f"nominal sequence has {len(U)} steps, need {T}")
    return U[:T]


def sample_gaussian(model: SystemModel, x0, nominal_U, sigma_u, T_steps: int, K: int, seed: int = 0,
                    dt: float = 0.2) -> SampleBatch:
    """``u_t = clip(nominal_t + eps_t)``, ``eps_t ~ N(0, sigma_u)`` i.i.d."""
    var = NoiseConfig(sigma_u).sigma_u
    U0 = _nominal(model, nominal_U, T_steps)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((K, T_steps, model.control_dim)) * np.sqrt(var)
    controls = model.clip(U0[None] + eps)
    states = _noise_rollout(model, x0, controls, dt)
    return SampleBatch(states=states, controls=controls, kind="gaussian", seed=seed, dt=dt,
                       meta={"sigma_u": var, "noise": eps})


def sample_lognormal(model: SystemModel, x0, nominal_U, sigma_u, T_steps: int, K: int, seed: int = 0,
                     dt: float = 0.2, sigma_ln: float = SIGMA_LN) -> SampleBatch:
    """Normal/log-normal product noise: ``eps = eta * exp(zeta)``.

    ``eta ~ N(0, sigma_u)`` uses the same stream as :func:`sample_gaussian`;
    ``zeta ~ N(0, sigma_ln**2)`` comes from a second stream keyed on
    ``(seed, 1)``.  With ``sigma_ln = 0`` the batch equals the Gaussian one.
    """
    var = NoiseConfig(sigma_u, kind="lognormal").sigma_u
    if sigma_ln < 0:
        raise ValueError("sigma_ln must be non-negative")
    U0 = _nominal(model, nominal_U, T_steps)
    shape = (K, T_steps, model.control_dim)
    eta = np.random.default_rng(seed).standard_normal(shape) * np.sqrt(var)
    zeta = np.random.default_rng([seed, 1]).standard_normal(shape)
    eps = eta * np.exp(zeta * sigma_ln)
    controls = model.clip(U0[None] + eps)
    states = _noise_rollout(model, x0, controls, dt)
    return SampleBatch(states=states, controls=controls, kind="lognormal", seed=seed, dt=dt,
                       meta={"sigma_u": var, "sigma_ln": sigma_ln, "noise": eps})


def level_histograms(batch: SampleBatch, policy: PolicyTable) -> list[np.ndarray]:
    """Per-level visit counts over the cells of ``L_t`` (drifted samples dropped)."""
    grid = policy.grid
    out = []
    for t in range(batch.T + 1):
        if batch.cells is not None:
            rows = batch.cells[:, t]
        else:
            idx, ok = grid.cells_of(batch.states[:, t])
            rows = np.where(ok, policy.levels[t].index_of(grid.keys(idx)), -1)
        rows = rows[rows >= 0]
        out.append(np.bincount(rows, minlength=len(policy.levels[t])))
    return out


def tv_to_uniform(counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=float)
    p = counts / counts.sum()
    return 0.5 * float(np.abs(p - 1.0 / len(p)).sum())


def batch_json(batch: SampleBatch) -> str:
    return json.dumps(batch.to_json())
