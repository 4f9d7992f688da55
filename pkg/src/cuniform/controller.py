"""Receding-horizon MPPI-style control with a pluggable trajectory sampler.

Each cycle samples ``K`` control sequences, rolls them out from the current
state, scores them, softmax-weights them with temperature ``lambda`` and
applies the first step of the weighted average.

Environments are duck-typed: anything with ``goal``, ``visible(clock)`` and
``collides(pos, clock)`` works (see :class:`cuniform.simworld.Environment`).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._defaults import DT, GOAL_TOLERANCE, HORIZON_T, MAX_BLOCKED_CYCLES, SIGMA_LN, TEMPERATURE
from .dynamics import DubinsCar, SystemModel, Trajectory
from .errors import AllCollidingError, ConfigError
from .sampler import NoiseConfig, SampleBatch, sample_cuniform, sample_gaussian, sample_lognormal
from .uniformflow import PolicyTable

SAMPLER_KINDS = ("cuniform", "gaussian", "lognormal")


@dataclass
class CostConfig:
    goal: tuple[float, float]
    temperature: float = TEMPERATURE
    T: float = HORIZON_T
    dt: float = DT
    goal_tolerance: float = GOAL_TOLERANCE
    # stop accruing cost once a sampled trajectory reaches the goal
    stop_at_goal: bool = True

    def __post_init__(self):
        self.goal = (float(self.goal[0]), float(self.goal[1]))
        if not self.temperature > 0:
            raise ConfigError("temperature must be positive")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        n = round(self.T / self.dt)
        if n < 1 or not math.isclose(n * self.dt, self.T, rel_tol=0, abs_tol=1e-9):
            raise ConfigError(f"horizon T={self.T} is not an integer multiple of dt={self.dt}")

    @property
    def N(self) -> int:
        return round(self.T / self.dt)


def trajectory_cost(traj: Trajectory, env, cfg: CostConfig, clock: float, stop_at_goal: bool = False) -> float:
    """Sum of squared goal distances over the states, ``inf`` if any state hits a visible obstacle.

    With ``stop_at_goal`` the states after the first one within the goal
    tolerance are ignored (the closed loop would have ended there).
    """
    return float(batch_costs(np.asarray(traj.states, dtype=float)[None], env, cfg, clock, stop_at_goal)[0])


def batch_costs(states: np.ndarray, env, cfg: CostConfig, clock: float, stop_at_goal: bool = False) -> np.ndarray:
    circles, rects = env.visible(clock)
    stop = cfg.goal_tolerance if stop_at_goal else -1.0
    return kernels.trajectory_costs(states[..., :2], np.asarray(cfg.goal), circles, rects, stop)


def mppi_weights(costs, temperature: float) -> np.ndarray:
    """``exp(-(S - S_min) / lambda)`` normalized; infinite costs get weight exactly 0."""
    S = np.asarray(costs, dtype=float)
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    finite = np.isfinite(S)
    if not finite.any():
        raise AllCollidingError("every sampled trajectory collides")
    w = np.zeros_like(S)
    w[finite] = np.exp(-(S[finite] - S[finite].min()) / temperature)
    return w / w.sum()


def synthesize_control(batch, weights, model: SystemModel | None = None) -> np.ndarray:
    """Per-step weighted average of the sampled control sequences, clamped."""
    U = batch.controls if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=float)
    w = np.asarray(weights, dtype=float)
    out = np.tensordot(w, U, axes=(0, 0))
    return out if model is None else model.clip(out)


@dataclass
class ControlCycleResult:
    applied: np.ndarray  # (q,)
    sequence: np.ndarray  # (T, q) weighted nominal
    costs: np.ndarray  # (K,)
    n_colliding: int
    wall_ms: float
    fallback: bool = False


@dataclass
class RunRecord:
    states: np.ndarray  # executed states, (cycles+1, p)
    controls: np.ndarray  # (cycles, q)
    outcome: str  # success | collision | timeout | blocked
    path_length_m: float
    cycles: int
    seed: int
    sampler: str
    K: int
    final_distance: float
    cycle_logs: list[ControlCycleResult] = field(default_factory=list)

    def to_dict(self, trajectory: bool = False, cycle_logs: bool = False) -> dict:
        d = {
            "outcome": self.outcome,
            "path_length_m": self.path_length_m,
            "cycles": self.cycles,
            "seed": self.seed,
            "sampler": self.sampler,
            "K": self.K,
            "final_distance": self.final_distance,
        }
        if trajectory:
            d["states"] = self.states.tolist()
            d["controls"] = self.controls.tolist()
        if cycle_logs:
            d["cycle_logs"] = [{"applied": c.applied.tolist(), "n_colliding": c.n_colliding,
                                "fallback": c.fallback, "wall_ms": c.wall_ms} for c in self.cycle_logs]
        return d


def _segment_distance(p, a, b) -> float:
    ab = b - a
    L2 = float(ab @ ab)
    s = 0.0 if L2 == 0 else min(1.0, max(0.0, float((p - a) @ ab) / L2))
    return float(np.linalg.norm(a + s * ab - p))


def cycle_seed(seed: int, cycle: int) -> int:
    return int(np.random.SeedSequence([seed, cycle]).generate_state(1)[0])


def _rollout(model: SystemModel, x, controls, dt) -> np.ndarray:
    K, T, _ = controls.shape
    x0 = np.broadcast_to(np.asarray(x, dtype=float), (K, model.state_dim))
    if isinstance(model, DubinsCar):
        return kernels.dubins_rollout(x0, controls[..., 0], model.v, dt)
    states = np.empty((K, T + 1, model.state_dim))
    states[:, 0] = x0
    for t in range(T):
        states[:, t + 1] = model.step(states[:, t], controls[:, t], dt)
    return states


def control_cycle(model: SystemModel, env, sampler_kind: str, source, x, nominal, cfg: CostConfig, K: int,
                  seed: int, clock: float, sigma_ln: float = SIGMA_LN) -> ControlCycleResult:
    """One sample / score / weight / synthesize step from state ``x``.

    C-Uniform sequences come from the policy's canonical origin and are
    rolled out from ``x``; the Euler step is equivariant under planar rigid
    motions, so this is the policy re-anchored at the current pose.
    Raises :class:`AllCollidingError` if no sample is collision-free.
    """
    t0 = time.perf_counter()
    N = cfg.N
    if sampler_kind == "cuniform":
        controls = sample_cuniform(source, T_steps=N, K=K, seed=seed).controls
    elif sampler_kind == "gaussian":
        controls = sample_gaussian(model, x, nominal, source.sigma_u, N, K, seed, cfg.dt).controls
    elif sampler_kind == "lognormal":
        controls = sample_lognormal(model, x, nominal, source.sigma_u, N, K, seed, cfg.dt, sigma_ln).controls
    else:
        raise ValueError(f"unknown sampler kind {sampler_kind!r}")
    states = _rollout(model, x, controls, cfg.dt)
    costs = batch_costs(states, env, cfg, clock, cfg.stop_at_goal)
    w = mppi_weights(costs, cfg.temperature)
    seq = synthesize_control(controls, w, model)
    return ControlCycleResult(applied=seq[0].copy(), sequence=seq, costs=costs,
                              n_colliding=int(np.isinf(costs).sum()), wall_ms=(time.perf_counter() - t0) * 1e3)


def run_controller(model: SystemModel | None, env, policy_or_noise, sampler_kind: str, x0, cfg: CostConfig | None,
                   K: int, time_limit: float | None = None, seed: int = 0, *, sigma_ln: float = SIGMA_LN,
                   max_blocked_cycles: int = MAX_BLOCKED_CYCLES, keep_logs: bool = False) -> RunRecord:
    """Closed loop until success, collision, timeout or too many all-colliding cycles.

    ``policy_or_noise`` is a :class:`PolicyTable` for ``cuniform`` and a
    :class:`NoiseConfig` (or a variance / variance label) otherwise.
    """
    if sampler_kind not in SAMPLER_KINDS:
        raise ValueError(f"unknown sampler kind {sampler_kind!r}")
    if sampler_kind == "cuniform":
        if not isinstance(policy_or_noise, PolicyTable):
            raise TypeError("the cuniform sampler needs a PolicyTable")
        source = policy_or_noise
        model = model or source.model
    else:
        source = policy_or_noise if isinstance(policy_or_noise, NoiseConfig) else NoiseConfig(policy_or_noise)
        model = model or DubinsCar()
    cfg = cfg or CostConfig(goal=env.goal)
    if sampler_kind == "cuniform" and cfg.N > source.N:
        raise ConfigError(f"controller horizon {cfg.N} exceeds the policy horizon {source.N}")
    limit = env.time_limit if time_limit is None else time_limit
    goal = np.asarray(cfg.goal, dtype=float)

    x = np.asarray(x0, dtype=float).copy()
    states = [x.copy()]
    applied = []
    logs = []
    nominal = np.zeros((cfg.N, model.control_dim))
    blocked = 0
    outcome = "timeout"
    clock = 0.0
    cycle = 0
    if np.linalg.norm(x[:2] - goal) <= cfg.goal_tolerance:
        outcome = "success"
    while outcome == "timeout" and clock < limit - 1e-9:
        try:
            res = control_cycle(model, env, sampler_kind, source, x, nominal, cfg, K, cycle_seed(seed, cycle),
                                clock, sigma_ln)
            blocked = 0
        except AllCollidingError:
            blocked += 1
            zero = model.zero_control()
            res = ControlCycleResult(applied=zero, sequence=np.tile(zero, (cfg.N, 1)), costs=np.full(K, np.inf),
                                     n_colliding=K, wall_ms=0.0, fallback=True)
        if keep_logs:
            logs.append(res)
        u = res.applied
        x_new = model.step(x, u, cfg.dt)
        clock = (cycle + 1) * cfg.dt
        cycle += 1
        applied.append(u)
        states.append(x_new)
        if env.collides(x_new[:2], clock):
            outcome = "collision"
        elif _segment_distance(goal, x[:2], x_new[:2]) <= cfg.goal_tolerance:
            outcome = "success"
        elif blocked >= max_blocked_cycles:
            outcome = "blocked"
        x = x_new
        nominal = np.vstack([res.sequence[1:], res.sequence[-1:]])

    S = np.asarray(states)
    path = float(np.linalg.norm(np.diff(S[:, :2], axis=0), axis=1).sum())
    return RunRecord(states=S, controls=np.asarray(applied).reshape(-1, model.control_dim), outcome=outcome,
                     path_length_m=path, cycles=cycle, seed=seed, sampler=sampler_kind, K=K,
                     final_distance=float(np.linalg.norm(S[-1, :2] - goal)), cycle_logs=logs)
