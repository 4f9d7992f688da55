"""Environments, collision queries, coverage and the closed-loop experiment suites."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .controller import CostConfig, RunRecord, run_controller
from .dynamics import SystemModel
from .gridspace import GridSpec
from .levelsets import LevelSet
from .sampler import SampleBatch, sample_cuniform, sample_gaussian, sample_lognormal

SUDDEN_START = (0.0, 0.0, 0.0)
SUDDEN_GOAL = (8.0, 0.0)
SUDDEN_OBSTACLE_X = 4.0
SUDDEN_RADIUS = 0.5
SUDDEN_TIME_LIMIT = 15.0


@dataclass(frozen=True)
class Obstacle:
    kind: str  # "circle" or "rect"
    params: tuple  # circle: (cx, cy, r); rect: (xmin, ymin, xmax, ymax)
    appearance_time: float = 0.0

    def __post_init__(self):
        if self.kind == "circle":
            if len(self.params) != 3 or not self.params[2] > 0:
                raise ValueError(f"bad circle {self.params}")
        elif self.kind == "rect":
            if len(self.params) != 4 or not (self.params[0] < self.params[2] and self.params[1] < self.params[3]):
                raise ValueError(f"bad rectangle {self.params}")
        else:
            raise ValueError(f"unknown obstacle kind {self.kind!r}")

    def contains(self, pos) -> np.ndarray:
        p = np.asarray(pos, dtype=float)
        x, y = p[..., 0], p[..., 1]
        if self.kind == "circle":
            cx, cy, r = self.params
            return (x - cx) ** 2 + (y - cy) ** 2 <= r * r
        x0, y0, x1, y1 = self.params
        return (x0 <= x) & (x < x1) & (y0 <= y) & (y < y1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "appearance_time": self.appearance_time}

    @classmethod
    def from_dict(cls, d: dict) -> "Obstacle":
        return cls(d["kind"], tuple(float(v) for v in d["params"]), float(d.get("appearance_time", 0.0)))


@dataclass
class Environment:
    obstacles: list[Obstacle]
    goal: tuple[float, float]
    bounds: tuple[tuple[float, float], tuple[float, float]]  # ((xmin, ymin), (xmax, ymax))
    time_limit: float
    name: str = ""
    start: tuple[float, float, float] | None = None
    # (xmin, ymin, xmax, ymax, theta_min, theta_max) for randomized starts
    start_region: tuple | None = None

    def __post_init__(self):
        self.obstacles = list(self.obstacles)
        self.goal = tuple(float(v) for v in self.goal)
        (bx0, by0), (bx1, by1) = self.bounds
        for ob in self.obstacles:
            if ob.contains(self.goal):
                raise ValueError(f"goal {self.goal} lies inside obstacle {ob}")
            if ob.kind == "circle":
                cx, cy, r = ob.params
                box = (cx - r, cy - r, cx + r, cy + r)
            else:
                box = ob.params
            if box[0] < bx0 or box[1] < by0 or box[2] > bx1 or box[3] > by1:
                raise ValueError(f"obstacle {ob} leaves the workspace bounds")
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")

    def visible(self, clock: float) -> tuple[np.ndarray, np.ndarray]:
        """``(circles (M, 3), rects (R, 4))`` of obstacles visible at ``clock``."""
        circ = [ob.params for ob in self.obstacles if ob.kind == "circle" and ob.appearance_time <= clock]
        rect = [ob.params for ob in self.obstacles if ob.kind == "rect" and ob.appearance_time <= clock]
        return np.asarray(circ, dtype=float).reshape(-1, 3), np.asarray(rect, dtype=float).reshape(-1, 4)

    def collides(self, pos, clock: float) -> np.ndarray:
        p = np.asarray(pos, dtype=float)
        hit = np.zeros(p.shape[:-1], dtype=bool)
        for ob in self.obstacles:
            if ob.appearance_time <= clock:
                hit |= ob.contains(p)
        return hit

    def with_obstacles(self, obstacles) -> "Environment":
        return Environment(list(obstacles), self.goal, self.bounds, self.time_limit, self.name, self.start,
                           self.start_region)

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "obstacles": [ob.to_dict() for ob in self.obstacles],
            "goal": list(self.goal),
            "bounds": [list(self.bounds[0]), list(self.bounds[1])],
            "time_limit": self.time_limit,
        }
        if self.start is not None:
            d["start"] = list(self.start)
        if self.start_region is not None:
            d["start_region"] = list(self.start_region)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        b = d["bounds"]
        return cls(
            obstacles=[Obstacle.from_dict(o) for o in d.get("obstacles", [])],
            goal=tuple(d["goal"]),
            bounds=((float(b[0][0]), float(b[0][1])), (float(b[1][0]), float(b[1][1]))),
            time_limit=float(d["time_limit"]),
            name=d.get("name", ""),
            start=tuple(float(v) for v in d["start"]) if d.get("start") is not None else None,
            start_region=tuple(float(v) for v in d["start_region"]) if d.get("start_region") is not None else None,
        )


def load_environment(path_or_name) -> Environment:
    """Load an environment file, or a bundled one by name (``u_shaped``, ``rectangular``)."""
    p = Path(str(path_or_name))
    if p.suffix != ".json":
        p = resources.files("cuniform") / "data" / "environments" / f"{path_or_name}.json"
        if not p.is_file():
            raise FileNotFoundError(f"no bundled environment named {path_or_name!r}")
    return Environment.from_dict(json.loads(p.read_text()))


def save_environment(env: Environment, path) -> None:
    Path(path).write_text(json.dumps(env.to_dict(), indent=2))


def collision(s, env: Environment, clock: float) -> bool:
    """True iff the position of ``s`` is inside an obstacle visible at ``clock``."""
    return bool(env.collides(np.asarray(s, dtype=float)[:2], clock))


# --------------------------------------------------------------------------
# coverage


@dataclass
class CoverageReport:
    sampler: str
    K: int
    covered: int
    total: int
    per_level: list[int]
    union_covered: int
    union_total: int

    @property
    def percentage(self) -> float:
        return 100.0 * self.covered / self.total

    @property
    def union_percentage(self) -> float:
        return 100.0 * self.union_covered / self.union_total

    def to_dict(self) -> dict:
        return {
            "sampler": self.sampler,
            "K": self.K,
            "covered": self.covered,
            "total": self.total,
            "percentage": self.percentage,
            "per_level": self.per_level,
            "union_covered": self.union_covered,
            "union_total": self.union_total,
        }


def coverage(batch: SampleBatch, spec: GridSpec, levels: list[LevelSet], sampler: str | None = None) -> CoverageReport:
    """Distinct ``(t, cell)`` pairs hit by the batch, counting only cells of ``L_t``."""
    T = batch.states.shape[1] - 1
    if T >= len(levels):
        raise ValueError(f"batch horizon {T} exceeds the {len(levels) - 1} available levels")
    per_level = []
    union_keys = []
    for t in range(T + 1):
        idx, ok = spec.cells_of(batch.states[:, t])
        keys = spec.keys(idx[ok])
        keys = np.unique(keys[levels[t].index_of(keys) >= 0])
        per_level.append(int(len(keys)))
        union_keys.append(keys)
    all_keys = np.unique(np.concatenate([lv.keys for lv in levels[:T + 1]]))
    return CoverageReport(
        sampler=sampler or batch.kind,
        K=batch.K,
        covered=int(sum(per_level)),
        total=int(sum(len(lv) for lv in levels[:T + 1])),
        per_level=per_level,
        union_covered=int(len(np.unique(np.concatenate(union_keys)))),
        union_total=int(len(all_keys)),
    )


COVERAGE_COLUMNS = ("MPPI Low", "MPPI Medium", "MPPI High", "log-MPPI Low", "log-MPPI Medium", "log-MPPI High",
                    "C-Uniform")


def coverage_row(policy, K: int, T_steps: int, seed: int, sigmas: dict, sigma_ln: float) -> dict[str, CoverageReport]:
    """Coverage of every sampler column at one ``K`` and seed.

    Baselines start at the policy origin with a zero nominal sequence.  All
    samplers draw prefix-nested batches, so coverage is monotone in ``K``.
    """
    model, x0 = policy.model, policy.origin
    levels = policy.levels
    out = {}
    for label in ("low", "medium", "high"):
        b = sample_gaussian(model, x0, None, sigmas[label], T_steps, K, seed, policy.dt)
        out[f"MPPI {label.capitalize()}"] = coverage(b, policy.grid, levels, "gaussian")
    for label in ("low", "medium", "high"):
        b = sample_lognormal(model, x0, None, sigmas[label], T_steps, K, seed, policy.dt, sigma_ln)
        out[f"log-MPPI {label.capitalize()}"] = coverage(b, policy.grid, levels, "lognormal")
    b = sample_cuniform(policy, T_steps=T_steps, K=K, seed=seed)
    out["C-Uniform"] = coverage(b, policy.grid, levels, "cuniform")
    return out


# --------------------------------------------------------------------------
# closed-loop suites


@dataclass
class SuiteResult:
    success_rate: float
    runs: list[RunRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def successes(self) -> int:
        return sum(r.outcome == "success" for r in self.runs)

    def to_dict(self, trajectories: bool = False) -> dict:
        return {
            "success_rate": self.success_rate,
            "successes": self.successes,
            "trials": len(self.runs),
            "meta": self.meta,
            "runs": [r.to_dict(trajectory=trajectories) for r in self.runs],
        }


def trial_seed(seed: int, i: int) -> int:
    """Base seed of trial ``i``, shared by every sampler kind (paired trials)."""
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


def sudden_environment(offset: float, appearance_time: float | None, radius: float = SUDDEN_RADIUS) -> Environment:
    """Straight start-to-goal run with one circle centred ``offset`` off the line.

    ``appearance_time=None`` removes the obstacle entirely.
    """
    obs = [] if appearance_time is None else [
        Obstacle("circle", (SUDDEN_OBSTACLE_X, float(offset), radius), float(appearance_time))]
    return Environment(obs, SUDDEN_GOAL, ((-2.0, -6.0), (12.0, 6.0)), SUDDEN_TIME_LIMIT, name="sudden",
                       start=SUDDEN_START)


def sudden_offsets(trials: int, seed: int, radius: float = SUDDEN_RADIUS) -> np.ndarray:
    return np.random.default_rng([seed, 7]).uniform(-radius, radius, trials)


def sudden_obstacle_suite(appearance_time, K: int, sampler_kind: str, trials: int = 20, seed: int = 0, *,
                          model: SystemModel | None = None, policy=None, sigma_u="low", cfg: CostConfig | None = None,
                          **kw) -> SuiteResult:
    """Success rate over ``trials`` obstacle placements.

    ``appearance_time`` 0 means fully visible; ``None`` runs without any
    obstacle.  Placements and per-trial seeds depend only on ``seed``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    offsets = sudden_offsets(trials, seed)
    runs = []
    for i in range(trials):
        env = sudden_environment(offsets[i], appearance_time)
        runs.append(run_controller(model, env, policy if sampler_kind == "cuniform" else sigma_u, sampler_kind,
                                   env.start, cfg, K, env.time_limit, trial_seed(seed, i), **kw))
    sr = sum(r.outcome == "success" for r in runs) / trials
    return SuiteResult(sr, runs, {"suite": "sudden", "appearance_time": appearance_time, "K": K,
                                  "sampler": sampler_kind, "seed": seed, "offsets": offsets.tolist()})


def cluttered_starts(env: Environment, starts: int, seed: int) -> np.ndarray:
    """Random start poses in ``env.start_region``, rejecting those in obstacles."""
    if env.start_region is None:
        if env.start is None:
            raise ValueError(f"environment {env.name!r} has no start or start_region")
        return np.tile(np.asarray(env.start, dtype=float), (starts, 1))
    x0, y0, x1, y1, th0, th1 = env.start_region
    rng = np.random.default_rng([seed, 11])
    out = []
    while len(out) < starts:
        p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1), rng.uniform(th0, th1) % (2 * np.pi)])
        if not env.collides(p[:2], np.inf):
            out.append(p)
    return np.asarray(out)


def cluttered_suite(env_name, K: int, sampler_kind: str, starts: int = 10, seed: int = 0, *,
                    model: SystemModel | None = None, policy=None, sigma_u="low", cfg: CostConfig | None = None,
                    **kw) -> SuiteResult:
    """Success rate over ``starts`` paired start poses in a cluttered map."""
    env = env_name if isinstance(env_name, Environment) else load_environment(env_name)
    poses = cluttered_starts(env, starts, seed)
    runs = []
    for i, x0 in enumerate(poses):
        runs.append(run_controller(model, env, policy if sampler_kind == "cuniform" else sigma_u, sampler_kind,
                                   x0, cfg, K, env.time_limit, trial_seed(seed, i), **kw))
    sr = sum(r.outcome == "success" for r in runs) / starts
    return SuiteResult(sr, runs, {"suite": "cluttered", "env": env.name, "K": K, "sampler": sampler_kind,
                                  "seed": seed, "starts": poses.tolist()})
