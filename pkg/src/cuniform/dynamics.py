"""Discrete-time system models and trajectory rollout.

Two models ship with the package: a 1D random walker (``x' = x + u dt``) and
a fixed-speed Dubins car integrated with forward Euler.  Both expose the same
small contract (:class:`SystemModel`) so level-set construction, sampling and
control never branch on the model kind.

All ``step`` methods are vectorized over leading axes: ``states`` has shape
``(..., state_dim)`` and ``controls`` has shape ``(..., control_dim)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._defaults import DUBINS_SPEED
from .errors import InadmissibleControlError

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Normalize angles to ``[0, 2*pi)``; works on scalars and arrays."""
    out = np.mod(theta, TWO_PI)
    # np.mod(-1e-18, 2pi) rounds to exactly 2pi
    out = np.where(out >= TWO_PI, 0.0, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


class SystemModel:
    """Deterministic model ``x_{t+1} = F(x_t, u_t)``.

    Subclasses set ``state_dim``, ``control_dim``, ``control_lower``,
    ``control_upper``, ``angular`` and ``state_names`` and implement
    :meth:`step`.
    """

    kind: str = "abstract"
    state_dim: int
    control_dim: int
    control_lower: np.ndarray
    control_upper: np.ndarray
    angular: tuple[bool, ...]
    state_names: tuple[str, ...]

    def step(self, states: np.ndarray, controls: np.ndarray, dt: float) -> np.ndarray:
        raise NotImplementedError

    def config(self) -> dict:
        raise NotImplementedError

    def is_admissible(self, controls) -> np.ndarray:
        c = np.asarray(controls, dtype=float)
        return np.all((c >= self.control_lower) & (c <= self.control_upper), axis=-1)

    def clip(self, controls) -> np.ndarray:
        return np.clip(np.asarray(controls, dtype=float), self.control_lower, self.control_upper)

    def zero_control(self) -> np.ndarray:
        return self.clip(np.zeros(self.control_dim))

    def action_grid(self, count: int) -> np.ndarray:
        """``count`` equally spaced controls spanning the admissible box.

        Only single-input models are supported; the result has shape
        ``(count, 1)``.
        """
        if self.control_dim != 1:
            raise NotImplementedError("action_grid supports scalar controls only")
        if count < 1:
            raise ValueError("count must be >= 1")
        if count == 1:
            return self.zero_control().reshape(1, 1)
        return np.linspace(self.control_lower[0], self.control_upper[0], count).reshape(-1, 1)


@dataclass(frozen=True)
class RandomWalker(SystemModel):
    """1D walker, ``x' = x + u dt`` with ``u`` in ``[u_min, u_max]``."""

    u_min: float = -1.0
    u_max: float = 1.0

    kind = "walker"
    state_dim = 1
    control_dim = 1
    angular = (False,)
    state_names = ("x",)

    @property
    def control_lower(self):
        return np.array([self.u_min])

    @property
    def control_upper(self):
        return np.array([self.u_max])

    def step(self, states, controls, dt):
        return np.asarray(states, dtype=float) + np.asarray(controls, dtype=float) * dt

    def config(self):
        return {"kind": self.kind, "control_lower": [self.u_min], "control_upper": [self.u_max]}


@dataclass(frozen=True)
class DubinsCar(SystemModel):
    """Fixed-speed Dubins car with state ``(x, y, theta)`` and control ``omega``.

    Forward Euler: the position update uses the heading *before* the turn,
    so one step moves along a straight chord of length ``v * dt``.
    """

    v: float = DUBINS_SPEED
    omega_min: float = -1.5
    omega_max: float = 1.5

    kind = "dubins"
    state_dim = 3
    control_dim = 1
    angular = (False, False, True)
    state_names = ("x", "y", "theta")

    def __post_init__(self):
        if not self.v > 0:
            raise ValueError("speed v must be positive")
        if not self.omega_min < self.omega_max:
            raise ValueError("omega_min must be < omega_max")

    @property
    def control_lower(self):
        return np.array([self.omega_min])

    @property
    def control_upper(self):
        return np.array([self.omega_max])

    def step(self, states, controls, dt):
        s = np.asarray(states, dtype=float)
        w = np.asarray(controls, dtype=float)[..., 0]
        theta = s[..., 2]
        out = np.empty(np.broadcast_shapes(s.shape, w.shape + (3,)))
        out[..., 0] = s[..., 0] + self.v * np.cos(theta) * dt
        out[..., 1] = s[..., 1] + self.v * np.sin(theta) * dt
        out[..., 2] = wrap_angle(theta + w * dt)
        return out

    def config(self):
        return {
            "kind": self.kind,
            "v": self.v,
            "control_lower": [self.omega_min],
            "control_upper": [self.omega_max],
        }

    def anchor(self, states: np.ndarray, origin: np.ndarray, target: np.ndarray) -> np.ndarray:
        """Rigidly move ``states`` so that ``origin`` lands on ``target``.

        The Euler step commutes with planar rotations plus translations, so a
        trajectory rolled out from ``origin`` maps onto one rolled out from
        ``target`` with the same controls.
        """
        s = np.asarray(states, dtype=float)
        phi = float(target[2]) - float(origin[2])
        c, sn = math.cos(phi), math.sin(phi)
        dx = s[..., 0] - origin[0]
        dy = s[..., 1] - origin[1]
        out = np.empty_like(s)
        out[..., 0] = target[0] + c * dx - sn * dy
        out[..., 1] = target[1] + sn * dx + c * dy
        out[..., 2] = wrap_angle(s[..., 2] + phi)
        return out


def model_from_config(cfg: dict) -> SystemModel:
    kind = cfg.get("kind", "dubins")
    lo = cfg.get("control_lower")
    hi = cfg.get("control_upper")
    if kind == "walker":
        return RandomWalker(u_min=float(lo[0]) if lo else -1.0, u_max=float(hi[0]) if hi else 1.0)
    if kind == "dubins":
        return DubinsCar(
            v=float(cfg.get("v", DUBINS_SPEED)),
            omega_min=float(lo[0]) if lo else -1.5,
            omega_max=float(hi[0]) if hi else 1.5,
        )
    raise ValueError(f"unknown model kind {kind!r}")


def step_walker(x: float, u: float, dt: float) -> float:
    if not abs(u) <= 1.0:
        raise InadmissibleControlError(f"|u| = {abs(u)} exceeds 1")
    return x + u * dt


def step_dubins(s, omega: float, dt: float, v: float = DUBINS_SPEED,
                omega_bounds: tuple[float, float] = (-1.5, 1.5)) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if not (np.all(np.isfinite(s)) and math.isfinite(omega) and math.isfinite(dt) and math.isfinite(v)):
        raise ValueError("non-finite input to step_dubins")
    if not omega_bounds[0] <= omega <= omega_bounds[1]:
        raise InadmissibleControlError(f"omega={omega} outside {omega_bounds}")
    if dt <= 0 or v <= 0:
        raise ValueError("dt and v must be positive")
    return DubinsCar(v=v, omega_min=omega_bounds[0], omega_max=omega_bounds[1]).step(s, np.array([omega]), dt)


@dataclass
class Trajectory:
    states: np.ndarray  # (T+1, state_dim)
    controls: np.ndarray  # (T, control_dim)
    dt: float
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.controls)


def rollout(model: SystemModel, x0, controls, dt: float) -> Trajectory:
    """Apply ``controls`` one after another starting from ``x0``."""
    U = np.asarray(controls, dtype=float).reshape(-1, model.control_dim)
    x = np.asarray(x0, dtype=float).reshape(model.state_dim)
    if any(model.angular):
        x = x.copy()
        x[list(model.angular)] = wrap_angle(x[list(model.angular)])
    states = np.empty((len(U) + 1, model.state_dim))
    states[0] = x
    ok = model.is_admissible(U)
    for t, u in enumerate(U):
        if not ok[t]:
            raise InadmissibleControlError(f"control {u.tolist()} at index {t} is outside the admissible box")
        states[t + 1] = model.step(states[t], u, dt)
    return Trajectory(states=states, controls=U.copy(), dt=dt)
