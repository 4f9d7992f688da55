"""Experiment configuration: a JSON document merged over the checked-in defaults."""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

import numpy as np

from ._defaults import defaults
from .controller import CostConfig
from .dynamics import SystemModel, model_from_config
from .errors import ConfigError
from .gridspace import GridSpec

SECTIONS = ("model", "grid", "horizon", "precompute", "sampler", "controller", "coverage", "simulate",
            "environment", "seed")


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and k != "variance_labels":
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _steps(T: float, dt: float, what: str) -> int:
    n = round(T / dt)
    if n < 1 or not math.isclose(n * dt, T, rel_tol=0, abs_tol=1e-9):
        raise ConfigError(f"{what}: T={T} is not an integer multiple of dt={dt}")
    return n


class ExperimentConfig:
    """Validated view of a merged configuration document.

    Walker configs usually override ``model`` (``kind: walker``), ``grid`` (one
    dimension) and ``precompute.x0``.
    """

    def __init__(self, doc: dict | None = None, base_dir: str | Path | None = None):
        self.doc = _merge(defaults(), doc or {})
        self.base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        self._validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        try:
            doc = json.loads(p.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {p} not found") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {p} is not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        return cls(doc, base_dir=p.parent)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.doc)

    def dumps(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True)

    def _validate(self):
        d = self.doc
        try:
            self._model = model_from_config(d["model"])
            self._grid = GridSpec(delta=d["grid"]["delta"], lower=d["grid"]["lower"], upper=d["grid"]["upper"],
                                  angular=d["grid"]["angular"])
        except (ValueError, TypeError, KeyError) as e:
            raise ConfigError(f"invalid model/grid section: {e}") from None
        if self._grid.dim != self._model.state_dim:
            raise ConfigError(f"grid has {self._grid.dim} dimensions, model state has {self._model.state_dim}")
        if int(d["model"]["n_actions"]) < 1:
            raise ConfigError("model.n_actions must be >= 1")
        if not d["horizon"]["dt"] > 0:
            raise ConfigError("horizon.dt must be positive")
        self._N = _steps(d["horizon"]["T"], d["horizon"]["dt"], "horizon")
        _steps(d["coverage"]["T"], d["horizon"]["dt"], "coverage")
        if len(d["precompute"]["x0"]) != self._model.state_dim:
            raise ConfigError("precompute.x0 has the wrong dimension")
        if int(d["precompute"]["n_samples"]) < 1:
            raise ConfigError("precompute.n_samples must be >= 1")
        s = d["sampler"]
        if s["kind"] not in ("cuniform", "gaussian", "lognormal"):
            raise ConfigError(f"unknown sampler kind {s['kind']!r}")
        labels = s["variance_labels"]
        if isinstance(s["sigma_u"], str) and s["sigma_u"] not in labels:
            raise ConfigError(f"unknown variance label {s['sigma_u']!r}")
        if not isinstance(s["sigma_u"], str) and not s["sigma_u"] > 0:
            raise ConfigError("sampler.sigma_u must be positive")
        if s["sigma_ln"] < 0 or int(s["K"]) < 1:
            raise ConfigError("sampler.sigma_ln must be >= 0 and sampler.K >= 1")
        if not d["controller"]["temperature"] > 0:
            raise ConfigError("controller.temperature must be positive")
        if d["environment"] is not None and not self.environment_path.is_file():
            raise ConfigError(f"environment file {self.environment_path} does not exist")
        if not isinstance(d["seed"], int):
            raise ConfigError("seed must be an integer")

    # --- derived objects

    @property
    def model(self) -> SystemModel:
        return self._model

    @property
    def grid(self) -> GridSpec:
        return self._grid

    @property
    def actions(self) -> np.ndarray:
        return self._model.action_grid(int(self.doc["model"]["n_actions"]))

    @property
    def dt(self) -> float:
        return float(self.doc["horizon"]["dt"])

    @property
    def N(self) -> int:
        return self._N

    @property
    def coverage_steps(self) -> int:
        return _steps(self.doc["coverage"]["T"], self.dt, "coverage")

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def x0(self) -> np.ndarray:
        return np.asarray(self.doc["precompute"]["x0"], dtype=float)

    @property
    def environment_path(self) -> Path | None:
        e = self.doc["environment"]
        if e is None:
            return None
        p = Path(e)
        return p if p.is_absolute() else self.base_dir / p

    def sigma(self, label) -> float:
        if isinstance(label, str):
            return float(self.doc["sampler"]["variance_labels"][label])
        return float(label)

    def policy_hash(self) -> str:
        from .policyio import policy_hash

        return policy_hash(self._model.config(), self._grid, self.actions, self.dt)

    def cost_config(self, goal) -> CostConfig:
        c = self.doc["controller"]
        return CostConfig(goal=goal, temperature=c["temperature"], T=self.doc["horizon"]["T"], dt=self.dt,
                          goal_tolerance=c["goal_tolerance"])
