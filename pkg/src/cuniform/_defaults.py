"""Checked-in experiment defaults, loaded once from ``data/defaults.json``."""

import copy
import json
from importlib import resources

with resources.files(__package__).joinpath("data/defaults.json").open() as fh:
    _DEFAULTS = json.load(fh)

TEMPERATURE = _DEFAULTS["controller"]["temperature"]
GOAL_TOLERANCE = _DEFAULTS["controller"]["goal_tolerance"]
MAX_BLOCKED_CYCLES = _DEFAULTS["controller"]["max_blocked_cycles"]
HORIZON_T = _DEFAULTS["horizon"]["T"]
DT = _DEFAULTS["horizon"]["dt"]
DUBINS_SPEED = _DEFAULTS["model"]["v"]
SIGMA_LN = _DEFAULTS["sampler"]["sigma_ln"]
VARIANCE_LABELS = dict(_DEFAULTS["sampler"]["variance_labels"])


def defaults() -> dict:
    """Return a fresh deep copy of the defaults document."""
    return copy.deepcopy(_DEFAULTS)
