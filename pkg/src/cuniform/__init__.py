"""C-Uniform trajectory sampling.

Precompute per-level action distributions that make every reachable level
set uniformly sampled (one exact max flow per level transition), then use
them as the sampler of an MPPI-style receding-horizon controller.
"""

from ._accel import backend_name, numba_enabled, use_numba
from .config import ExperimentConfig
from .controller import CostConfig, RunRecord, mppi_weights, run_controller, synthesize_control, trajectory_cost
from .dynamics import DubinsCar, RandomWalker, Trajectory, rollout, step_dubins, step_walker
from .errors import (AllCollidingError, ConfigError, CUniformError, DeadLevelError, IncompatiblePolicyError,
                     InadmissibleControlError, OutOfDomainError)
from .gridspace import GridSpec, cell_of, midpoint_of, sample_in_cell
from .levelsets import EdgeRecord, LevelSet, build_all_levels, expand_level
from .policyio import load_policy, save_policy
from .sampler import NoiseConfig, SampleBatch, sample_cuniform, sample_gaussian, sample_lognormal
from .simworld import CoverageReport, Environment, Obstacle, collision, coverage, cluttered_suite, sudden_obstacle_suite
from .uniformflow import (FlowNetwork, PolicyTable, build_flow_network, closed_form_1d, extract_policy, max_flow,
                          precompute)

__version__ = "0.1.0"
