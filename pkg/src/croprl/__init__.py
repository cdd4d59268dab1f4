"""croprl: a desk-scale crop management reinforcement-learning testbed.

A surrogate daily-timestep maize simulator exposes three episodic tasks
(fertilization, irrigation, mixed); from-scratch DQN and PPO agents train
against them; Null and calendar-Expert baselines plus an evaluation
harness reproduce the comparison protocol shape.
"""

from .mdp import ActionSpace, Environment, StepResult, Trajectory, Transition, discounted_return
from .simulator import CropEnv, SimConfig, TaskMode, make_env

__version__ = "0.1.0"

__all__ = [
    "ActionSpace",
    "CropEnv",
    "Environment",
    "SimConfig",
    "StepResult",
    "TaskMode",
    "Trajectory",
    "Transition",
    "discounted_return",
    "make_env",
    "__version__",
]
