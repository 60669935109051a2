"""Continuous-time homeostatic reinforcement learning agent and its oracles."""

from .config import RunConfig, load_config
from .core import Zeta, drive, reward_from_transition, value_from_deviation
from .world import Action, WorldState, initial_state, step

__all__ = [
    "Action",
    "RunConfig",
    "WorldState",
    "Zeta",
    "drive",
    "initial_state",
    "load_config",
    "reward_from_transition",
    "step",
    "value_from_deviation",
]
__version__ = "0.1.0"
