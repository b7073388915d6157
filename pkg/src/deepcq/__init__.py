"""Confidence-based Q-routing with a learned selective-broadcast policy.

Modules: ``tables`` (H/C routing state), ``mobility``, ``sim`` (slotted
simulator), ``policy`` (observation + shared MLP), ``trainer`` (multi-agent
PPO), ``metrics``, ``config`` and ``cli``.
"""

from .config import ConfigError, Flow, ScenarioConfig, parse_config
from .metrics import EpisodeMetrics, goodput, normalized_overhead
from .policy import PolicyWeights, init_weights, load_weights, save_weights
from .sim import Simulation, make_policy, run_episode
from .trainer import PPOConfig, RewardConfig, train

__version__ = "0.1.0"
