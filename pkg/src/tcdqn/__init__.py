"""Adaptive traffic-signal control with a distributional, noisy, dueling double DQN.

Pure numpy: a single-intersection microsimulator, the reward shaping, the
Q-network with hand-written backprop, prioritized replay, the agent, classic
baselines and an experiment harness.
"""
from .agent import TOGGLES, Agent, AgentConfig, categorical_project, epsilon_at
from .baselines import FixedTimePlan, SotlParams, ft_next_action, sotl_next_action
from .config import RunConfig, load_config
from .env import SignalEnv, scenario_flow
from .neural import Adam, QNetwork, Support, load_checkpoint, save_checkpoint
from .replay import PriorityBuffer, SumTree, Transition, UniformBuffer
from .reward import RewardParams, action_reward, episodic_reward, total_reward
from .sim import IntersectionSpec, SignalTimings, Simulator, archetype

__version__ = "0.1.0"

__all__ = [
    "TOGGLES", "Agent", "AgentConfig", "categorical_project", "epsilon_at",
    "FixedTimePlan", "SotlParams", "ft_next_action", "sotl_next_action",
    "RunConfig", "load_config", "SignalEnv", "scenario_flow",
    "Adam", "QNetwork", "Support", "load_checkpoint", "save_checkpoint",
    "PriorityBuffer", "SumTree", "Transition", "UniformBuffer",
    "RewardParams", "action_reward", "episodic_reward", "total_reward",
    "IntersectionSpec", "SignalTimings", "Simulator", "archetype",
]
