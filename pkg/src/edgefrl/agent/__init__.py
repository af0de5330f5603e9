from .buffer import DiversityBuffer, EpisodeBuffer, diversity_score
from .iagent import AGENT_MODES, LEARNING_MODES, IAgent, UpdateEvent
from .learning import (
    action_penalty,
    compute_gae,
    compute_reward,
    policy_loss,
    probability_ratios,
    total_loss,
    update,
    value_loss,
)
from .network import BACKBONE_LAYERS, CASCADE_HEADS, AgentNetwork, decide
from .types import STATE_DIM, STATE_FIELDS, Action, ActionSpaceSpec, Experience, LossReport, State, TrainConfig

__all__ = [
    "AGENT_MODES", "LEARNING_MODES", "BACKBONE_LAYERS", "CASCADE_HEADS", "STATE_DIM", "STATE_FIELDS",
    "Action", "ActionSpaceSpec", "AgentNetwork", "DiversityBuffer", "EpisodeBuffer", "Experience",
    "IAgent", "LossReport", "State", "TrainConfig", "UpdateEvent",
    "action_penalty", "compute_gae", "compute_reward", "decide", "diversity_score", "policy_loss",
    "probability_ratios", "total_loss", "update", "value_loss",
]
