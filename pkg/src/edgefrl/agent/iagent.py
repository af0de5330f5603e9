from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import OptimizerState
from .buffer import DiversityBuffer, EpisodeBuffer, diversity_score
from .learning import update
from .network import AgentNetwork, decide
from .types import Action, ActionSpaceSpec, Experience, LossReport, TrainConfig

LEARNING_MODES = ("learning", "blank", "single-head")
AGENT_MODES = LEARNING_MODES + ("frozen", "fixed")


@dataclass
class UpdateEvent:
    agent_id: str
    report: LossReport
    applied: bool


class IAgent:
    """One continual-learning agent attached to one pipeline stage.

    ``step`` is called once per decision interval with the freshly observed
    state and the reward earned by the previous action; it closes episodes,
    runs the gated update and returns the next action.
    """

    def __init__(self, agent_id: str, spec: ActionSpaceSpec, cfg: TrainConfig,
                 rng: np.random.Generator, mode: str = "learning", net: AgentNetwork | None = None):
        if mode not in AGENT_MODES:
            raise ValueError(f"unknown agent mode {mode!r}")
        self.agent_id = agent_id
        self.spec = spec
        self.cfg = cfg
        self.mode = mode
        self.rng = rng
        if net is None and mode != "fixed":
            net = AgentNetwork.initialize(spec, rng, single_head=(mode == "single-head"))
        self.net = net
        self.opt = OptimizerState(lr=cfg.lr, mode=cfg.optimizer)
        self.episode = EpisodeBuffer(cfg.n_steps)
        self.diversity = DiversityBuffer(cfg.buffer_capacity)
        self.pending: Experience | None = None
        self.awaiting = False
        self.history_states: list[np.ndarray] = []
        self.history_actions: list[Action] = []
        self.last_report: LossReport | None = None
        self.updates_applied = 0

    @property
    def learns(self) -> bool:
        return self.mode in LEARNING_MODES

    def step(self, state: np.ndarray, reward: float | None) -> tuple[Action, UpdateEvent | None]:
        event = None
        if self.pending is not None and reward is not None:
            if self.learns and not self.awaiting:
                exp = self.pending
                exp.reward = float(reward)
                self.episode.append(exp)
                self.diversity.insert(exp)
                if self.episode.full:
                    event = self.close_episode(state)
            self.pending = None

        if self.mode == "fixed":
            return self.spec.median_action(), event
        action, probs, value = decide(self.net, state, self.rng)
        if self.awaiting:
            self.history_states.append(np.asarray(state, dtype=np.float64))
            self.history_actions.append(action)
        elif self.learns:
            d = diversity_score(state, probs, self.diversity, self.cfg.alpha, self.cfg.beta)
            self.pending = Experience(np.asarray(state, dtype=np.float64), action, 0.0, value,
                                      tuple(np.array(p) for p in probs), d)
        return action, event

    def close_episode(self, next_state=None) -> UpdateEvent | None:
        """Run the gated update on whatever the episode holds and empty it."""
        if not self.learns or len(self.episode) == 0:
            self.episode.clear()
            return None
        bootstrap = 0.0
        if next_state is not None:
            bootstrap = float(self.net.forward(np.asarray(next_state, dtype=np.float64)).value)
        report, applied = update(self.net, self.episode.items, self.opt, self.cfg, bootstrap)
        self.episode.clear()
        self.last_report = report
        self.updates_applied += int(applied)
        return UpdateEvent(self.agent_id, report, applied)

    def begin_await(self) -> None:
        self.awaiting = True
        self.pending = None
        self.history_states = []
        self.history_actions = []

    def end_await(self, net: AgentNetwork) -> None:
        self.net = net
        self.awaiting = False
        self.pending = None
        self.episode.clear()
        self.history_states = []
        self.history_actions = []

    def head_losses(self) -> dict[str, float]:
        if self.last_report is None:
            return {h: 1.0 for h in self.net.head_names}
        return dict(self.last_report.head_policy)
