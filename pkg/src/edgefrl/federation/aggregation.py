"""Agent-specific aggregation.

Backbone and value layers are averaged equally with the server's stored
copy. Action heads are only comparable between agents whose heads have the
same shape, so the server keeps one bank entry per head shape and fuses each
bank with inverse-loss weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..agent.iagent import IAgent
from ..agent.network import BACKBONE_LAYERS, AgentNetwork
from ..agent.types import ActionSpaceSpec
from ..nn import PROB_FLOOR, GradientTape, Linear, backward, optimizer_step
from .selection import DeviceStats

LOSS_EPS = 1e-6


def bank_key(head_name: str, layer: Linear) -> str:
    return f"{head_name}:{layer.in_dim}x{layer.out_dim}"


def head_name_of(key: str) -> str:
    return key.split(":", 1)[0]


@dataclass
class ClientUpdate:
    agent_id: str
    backbone: dict[str, Linear]
    heads: dict[str, Linear]  # bank key -> head layer
    head_losses: dict[str, float]  # bank key -> recent policy-loss component
    dims: tuple[int, int, int] | None = None
    stats: DeviceStats | None = None
    bandwidth: float = 10.0
    payload_bytes: int = 0

    @classmethod
    def from_agent(cls, agent: IAgent, stats: DeviceStats | None = None, bandwidth: float = 10.0) -> "ClientUpdate":
        net = agent.net
        losses = agent.head_losses()
        heads, head_losses = {}, {}
        for name in net.head_names:
            key = bank_key(name, net.layers[name])
            heads[key] = net.layers[name].copy()
            head_losses[key] = float(losses.get(name, 1.0))
        return cls(agent.agent_id, {n: net.layers[n].copy() for n in BACKBONE_LAYERS}, heads, head_losses,
                   net.spec.dims, stats, bandwidth, len(net.to_bytes()))


@dataclass
class GlobalModel:
    backbone: dict[str, Linear]
    banks: dict[str, Linear] = field(default_factory=dict)

    @classmethod
    def from_network(cls, net: AgentNetwork) -> "GlobalModel":
        model = cls({n: net.layers[n].copy() for n in BACKBONE_LAYERS})
        model.register(net)
        return model

    def register(self, net: AgentNetwork) -> None:
        """Seed bank entries for head shapes the server has not seen yet."""
        for name in net.head_names:
            self.banks.setdefault(bank_key(name, net.layers[name]), net.layers[name].copy())

    def copy(self) -> "GlobalModel":
        return GlobalModel({k: v.copy() for k, v in self.backbone.items()},
                           {k: v.copy() for k, v in self.banks.items()})

    def network_for(self, spec: ActionSpaceSpec, single_head: bool = False) -> AgentNetwork:
        shapes = AgentNetwork.layer_shapes(spec, single_head)
        layers = {n: self.backbone[n].copy() for n in BACKBONE_LAYERS}
        for name, (i, o) in shapes.items():
            if name in layers:
                continue
            key = f"{name}:{i}x{o}"
            if key not in self.banks:
                raise KeyError(f"global model has no bank for {key}")
            layers[name] = self.banks[key].copy()
        return AgentNetwork(layers, spec, single_head)

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, group in (("backbone", self.backbone), ("bank", self.banks)):
            for k in sorted(group):
                out[f"{prefix}/{k}.weight"] = group[k].weight
                out[f"{prefix}/{k}.bias"] = group[k].bias
        return out

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, **self.to_arrays())


def inverse_loss_weights(losses: list[float]) -> np.ndarray:
    """Normalized ``1 / (loss + eps)``; negative losses count as zero."""
    inv = np.array([1.0 / (max(l, 0.0) + LOSS_EPS) for l in losses])
    return inv / inv.sum()


@dataclass
class AggregationResult:
    model: GlobalModel
    bank_weights: dict[str, dict[str, float]]


def aggregate(base: GlobalModel | None, updates: list[ClientUpdate]) -> AggregationResult:
    """Fuse client updates into a new global model; ``base`` is not modified.

    With ``base=None`` (first cloud sync) the stored copy is left out of
    every average.
    """
    if not updates:
        raise ValueError("aggregate needs at least one update")
    updates = sorted(updates, key=lambda u: u.agent_id)
    n = len(updates)
    new_backbone = {}
    for name in BACKBONE_LAYERS:
        w = sum(u.backbone[name].weight for u in updates)
        b = sum(u.backbone[name].bias for u in updates)
        if base is not None:
            w = w + base.backbone[name].weight
            b = b + base.backbone[name].bias
            new_backbone[name] = Linear(w / (n + 1), b / (n + 1))
        else:
            new_backbone[name] = Linear(w / n, b / n)

    banks = {} if base is None else {k: v.copy() for k, v in base.banks.items()}
    members: dict[str, list[ClientUpdate]] = {}
    for u in updates:
        for key in u.heads:
            members.setdefault(key, []).append(u)
    bank_weights = {}
    for key in sorted(members):
        group = members[key]
        w_hat = inverse_loss_weights([u.head_losses[key] for u in group])
        fused_w = sum(wi * u.heads[key].weight for wi, u in zip(w_hat, group))
        fused_b = sum(wi * u.heads[key].bias for wi, u in zip(w_hat, group))
        m = len(group)
        if base is not None and key in base.banks:
            prior = base.banks[key]
            fused_w = prior.weight / (m + 1) + (m / (m + 1)) * fused_w
            fused_b = prior.bias / (m + 1) + (m / (m + 1)) * fused_b
        banks[key] = Linear(np.asarray(fused_w, dtype=np.float64), np.asarray(fused_b, dtype=np.float64))
        bank_weights[key] = {u.agent_id: float(wi) for wi, u in zip(w_hat, group)}
    return AggregationResult(GlobalModel(new_backbone, banks), bank_weights)


def finetune_heads(net: AgentNetwork, states: list, actions: list, opt) -> float:
    """One optimizer step on the action heads towards the logged actions.

    The loss is the mean negative log-likelihood of the logged actions; the
    backbone and value head are frozen. Returns the loss before the step.
    """
    if not states:
        return 0.0
    x = np.stack([np.asarray(s, dtype=np.float64) for s in states])
    n = len(actions)
    idx = np.array([net.head_indices(a) for a in actions], dtype=np.int64)
    tape = GradientTape()
    prob_nodes, _ = net.forward_tape(tape, x)
    loss = 0.0
    grads_out = {}
    for h, node in enumerate(prob_nodes):
        p = tape.value(node)
        chosen = np.maximum(p[np.arange(n), idx[:, h]], PROB_FLOOR)
        loss += float(np.mean(-np.log(chosen)))
        g = np.zeros_like(p)
        g[np.arange(n), idx[:, h]] = -1.0 / (n * chosen)
        grads_out[node] = g
    grads = backward(tape, grads_out)
    for name in BACKBONE_LAYERS:
        grads.pop(name, None)
    optimizer_step(net.layers, grads, opt)
    return loss


def broadcast_and_finetune(agent: IAgent, model: GlobalModel) -> float:
    """Load the aggregated model into ``agent`` after fine-tuning its heads on the awaited history."""
    net = model.network_for(agent.spec, agent.net.single_head)
    loss = finetune_heads(net, agent.history_states, agent.history_actions, agent.opt)
    agent.end_await(net)
    return loss
