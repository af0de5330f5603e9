from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..agent.iagent import IAgent
from .aggregation import ClientUpdate, GlobalModel, aggregate, broadcast_and_finetune
from .selection import Candidate, SelectionConfig, select_clients

DEFAULT_SERVER_COST = 1.0  # s


@dataclass
class ClusterServer:
    server_id: str
    model: GlobalModel
    members: list[str] = field(default_factory=list)
    rounds_done: int = 0


@dataclass
class ClusterTopology:
    clusters: list[tuple[str, list[str]]]
    local_rounds: int = 1

    def __post_init__(self):
        if self.local_rounds < 1:
            raise ValueError("local_rounds must be >= 1")
        seen = {}
        for server_id, members in self.clusters:
            for a in members:
                if a in seen:
                    raise ValueError(f"agent {a!r} is in clusters {seen[a]!r} and {server_id!r}")
                seen[a] = server_id


@dataclass
class RoundReport:
    round_id: int
    cluster: str
    participants: list[str]
    bank_weights: dict[str, dict[str, float]]
    latency: float
    skipped: bool = False
    t_start: float | None = None
    finetune_loss: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "round_id": self.round_id, "cluster": self.cluster, "participants": self.participants,
            "bank_weights": self.bank_weights, "latency": self.latency, "skipped": self.skipped,
            "t_start": self.t_start, "finetune_loss": self.finetune_loss,
        }


@dataclass
class PendingRound:
    report: RoundReport
    model: GlobalModel
    deliver_at: float | None = None


def transfer_time(payload_bytes: int, bandwidth_mbit: float) -> float:
    return payload_bytes * 8 / (bandwidth_mbit * 1e6)


def round_latency(payloads: list[tuple[int, float]], server_cost: float = DEFAULT_SERVER_COST) -> float:
    """Upload plus download of every participant's payload, plus server time."""
    return sum(2 * transfer_time(size, bw) for size, bw in payloads) + server_cost


def start_round(server: ClusterServer, agents: dict[str, IAgent], candidates: list[Candidate],
                cfg: SelectionConfig, server_cost: float = DEFAULT_SERVER_COST,
                t: float | None = None) -> PendingRound:
    """Select, collect and aggregate; participants keep serving while they await the result."""
    round_id = server.rounds_done
    server.rounds_done += 1
    selected = select_clients(candidates, cfg) if candidates else []
    if not selected:
        return PendingRound(RoundReport(round_id, server.server_id, [], {}, 0.0, True, t), server.model)
    by_id = {c.agent_id: c for c in candidates}
    updates = []
    for agent_id in selected:
        agent = agents[agent_id]
        agent.close_episode()
        c = by_id[agent_id]
        updates.append(ClientUpdate.from_agent(agent, c.stats, c.bandwidth))
        agent.begin_await()
    result = aggregate(server.model, updates)
    server.model = result.model
    latency = round_latency([(u.payload_bytes, u.bandwidth) for u in updates], server_cost)
    report = RoundReport(round_id, server.server_id, list(selected), result.bank_weights, latency, False, t)
    deliver_at = None if t is None else t + latency
    return PendingRound(report, result.model, deliver_at)


def finish_round(pending: PendingRound, agents: dict[str, IAgent]) -> RoundReport:
    for agent_id in pending.report.participants:
        pending.report.finetune_loss[agent_id] = broadcast_and_finetune(agents[agent_id], pending.model)
    return pending.report


def run_round(server: ClusterServer, agents: dict[str, IAgent], candidates: list[Candidate],
              cfg: SelectionConfig, server_cost: float = DEFAULT_SERVER_COST) -> RoundReport:
    """A whole round as one transaction (no serving happens in between)."""
    pending = start_round(server, agents, candidates, cfg, server_cost)
    if pending.report.skipped:
        return pending.report
    return finish_round(pending, agents)


def cluster_losses(server: ClusterServer, agents: dict[str, IAgent]) -> dict[str, float]:
    """Per-bank loss of a cluster model: the mean of its members' last head losses."""
    per_key: dict[str, list[float]] = {}
    for agent_id in server.members:
        agent = agents.get(agent_id)
        if agent is None or agent.net is None:
            continue
        update = ClientUpdate.from_agent(agent)
        for key, loss in update.head_losses.items():
            per_key.setdefault(key, []).append(loss)
    everything = [l for ls in per_key.values() for l in ls]
    fallback = float(np.mean(everything)) if everything else 1.0
    return {key: float(np.mean(per_key.get(key, [fallback]))) for key in server.model.banks}


def cloud_sync(cloud: GlobalModel | None, servers: list[ClusterServer],
               agents: dict[str, IAgent]) -> GlobalModel:
    """Aggregate cluster models at the cloud and push the result back to every cluster."""
    if len(servers) == 1:
        return servers[0].model.copy()
    updates = [ClientUpdate(s.server_id, s.model.backbone, dict(s.model.banks), cluster_losses(s, agents))
               for s in servers]
    merged = aggregate(cloud, updates).model
    for s in servers:
        s.model = merged.copy()
    return merged


def hierarchical_round(topology: ClusterTopology, servers: dict[str, ClusterServer],
                       agents: dict[str, IAgent], candidates: dict[str, list[Candidate]],
                       cfg: SelectionConfig, cloud: GlobalModel | None = None,
                       server_cost: float = DEFAULT_SERVER_COST):
    """``local_rounds`` rounds in every cluster, then one cloud aggregation.

    Returns (cloud model, round reports).
    """
    reports = []
    for server_id, _ in topology.clusters:
        for _ in range(topology.local_rounds):
            reports.append(run_round(servers[server_id], agents, candidates.get(server_id, []), cfg, server_cost))
    merged = cloud_sync(cloud, [servers[s] for s, _ in topology.clusters], agents)
    return merged, reports
