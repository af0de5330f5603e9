"""The tick loop tying simulator, agents and federation together."""

from __future__ import annotations

import csv
import io
import json
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..agent.iagent import IAgent
from ..agent.learning import compute_reward
from ..agent.network import AgentNetwork
from ..federation.aggregation import GlobalModel
from ..federation.rounds import ClusterServer, PendingRound, cloud_sync, finish_round, start_round
from ..federation.selection import Candidate, DeviceStats
from ..nn import NumericalError
from ..sim.pipeline import Pipeline, pipeline_step
from ..sim.stage import StageState, StepMetrics, apply_action, observe
from .config import ExperimentConfig, PipelineCfg, dump_config
from .summary import CSV_COLUMNS, summarize_text

log = logging.getLogger(__name__)

FEDERATED_MODES = ("learning", "blank")
MIN_REQUEST_RATE = 1.0  # requests/s floor for the reward of an idle window


class RunError(RuntimeError):
    def __init__(self, tick: int, agent_id: str, reason: str):
        self.tick = tick
        self.agent_id = agent_id
        super().__init__(f"run aborted at tick {tick}, agent {agent_id}: {reason}")


def stream(seed: int, label: str) -> np.random.Generator:
    """Independent RNG stream per (seed, label); labels are hashed stably."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(label.encode())]))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".10g")


@dataclass
class RunArtifacts:
    csv_text: str
    rounds: list[dict]
    events: list[dict]
    summary: dict
    agents: dict[str, IAgent]
    pipelines: list[Pipeline]
    servers: dict[str, ClusterServer] = field(default_factory=dict)
    rewards: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    effective: dict[str, list[float]] = field(default_factory=dict)
    out_dir: Path | None = None
    pretrain: "RunArtifacts | None" = None

    def trained_networks(self) -> dict[str, list[AgentNetwork]]:
        return {p.name: [self.agents[s.agent_id].net for s in p.stages] for p in self.pipelines}


def _window_reward(stage: StageState, window: StepMetrics, t: float, cfg) -> float:
    rate = max(window.arrivals / window.dt, MIN_REQUEST_RATE)
    if window.completions:
        lat = window.latency_mean
    else:
        queued = [q[0][2] for q in (stage.pre_q, stage.inf_q, stage.post_q) if q]
        lat = t - min(queued) if queued else 0.0
    return compute_reward(window.throughput, rate, lat, stage.config[1], window.violations, cfg)


def _resolve_init(p_cfg: PipelineCfg, index: int, stage: StageState,
                  pretrained: dict[str, list[AgentNetwork]] | None) -> AgentNetwork | None:
    init = p_cfg.init
    if p_cfg.mode in ("fixed", "blank", "single-head") or init == "random":
        return None
    if init.startswith("pretrained"):
        if not pretrained:
            raise ValueError(f"pipeline {p_cfg.name}: no pretrained networks available")
        source = init.split(":", 1)[1] if ":" in init else next(iter(pretrained))
        nets = pretrained[source]
        if index >= len(nets) or nets[index] is None:
            raise ValueError(f"pipeline {p_cfg.name}: pretrain pipeline {source} has no stage {index}")
        net = nets[index].copy()
    else:
        net = AgentNetwork.load(init)
    if net.spec != stage.spec:
        raise ValueError(f"pipeline {p_cfg.name} stage {index}: checkpoint action space {net.spec} "
                         f"!= stage action space {stage.spec}")
    return net


def run(cfg: ExperimentConfig, out_dir=None, pretrained: dict[str, list[AgentNetwork]] | None = None,
        phase: str = "") -> RunArtifacts:
    out_dir = Path(out_dir) if out_dir is not None else None
    pre_artifacts = None
    if cfg.pretrain is not None and pretrained is None:
        sub = cfg.model_copy(update={
            "name": f"{cfg.name}-pretrain", "duration": cfg.pretrain.duration,
            "pipelines": cfg.pretrain.pipelines, "federation": cfg.pretrain.federation, "pretrain": None,
        })
        pre_artifacts = run(sub, out_dir / "pretrain" if out_dir else None, phase="pretrain/")
        pretrained = pre_artifacts.trained_networks()

    seed = cfg.seed
    tcfg = cfg.train.build()
    devices = cfg.device_profiles()
    traces = cfg.trace_map()

    pipes: list[Pipeline] = []
    arrival_rngs = []
    agents: dict[str, IAgent] = {}
    pipe_cfg_of: dict[str, PipelineCfg] = {}
    for p_cfg in cfg.pipelines:
        pipe = Pipeline(p_cfg.name, p_cfg.build_spec(), devices, traces[p_cfg.trace].build(seed),
                        p_cfg.local_slo_share)
        pipes.append(pipe)
        arrival_rngs.append(stream(seed, f"{phase}arrivals:{p_cfg.source_id}"))
        pipe_cfg_of[p_cfg.name] = p_cfg
        for i, stage in enumerate(pipe.stages):
            stage.agent_id = stage.stage_id
            net = _resolve_init(p_cfg, i, stage, pretrained)
            agents[stage.stage_id] = IAgent(stage.stage_id, stage.spec, tcfg,
                                            stream(seed, f"{phase}agent:{stage.stage_id}"), p_cfg.mode, net)
    stage_of = {s.stage_id: s for p in pipes for s in p.stages}

    servers: dict[str, ClusterServer] = {}
    fed = cfg.federation
    if fed.enabled:
        clusters = ([(c.server, c.pipelines) for c in fed.clusters] if fed.clusters
                    else [("edge", [p.name for p in cfg.pipelines])])
        for server_id, names in clusters:
            members = sorted(s.stage_id for p in pipes if p.name in names for s in p.stages
                             if agents[s.stage_id].mode in FEDERATED_MODES)
            if not members:
                continue
            model = GlobalModel.from_network(agents[members[0]].net)
            for aid in members:
                model.register(agents[aid].net)
            for aid in members:
                if pipe_cfg_of[aid.rsplit("/", 1)[0]].init == "random":
                    agents[aid].net = model.network_for(agents[aid].spec)
            servers[server_id] = ClusterServer(server_id, model, members)
    sel_cfg = cfg.selection.build()
    cloud: GlobalModel | None = None

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    rounds: list[dict] = []
    events: list[dict] = []
    rewards: dict[str, list] = {aid: [] for aid in agents}
    effective: dict[str, list] = {p.name: [] for p in pipes}
    windows = {aid: StepMetrics(dt=cfg.decision_interval) for aid in agents}
    last_window = dict(windows)
    pending: dict[str, PendingRound] = {}

    dt = cfg.tick
    n_ticks = int(round(cfg.duration / dt))
    decision_ticks = cfg.decision_ticks
    round_every = fed.every_episodes * tcfg.n_steps
    decisions = 0

    def deliver(server_id: str) -> None:
        report = finish_round(pending.pop(server_id), agents)
        rounds.append(report.to_json())
        for aid, loss in report.finetune_loss.items():
            events.append({"t": report.t_start, "type": "finetune", "agent": aid, "loss": loss})

    for k in range(n_ticks):
        t = k * dt
        for server_id in sorted(pending):
            if pending[server_id].deliver_at <= t + 1e-12:
                deliver(server_id)

        losses: dict[str, float] = {}
        step_rewards: dict[str, float] = {}
        if k % decision_ticks == 0:
            for aid in sorted(agents):
                agent, stage = agents[aid], stage_of[aid]
                try:
                    reward = None
                    if k > 0:
                        reward = _window_reward(stage, windows[aid], t, tcfg)
                        step_rewards[aid] = reward
                        rewards[aid].append((t, reward))
                    state = observe(stage, windows[aid]).to_vector()
                    action, event = agent.step(state, reward)
                    apply_action(stage, action)
                except (NumericalError, FloatingPointError, ValueError) as exc:
                    raise RunError(k, aid, str(exc)) from exc
                if event is not None:
                    losses[aid] = event.report.total
                    events.append({"t": t, "type": "update", "agent": aid, "applied": event.applied,
                                   "loss": event.report.total})
                last_window[aid] = windows[aid]
                windows[aid] = StepMetrics()
            if k > 0:
                decisions += 1
            if servers and decisions > 0 and k > 0 and decisions % round_every == 0:
                started = []
                for server_id in sorted(servers):
                    if server_id in pending:
                        continue
                    server = servers[server_id]
                    cands = [_candidate(agents[aid], stage_of[aid], last_window[aid])
                             for aid in server.members if not agents[aid].awaiting]
                    pr = start_round(server, agents, cands, sel_cfg, fed.server_cost, t)
                    if pr.report.skipped:
                        rounds.append(pr.report.to_json())
                    else:
                        pending[server_id] = pr
                        started.append(server_id)
                if len(servers) > 1 and started and servers[started[0]].rounds_done % fed.local_rounds == 0:
                    cloud = cloud_sync(cloud, [servers[s] for s in sorted(servers)], agents)
                    for s in started:
                        pending[s].model = servers[s].model

        for pipe, rng in zip(pipes, arrival_rngs):
            per_stage, e2e = pipeline_step(pipe, t, dt, rng)
            for stage, m in zip(pipe.stages, per_stage):
                windows[stage.stage_id].merge(m)
                a = stage.action
                writer.writerow([_fmt(round(t, 9)), stage.stage_id, _fmt(m.throughput),
                                 _fmt(m.effective_throughput), _fmt(m.latency_mean), m.drops, m.violations,
                                 _fmt(step_rewards.get(stage.stage_id)), _fmt(losses.get(stage.stage_id)),
                                 a.res_idx, a.bs_idx, a.mt_idx])
            writer.writerow([_fmt(round(t, 9)), f"{pipe.name}/e2e", _fmt(e2e.throughput),
                             _fmt(e2e.effective_throughput), _fmt(e2e.e2e_latency_mean), e2e.drops,
                             e2e.violations, "", "", "", "", ""])
            effective[pipe.name].append(e2e.effective_throughput)

    for server_id in sorted(pending):
        deliver(server_id)

    csv_text = buf.getvalue()
    summary = {"metrics": summarize_text(csv_text, tcfg.n_steps), "config": cfg.model_dump(mode="json")}
    art = RunArtifacts(csv_text, rounds, events, summary, agents, pipes, servers, rewards, effective,
                       out_dir, pre_artifacts)
    if out_dir is not None:
        write_artifacts(art, cfg)
    return art


def _candidate(agent: IAgent, stage: StageState, window: StepMetrics) -> Candidate:
    cap = 3 * stage.device.queue_capacity
    busy = window.gpu_busy / window.dt if window.dt > 0 else 0.0
    stats = DeviceStats(memory=1.0 - stage.queued / cap, compute=min(1.0, max(0.0, 1.0 - busy)),
                        diversity=agent.diversity.mean_diversity())
    payload_kb = len(agent.net.to_bytes()) / 1000.0
    return Candidate(agent.agent_id, stage.device.name, stats, stage.device.bandwidth, payload_kb,
                     stage.device.memory_budget_kb)


def write_artifacts(art: RunArtifacts, cfg: ExperimentConfig) -> None:
    out = art.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(art.csv_text)
    with open(out / "rounds.jsonl", "w") as fh:
        for r in art.rounds:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    with open(out / "events.jsonl", "w") as fh:
        for e in art.events:
            fh.write(json.dumps(e, sort_keys=True) + "\n")
    (out / "summary.json").write_text(json.dumps(art.summary, indent=2, sort_keys=True) + "\n")
    (out / "config.yaml").write_text(dump_config(cfg))
    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    for aid, agent in sorted(art.agents.items()):
        if agent.net is not None:
            agent.net.save(ckpt / (aid.replace("/", "-") + ".npz"))
    for server_id, server in sorted(art.servers.items()):
        server.model.save(ckpt / f"global-{server_id}.npz")
