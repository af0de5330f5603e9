"""Experiment configuration: YAML on disk, validated pydantic models in memory.

Unknown keys are rejected everywhere so a misspelled option can never fall
back to a default silently.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..agent.types import ActionSpaceSpec, TrainConfig
from ..federation.selection import SelectionConfig
from ..sim.devices import DeviceProfile
from ..sim.pipeline import PipelineSpec, StageDescriptor
from ..sim.workload import Segment, WorkloadTrace

AgentMode = Literal["learning", "frozen", "fixed", "blank", "single-head"]


class ConfigError(ValueError):
    def __init__(self, errors: list[dict]):
        self.errors = errors
        lines = [f"{e['loc']}: {e['msg']}" for e in errors]
        super().__init__("invalid config:\n  " + "\n  ".join(lines))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DeviceCfg(_Strict):
    name: str
    base_latency: float = Field(gt=0)
    per_item_latency: float = Field(gt=0)
    preproc_cost: float = Field(gt=0)
    postproc_cost: float = Field(gt=0)
    cores: int = Field(4, ge=1)
    max_threads: int = Field(8, ge=1)
    max_batch: int = Field(32, ge=1)
    queue_capacity: int = Field(64, ge=1)
    bandwidth: float = Field(10.0, gt=0)
    memory_budget_kb: float = Field(1024.0, ge=0)
    link_delay: float = Field(0.0, ge=0)

    def build(self) -> DeviceProfile:
        return DeviceProfile(**self.model_dump())


class SegmentCfg(_Strict):
    duration: float = Field(gt=0)
    rate: float = Field(ge=0)
    burstiness: float = Field(1.0, ge=1)


class TraceCfg(_Strict):
    name: str
    segments: list[SegmentCfg] = Field(min_length=1)

    def build(self, seed: int = 0) -> WorkloadTrace:
        return WorkloadTrace(tuple(Segment(**s.model_dump()) for s in self.segments), seed, self.name)


def _increasing(values: list[int]) -> bool:
    return all(v > 0 for v in values) and all(b > a for a, b in zip(values, values[1:]))


class StageCfg(_Strict):
    device: str
    res: list[int] = Field(min_length=1)
    bs: list[int] = Field(min_length=1)
    mt: list[int] = Field(min_length=1)
    fanout: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _choices(self):
        for name in ("res", "bs", "mt"):
            if not _increasing(getattr(self, name)):
                raise ValueError(f"{name} choices must be strictly increasing positive integers")
        return self

    def build(self) -> StageDescriptor:
        return StageDescriptor(self.device, ActionSpaceSpec(tuple(self.res), tuple(self.bs), tuple(self.mt)),
                               self.fanout)


class PipelineCfg(_Strict):
    name: str
    trace: str
    stages: list[StageCfg] = Field(min_length=1)
    slo: float = Field(0.25, gt=0)
    mode: AgentMode = "learning"
    init: str = "random"  # random | pretrained | pretrained:<pipeline> | path to checkpoint
    source: Optional[str] = None  # pipelines sharing a source see identical arrivals
    local_slo_share: Optional[list[float]] = None

    @model_validator(mode="after")
    def _shares(self):
        if self.local_slo_share is not None:
            if len(self.local_slo_share) != len(self.stages):
                raise ValueError("local_slo_share needs one entry per stage")
            if any(s <= 0 for s in self.local_slo_share):
                raise ValueError("local_slo_share entries must be positive")
        return self

    def build_spec(self) -> PipelineSpec:
        return PipelineSpec(tuple(s.build() for s in self.stages), self.slo)

    @property
    def source_id(self) -> str:
        return self.source or self.name


class TrainCfg(_Strict):
    n_steps: int = Field(10, ge=1)
    lr: float = Field(1e-3, gt=0)
    w_throughput: float = 1.1
    w_latency: float = 10.0
    w_oversize: float = 2.0
    gamma: float = Field(0.1, ge=0, le=1)
    lam: float = Field(0.1, ge=0, le=1)
    penalty_weight: float = 0.2
    clip: float = Field(0.9, gt=0)
    alpha: float = 0.5
    beta: float = 0.5
    gate_threshold: float = Field(0.05, gt=0)
    buffer_capacity: int = Field(64, ge=1)
    optimizer: Literal["adam", "sgd"] = "adam"

    def build(self) -> TrainConfig:
        return TrainConfig(**self.model_dump())


class SelectionCfg(_Strict):
    fraction: float = Field(1.0, gt=0, le=1)
    w_mem: float = Field(1 / 3, ge=0)
    w_comp: float = Field(1 / 3, ge=0)
    w_div: float = Field(1 / 3, ge=0)

    @model_validator(mode="after")
    def _sum(self):
        if abs(self.w_mem + self.w_comp + self.w_div - 1.0) > 1e-9:
            raise ValueError("utility weights must sum to 1")
        return self

    def build(self) -> SelectionConfig:
        return SelectionConfig(**self.model_dump())


class ClusterCfg(_Strict):
    server: str
    pipelines: list[str]


class FederationCfg(_Strict):
    enabled: bool = True
    every_episodes: int = Field(2, ge=1)
    local_rounds: int = Field(1, ge=1)
    server_cost: float = Field(1.0, ge=0)
    clusters: Optional[list[ClusterCfg]] = None


class PretrainCfg(_Strict):
    duration: float = Field(gt=0)
    pipelines: list[PipelineCfg] = Field(min_length=1)
    federation: FederationCfg = Field(default_factory=lambda: FederationCfg(enabled=False))


def _check_pipelines(pipelines: list[PipelineCfg], devices: set, traces: set, where: str) -> list[str]:
    problems = []
    seen = {}
    for i, p in enumerate(pipelines):
        if p.name in seen:
            problems.append(f"{where}[{i}]: duplicate pipeline name {p.name!r} (also {where}[{seen[p.name]}])")
        seen.setdefault(p.name, i)
        if p.trace not in traces:
            problems.append(f"{where}[{i}].trace: unknown trace {p.trace!r}")
        for j, s in enumerate(p.stages):
            if s.device not in devices:
                problems.append(f"{where}[{i}].stages[{j}].device: unknown device {s.device!r}")
    return problems


def _check_clusters(fed: FederationCfg, pipelines: list[PipelineCfg], where: str) -> list[str]:
    if not fed.clusters:
        return []
    problems = []
    names = {p.name for p in pipelines}
    owner = {}
    for i, c in enumerate(fed.clusters):
        for name in c.pipelines:
            if name not in names:
                problems.append(f"{where}.clusters[{i}]: unknown pipeline {name!r}")
            if name in owner:
                problems.append(f"{where}.clusters[{i}]: pipeline {name!r} already in cluster {owner[name]!r}")
            owner.setdefault(name, c.server)
    return problems


class ExperimentConfig(_Strict):
    name: str = "experiment"
    seed: int = 0
    duration: float = Field(ge=0)
    tick: float = Field(0.1, gt=0)
    decision_interval: float = Field(1.0, gt=0)
    devices: list[DeviceCfg] = Field(min_length=1)
    traces: list[TraceCfg] = Field(min_length=1)
    pipelines: list[PipelineCfg] = Field(min_length=1)
    train: TrainCfg = Field(default_factory=TrainCfg)
    selection: SelectionCfg = Field(default_factory=SelectionCfg)
    federation: FederationCfg = Field(default_factory=FederationCfg)
    pretrain: Optional[PretrainCfg] = None

    @model_validator(mode="after")
    def _references(self):
        problems = []
        first = {}
        for i, d in enumerate(self.devices):
            if d.name in first:
                problems.append(f"devices[{i}]: duplicate device name {d.name!r} "
                                f"(defined at devices[{first[d.name]}] and devices[{i}])")
            else:
                first[d.name] = i
        tnames = {}
        for i, t in enumerate(self.traces):
            if t.name in tnames:
                problems.append(f"traces[{i}]: duplicate trace name {t.name!r} (also traces[{tnames[t.name]}])")
            tnames.setdefault(t.name, i)
        devices, traces = set(first), set(tnames)
        problems += _check_pipelines(self.pipelines, devices, traces, "pipelines")
        problems += _check_clusters(self.federation, self.pipelines, "federation")
        ratio = self.decision_interval / self.tick
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            problems.append("decision_interval must be a positive multiple of tick")
        if self.pretrain is not None:
            problems += _check_pipelines(self.pretrain.pipelines, devices, traces, "pretrain.pipelines")
            problems += _check_clusters(self.pretrain.federation, self.pretrain.pipelines, "pretrain.federation")
        pre_names = {p.name for p in self.pretrain.pipelines} if self.pretrain else set()
        for i, p in enumerate(self.pipelines):
            if p.init.startswith("pretrained"):
                if self.pretrain is None:
                    problems.append(f"pipelines[{i}].init: {p.init!r} needs a pretrain section")
                elif ":" in p.init and p.init.split(":", 1)[1] not in pre_names:
                    problems.append(f"pipelines[{i}].init: unknown pretrain pipeline in {p.init!r}")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def decision_ticks(self) -> int:
        return round(self.decision_interval / self.tick)

    def device_profiles(self) -> dict[str, DeviceProfile]:
        return {d.name: d.build() for d in self.devices}

    def trace_map(self) -> dict[str, TraceCfg]:
        return {t.name: t for t in self.traces}


def _format_errors(exc: ValidationError) -> list[dict]:
    out = []
    for e in exc.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        msg = e["msg"]
        if e["type"] == "value_error" and msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
            for part in msg.split("; "):
                out.append({"loc": loc, "msg": part})
            continue
        out.append({"loc": loc, "msg": msg})
    return out


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file {path} does not exist")
    data = yaml.safe_load(path.read_text())
    if not isinstance(data, dict):
        raise ConfigError([{"loc": "<root>", "msg": "config must be a mapping"}])
    return parse_config(data)


class _Dumper(yaml.SafeDumper):
    pass


def _represent_list(dumper, data):
    flow = all(isinstance(v, (int, float, str)) for v in data)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flow)


_Dumper.add_representer(list, _represent_list)


def dump_config(cfg: ExperimentConfig) -> str:
    """YAML text that ``load_config`` parses back to an equal config; scalar lists stay on one line."""
    return yaml.dump(cfg.model_dump(mode="json"), Dumper=_Dumper, sort_keys=False)
