from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..agent.types import ActionSpaceSpec
from .devices import DeviceProfile
from .stage import StageState, StepMetrics, stage_step
from .workload import WorkloadTrace, generate_arrivals

DEFAULT_SLO = 0.25


@dataclass(frozen=True)
class StageDescriptor:
    device: str
    spec: ActionSpaceSpec
    fanout: int = 1

    def __post_init__(self):
        if self.fanout < 1:
            raise ValueError("fanout must be >= 1")


@dataclass(frozen=True)
class PipelineSpec:
    stages: tuple[StageDescriptor, ...]
    slo: float = DEFAULT_SLO

    def __post_init__(self):
        if not self.stages:
            raise ValueError("pipeline needs at least one stage")
        if not self.slo > 0:
            raise ValueError("slo must be positive")
        object.__setattr__(self, "stages", tuple(self.stages))


class Pipeline:
    """Runtime instance of a :class:`PipelineSpec` fed by one workload trace."""

    def __init__(self, name: str, spec: PipelineSpec, devices: dict[str, DeviceProfile],
                 trace: WorkloadTrace, local_slo_share: list[float] | None = None):
        self.name = name
        self.spec = spec
        self.trace = trace
        n = len(spec.stages)
        shares = local_slo_share or [1.0 / n] * n
        self.stages: list[StageState] = []
        for i, desc in enumerate(spec.stages):
            self.stages.append(StageState(
                stage_id=f"{name}/{i}",
                device=devices[desc.device],
                spec=desc.spec,
                action=desc.spec.median_action(),
                slo=spec.slo,
                local_slo=spec.slo * shares[i],
                fanout=desc.fanout,
            ))


def source_frames(count: int, t: float, dt: float) -> list[tuple[float, float]]:
    """Spread ``count`` source frames evenly across the tick."""
    step = dt / count if count else 0.0
    return [(t + (i + 0.5) * step,) * 2 for i in range(count)]


def pipeline_step(pipe: Pipeline, t: float, dt: float, rng: np.random.Generator):
    """Advance every stage by one tick; returns (per-stage metrics, end-to-end metrics)."""
    arrivals = source_frames(generate_arrivals(pipe.trace, t, dt, rng), t, dt)
    n_source = len(arrivals)
    per_stage = []
    done = []
    for i, stage in enumerate(pipe.stages):
        m, done = stage_step(stage, arrivals, t, dt)
        per_stage.append(m)
        if i + 1 < len(pipe.stages):
            nxt = pipe.stages[i + 1]
            delay = stage.device.link_delay if nxt.device.name != stage.device.name else 0.0
            arrivals = [(c + delay, o) for c, o in done for _ in range(stage.fanout)]

    e2e = StepMetrics(dt=dt, arrivals=n_source, drops=sum(m.drops for m in per_stage))
    slo = pipe.spec.slo
    for c, o in done:
        lat = c - o
        e2e.completions += 1
        e2e.e2e_latency_sum += lat
        e2e.latency_sum += lat
        if lat <= slo:
            e2e.on_time += 1
        else:
            e2e.violations += 1
    last = per_stage[-1]
    e2e.pre_fill, e2e.post_fill = last.pre_fill, last.post_fill
    return per_stage, e2e
