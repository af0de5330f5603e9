"""One inference stage: input queue -> preprocessing -> batched inference -> postprocessing.

Frames are tuples ``(ready_time, origin_time, stage_enter_time)``. Each server
(preprocessing pool, GPU, postprocessing pool) keeps the time it next
becomes free, so work inside a tick is ordered exactly by timestamps.
Work that would not finish before the end of the tick is left queued.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..agent.types import Action, ActionSpaceSpec, State
from .devices import DeviceProfile, contention


@dataclass
class StepMetrics:
    arrivals: int = 0
    completions: int = 0
    drops: int = 0
    on_time: int = 0  # completions within the end-to-end SLO
    violations: int = 0  # completions over the local SLO
    latency_sum: float = 0.0  # local (in-stage) latency
    e2e_latency_sum: float = 0.0
    gpu_busy: float = 0.0
    dt: float = 0.0
    pre_fill: float = 0.0
    post_fill: float = 0.0
    queued_delta: int = 0

    @property
    def throughput(self) -> float:
        return self.completions / self.dt if self.dt > 0 else 0.0

    @property
    def effective_throughput(self) -> float:
        return self.on_time / self.dt if self.dt > 0 else 0.0

    @property
    def latency_mean(self) -> float | None:
        return self.latency_sum / self.completions if self.completions else None

    @property
    def e2e_latency_mean(self) -> float | None:
        return self.e2e_latency_sum / self.completions if self.completions else None

    def merge(self, other: "StepMetrics") -> None:
        """Accumulate another tick into this window."""
        for name in ("arrivals", "completions", "drops", "on_time", "violations", "latency_sum",
                     "e2e_latency_sum", "gpu_busy", "dt", "queued_delta"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.pre_fill, self.post_fill = other.pre_fill, other.post_fill


@dataclass
class StageState:
    stage_id: str
    device: DeviceProfile
    spec: ActionSpaceSpec
    action: Action
    slo: float  # end-to-end SLO of the owning pipeline
    local_slo: float
    fanout: int = 1
    agent_id: str | None = None
    pre_q: deque = field(default_factory=deque)
    inf_q: deque = field(default_factory=deque)
    post_q: deque = field(default_factory=deque)
    pre_free: float = 0.0
    gpu_free: float = 0.0
    post_free: float = 0.0
    total_drops: int = 0

    def __post_init__(self):
        self.spec.validate(self.action)

    @property
    def queued(self) -> int:
        return len(self.pre_q) + len(self.inf_q) + len(self.post_q)

    @property
    def config(self) -> tuple[int, int, int]:
        """Current (packing factor, batch size, threads)."""
        return self.spec.values(self.action)

    def inference_latency(self) -> float:
        return self.device.batch_latency(self.config[1])

    def max_service_rate(self) -> float:
        """Best achievable frame rate over the stage's action space."""
        d = self.device
        pre = max(m * contention(m, d.cores) / d.preproc_cost for m in self.spec.mt)
        post = max(m * contention(m, d.cores) / d.postproc_cost for m in self.spec.mt)
        inf = max(r * min(b, d.max_batch) / d.batch_latency(b) for r in self.spec.res for b in self.spec.bs)
        return min(pre, inf, post)


def apply_action(stage: StageState, action: Action) -> StageState:
    stage.spec.validate(action)
    stage.action = action
    return stage


def _pool_service_time(cost: float, threads: int, cores: int) -> float:
    return cost / (threads * contention(threads, cores))


def stage_step(stage: StageState, arrivals, t: float, dt: float) -> tuple[StepMetrics, list]:
    """Advance the stage over ``[t, t + dt)``.

    ``arrivals`` is a time-ordered list of ``(ready_time, origin_time)`` pairs.
    Returns the tick's metrics and the completed results as
    ``(completion_time, origin_time)`` pairs.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    d = stage.device
    cap = d.queue_capacity
    t_end = t + dt
    res, bs, mt = stage.config
    bs = min(bs, d.max_batch)
    m = StepMetrics(dt=dt)
    queued_before = stage.queued

    # 1. admission
    pre_q = stage.pre_q
    for ready, origin in arrivals:
        m.arrivals += 1
        if len(pre_q) < cap:
            pre_q.append((ready, origin, ready))
        else:
            m.drops += 1

    # 2. preprocessing pool; blocks when the inference queue is full
    inf_q = stage.inf_q
    s_pre = _pool_service_time(d.preproc_cost, mt, d.cores)
    free = stage.pre_free
    while pre_q:
        if len(inf_q) >= cap:
            free = max(free, t_end)
            break
        ready, origin, enter = pre_q[0]
        end = max(free, ready) + s_pre
        if end > t_end:
            break
        pre_q.popleft()
        inf_q.append((end, origin, enter))
        free = end
    stage.pre_free = free

    # 3/4. packed, batched inference; partial batches flush after slo/4 of waiting
    post_q = stage.post_q
    per_batch = res * bs
    flush_wait = stage.slo / 4.0
    l_batch = d.batch_latency(bs)
    free = stage.gpu_free
    while inf_q:
        full_start = max(free, inf_q[per_batch - 1][0]) if len(inf_q) >= per_batch else np.inf
        start = min(full_start, max(free, inf_q[0][0] + flush_wait))
        end = start + l_batch
        if end > t_end:
            break
        take = 0
        while take < per_batch and take < len(inf_q) and inf_q[take][0] <= start:
            take += 1
        if len(post_q) + take > cap:
            free = max(free, t_end)
            break
        for _ in range(take):
            _, origin, enter = inf_q.popleft()
            post_q.append((end, origin, enter))
        m.gpu_busy += l_batch
        free = end
    stage.gpu_free = free

    # 5. postprocessing pool
    s_post = _pool_service_time(d.postproc_cost, mt, d.cores)
    free = stage.post_free
    done = []
    slo, local_slo = stage.slo, stage.local_slo
    while post_q:
        ready, origin, enter = post_q[0]
        end = max(free, ready) + s_post
        if end > t_end:
            break
        post_q.popleft()
        free = end
        local = end - enter
        e2e = end - origin
        m.completions += 1
        m.latency_sum += local
        m.e2e_latency_sum += e2e
        if e2e <= slo:
            m.on_time += 1
        if local > local_slo:
            m.violations += 1
        done.append((end, origin))
    stage.post_free = free

    stage.total_drops += m.drops
    m.pre_fill = len(pre_q) / cap
    m.post_fill = len(post_q) / cap
    m.queued_delta = stage.queued - queued_before
    return m, done


def observe(stage: StageState, window: StepMetrics) -> State:
    """Normalized 8-field state from the last decision window."""
    n_res, n_bs, n_mt = stage.spec.dims
    a = stage.action
    rate = window.arrivals / window.dt if window.dt > 0 else 0.0
    return State(
        arrival_rate=rate / stage.max_service_rate(),
        queue_drops=window.drops / window.arrivals if window.arrivals else 0.0,
        res_level=a.res_idx / (n_res - 1) if n_res > 1 else 0.0,
        bs_level=a.bs_idx / (n_bs - 1) if n_bs > 1 else 0.0,
        mt_level=a.mt_idx / (n_mt - 1) if n_mt > 1 else 0.0,
        preproc_fill=len(stage.pre_q) / stage.device.queue_capacity,
        postproc_fill=len(stage.post_q) / stage.device.queue_capacity,
        slo=stage.slo,  # seconds, already O(0.1)
    )
