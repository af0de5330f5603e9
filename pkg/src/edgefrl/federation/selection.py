from __future__ import annotations

import math
from dataclasses import dataclass

BANDWIDTH_REF = 10.0  # Mbit/s


@dataclass
class SelectionConfig:
    fraction: float = 1.0
    w_mem: float = 1 / 3
    w_comp: float = 1 / 3
    w_div: float = 1 / 3

    def __post_init__(self):
        weights = (self.w_mem, self.w_comp, self.w_div)
        if any(w < 0 for w in weights):
            raise ValueError("utility weights must be non-negative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"utility weights must sum to 1, got {sum(weights)}")
        if not 0 < self.fraction <= 1:
            raise ValueError("participation fraction must be in (0, 1]")


@dataclass
class DeviceStats:
    memory: float  # available fraction
    compute: float  # available fraction
    diversity: float  # mean experience diversity


@dataclass
class Candidate:
    agent_id: str
    device_id: str
    stats: DeviceStats
    bandwidth: float  # Mbit/s
    payload_kb: float = 0.0
    device_budget_kb: float = math.inf


def total_utility(stats: DeviceStats, bandwidth: float, cfg: SelectionConfig) -> float:
    """Resource/diversity utility scaled by the square root of normalized bandwidth."""
    if bandwidth <= 0:
        return 0.0
    util = cfg.w_mem * stats.memory + cfg.w_comp * stats.compute + cfg.w_div * stats.diversity
    return util * math.sqrt(bandwidth / BANDWIDTH_REF)


def select_clients(candidates: list[Candidate], cfg: SelectionConfig) -> list[str]:
    """Pick the top devices by summed utility, then agents on each by memory availability.

    Devices tie-break on id, agents on id; within a device agents are admitted
    until their payloads would exceed the device's budget.
    """
    if not candidates:
        raise ValueError("select_clients needs at least one candidate")
    by_device: dict[str, list[Candidate]] = {}
    for c in candidates:
        by_device.setdefault(c.device_id, []).append(c)
    scores = {dev: sum(total_utility(c.stats, c.bandwidth, cfg) for c in members)
              for dev, members in by_device.items()}
    ranked = sorted(by_device, key=lambda dev: (-scores[dev], dev))
    n_devices = max(1, math.ceil(cfg.fraction * len(ranked) - 1e-9))

    selected = []
    for dev in ranked[:n_devices]:
        used = 0.0
        for c in sorted(by_device[dev], key=lambda c: (-c.stats.memory, c.agent_id)):
            if used + c.payload_kb > c.device_budget_kb:
                continue
            used += c.payload_kb
            selected.append(c.agent_id)
    return selected
