from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class DeviceProfile:
    """Parametric performance model of one edge device.

    Inference of a batch of B items takes ``base_latency + per_item_latency * B``
    seconds; pre/post-processing cost ``preproc_cost`` / ``postproc_cost``
    seconds per frame per thread.
    """

    name: str
    base_latency: float
    per_item_latency: float
    preproc_cost: float
    postproc_cost: float
    cores: int = 4
    max_threads: int = 8
    max_batch: int = 32
    queue_capacity: int = 64
    bandwidth: float = 10.0  # Mbit/s towards the cluster server
    memory_budget_kb: float = 1024.0  # room for FL payloads of co-located agents
    link_delay: float = 0.0  # s, added when results leave this device

    def __post_init__(self):
        for attr in ("base_latency", "per_item_latency", "preproc_cost", "postproc_cost"):
            if not getattr(self, attr) > 0:
                raise ValueError(f"{attr} must be positive")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if self.cores < 1 or self.max_threads < 1:
            raise ValueError("cores and max_threads must be >= 1")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")

    def batch_latency(self, batch_size: int) -> float:
        return self.base_latency + self.per_item_latency * min(batch_size, self.max_batch)


def contention(threads: int, cores: int) -> float:
    """Per-thread efficiency once threads outnumber cores."""
    return 1.0 if threads <= cores else cores / threads
