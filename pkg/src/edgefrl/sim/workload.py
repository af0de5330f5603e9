from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Segment:
    duration: float  # s
    rate: float  # requests/s
    burstiness: float = 1.0  # >= 1; 1 is plain Poisson

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("segment duration must be positive")
        if self.rate < 0:
            raise ValueError("segment rate must be non-negative")
        if self.burstiness < 1:
            raise ValueError("burstiness must be >= 1")


@dataclass(frozen=True)
class WorkloadTrace:
    segments: tuple[Segment, ...]
    seed: int = 0
    name: str = "trace"

    def __post_init__(self):
        if not self.segments:
            raise ValueError("trace needs at least one segment")
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments)

    def boundaries(self) -> list[float]:
        """Start times of every segment after the first (the regime shifts)."""
        out, acc = [], 0.0
        for seg in self.segments[:-1]:
            acc += seg.duration
            out.append(acc)
        return out

    def segment_at(self, t: float) -> Segment:
        t = t % self.total_duration
        acc = 0.0
        for seg in self.segments:
            acc += seg.duration
            if t < acc:
                return seg
        return self.segments[-1]


def generate_arrivals(trace: WorkloadTrace, t: float, dt: float, rng: np.random.Generator) -> int:
    """Frames arriving in ``[t, t + dt)``; the trace repeats past its end.

    Bursty segments draw a gamma-distributed rate multiplier with mean 1 and
    variance ``burstiness - 1`` before the Poisson draw.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    seg = trace.segment_at(t)
    lam = seg.rate * dt
    if lam == 0:
        return 0
    if seg.burstiness > 1:
        k = 1.0 / (seg.burstiness - 1.0)
        lam *= rng.gamma(k, 1.0 / k)
    return int(rng.poisson(lam))
