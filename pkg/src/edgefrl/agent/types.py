from __future__ import annotations

import math
from dataclasses import astuple, dataclass, field, fields

import numpy as np

STATE_DIM = 8


@dataclass(frozen=True)
class State:
    """Normalized observation an agent reads at every decision step."""

    arrival_rate: float
    queue_drops: float
    res_level: float
    bs_level: float
    mt_level: float
    preproc_fill: float
    postproc_fill: float
    slo: float

    def __post_init__(self):
        values = astuple(self)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"state has non-finite entries: {values}")
        for name in ("preproc_fill", "postproc_fill"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def to_vector(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_vector(cls, vec) -> "State":
        vec = [float(v) for v in vec]
        if len(vec) != STATE_DIM:
            raise ValueError(f"state vector must have {STATE_DIM} entries, got {len(vec)}")
        return cls(*vec)


STATE_FIELDS = tuple(f.name for f in fields(State))


def _check_choices(name: str, values) -> tuple[int, ...]:
    values = tuple(int(v) for v in values)
    if not values:
        raise ValueError(f"{name} choices must be non-empty")
    if any(v <= 0 for v in values):
        raise ValueError(f"{name} choices must be positive: {values}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{name} choices must be strictly increasing: {values}")
    return values


@dataclass(frozen=True)
class ActionSpaceSpec:
    res: tuple[int, ...]  # frame-packing factors
    bs: tuple[int, ...]  # batch sizes
    mt: tuple[int, ...]  # thread counts for pre- and post-processing

    def __post_init__(self):
        object.__setattr__(self, "res", _check_choices("RES", self.res))
        object.__setattr__(self, "bs", _check_choices("BS", self.bs))
        object.__setattr__(self, "mt", _check_choices("MT", self.mt))

    @property
    def dims(self) -> tuple[int, int, int]:
        return len(self.res), len(self.bs), len(self.mt)

    @property
    def joint_size(self) -> int:
        r, b, m = self.dims
        return r * b * m

    def median_action(self) -> "Action":
        r, b, m = self.dims
        return Action((r - 1) // 2, (b - 1) // 2, (m - 1) // 2)

    def validate(self, action: "Action") -> None:
        for idx, n, name in zip(astuple(action), self.dims, ("res", "bs", "mt")):
            if not 0 <= idx < n:
                raise ValueError(f"{name} index {idx} outside [0, {n})")

    def values(self, action: "Action") -> tuple[int, int, int]:
        self.validate(action)
        return self.res[action.res_idx], self.bs[action.bs_idx], self.mt[action.mt_idx]

    def joint_index(self, action: "Action") -> int:
        _, b, m = self.dims
        return (action.res_idx * b + action.bs_idx) * m + action.mt_idx

    def from_joint(self, index: int) -> "Action":
        _, b, m = self.dims
        return Action(index // (b * m), (index // m) % b, index % m)


@dataclass(frozen=True)
class Action:
    res_idx: int
    bs_idx: int
    mt_idx: int


@dataclass
class Experience:
    state: np.ndarray
    action: Action
    reward: float
    value_estimate: float
    policy_probs: tuple[np.ndarray, ...]
    diversity: float = 0.0


@dataclass
class TrainConfig:
    n_steps: int = 10
    lr: float = 1e-3
    w_throughput: float = 1.1
    w_latency: float = 10.0
    w_oversize: float = 2.0
    gamma: float = 0.1
    lam: float = 0.1
    penalty_weight: float = 0.2
    clip: float = 0.9
    alpha: float = 0.5
    beta: float = 0.5
    gate_threshold: float = 0.05
    buffer_capacity: int = 64
    optimizer: str = "adam"

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not self.gate_threshold > 0:
            raise ValueError("gate_threshold must be positive")
        if self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be >= 1")


@dataclass
class LossReport:
    total: float
    policy: float
    value: float
    penalty: float
    head_policy: dict[str, float] = field(default_factory=dict)
