from __future__ import annotations

import itertools

import numpy as np

from ..nn import kl_divergence
from .types import STATE_DIM, Experience

COV_REG = 1e-6


class EpisodeBuffer:
    """Experiences of the current episode, at most ``capacity`` of them."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: list[Experience] = []

    def append(self, exp: Experience) -> None:
        if len(self.items) >= self.capacity:
            raise OverflowError("episode buffer is full; run an update first")
        self.items.append(exp)

    @property
    def full(self) -> bool:
        return len(self.items) >= self.capacity

    def clear(self) -> None:
        self.items = []

    def __len__(self) -> int:
        return len(self.items)


class DiversityBuffer:
    """Fixed-capacity experience store that keeps the most novel experiences.

    Running sums of states, state outer products and per-head policies are
    kept alongside the stored items so mean and covariance never need a
    rescan.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.items: list[Experience] = []
        self._serial: list[int] = []
        self._counter = itertools.count()
        self._state_sum = np.zeros(STATE_DIM)
        self._outer_sum = np.zeros((STATE_DIM, STATE_DIM))
        self._prob_sums: list[np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self.items)

    def _add_stats(self, exp: Experience, sign: float) -> None:
        s = np.asarray(exp.state, dtype=np.float64)
        self._state_sum += sign * s
        self._outer_sum += sign * np.outer(s, s)
        if self._prob_sums is None:
            self._prob_sums = [np.zeros_like(np.asarray(p, dtype=np.float64)) for p in exp.policy_probs]
        for acc, p in zip(self._prob_sums, exp.policy_probs):
            acc += sign * np.asarray(p, dtype=np.float64)

    def mean(self) -> np.ndarray:
        if not self.items:
            return np.zeros(STATE_DIM)
        return self._state_sum / len(self.items)

    def covariance(self) -> np.ndarray:
        """Population covariance of the stored states."""
        n = len(self.items)
        if n == 0:
            return np.zeros((STATE_DIM, STATE_DIM))
        mu = self._state_sum / n
        return self._outer_sum / n - np.outer(mu, mu)

    def mean_policy(self) -> list[np.ndarray]:
        if not self.items:
            return []
        return [acc / len(self.items) for acc in self._prob_sums]

    def mean_diversity(self) -> float:
        if not self.items:
            return 0.0
        return float(np.mean([e.diversity for e in self.items]))

    def min_diversity(self) -> float:
        return min(e.diversity for e in self.items)

    def insert(self, exp: Experience) -> bool:
        """Store ``exp`` if there is room or it beats the least diverse item."""
        if len(self.items) < self.capacity:
            self.items.append(exp)
            self._serial.append(next(self._counter))
            self._add_stats(exp, 1.0)
            return True
        victim = min(range(len(self.items)), key=lambda i: (self.items[i].diversity, self._serial[i]))
        if not exp.diversity > self.items[victim].diversity:
            return False
        self._add_stats(self.items[victim], -1.0)
        self.items[victim] = exp
        self._serial[victim] = next(self._counter)
        self._add_stats(exp, 1.0)
        return True

    def clear(self) -> None:
        self.__init__(self.capacity)


def diversity_score(state, probs, buffer: DiversityBuffer, alpha: float, beta: float) -> float:
    """Weighted state novelty (Mahalanobis) plus policy deviation (mean per-head KL)."""
    if len(buffer) == 0:
        return 0.0
    s = np.asarray(state, dtype=np.float64)
    diff = s - buffer.mean()
    if len(buffer) < STATE_DIM + 1:
        dist = float(np.sqrt(diff @ diff))
    else:
        cov = buffer.covariance() + COV_REG * np.eye(STATE_DIM)
        dist = float(np.sqrt(max(diff @ np.linalg.solve(cov, diff), 0.0)))
    mean_pol = buffer.mean_policy()
    kl = float(np.mean([kl_divergence(p, q) for p, q in zip(probs, mean_pol)]))
    return alpha * dist + beta * kl
