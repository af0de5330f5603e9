"""Aggregate statistics from a run's per-tick metrics CSV."""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "stage_id", "throughput", "effective_throughput", "latency_mean", "drops",
               "violations", "reward", "loss", "res_idx", "bs_idx", "mt_idx")
CONVERGENCE_WINDOW = 10
CONVERGENCE_TOL = 0.05


def trailing_means(values: list[float], window: int = CONVERGENCE_WINDOW) -> np.ndarray:
    """Mean of the last ``window`` values at every position (shorter at the start)."""
    r = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(r)])
    idx = np.arange(1, r.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def convergence_episode(episode_rewards: list[float], window: int = CONVERGENCE_WINDOW,
                        tol: float = CONVERGENCE_TOL) -> int:
    """1-based index of the first episode whose trailing mean is within ``tol`` of the final one.

    Returns 0 when there are no episodes.
    """
    if not len(episode_rewards):
        return 0
    trailing = trailing_means(episode_rewards, window)
    final = trailing[-1]
    band = tol * abs(final) + 1e-12
    hits = np.nonzero(np.abs(trailing - final) <= band)[0]
    return int(hits[0]) + 1


def summarize_rows(rows: list[dict], n_steps: int = 10) -> dict:
    if not rows:
        log.warning("no metric rows to summarize")
        return {"effective_throughput": 0.0, "throughput": 0.0, "effective_ratio": 0.0,
                "latency_mean": 0.0, "drops": 0, "violations": 0, "episodes": 0,
                "mean_episode_reward": 0.0, "final_reward_trailing_mean": 0.0,
                "convergence_episode": 0, "warning": "empty metrics"}
    e2e = [r for r in rows if r["stage_id"].endswith("/e2e")] or rows
    thr = float(np.mean([float(r["throughput"]) for r in e2e]))
    eff = float(np.mean([float(r["effective_throughput"]) for r in e2e]))
    lats = [float(r["latency_mean"]) for r in e2e if r["latency_mean"] != ""]

    per_stage: dict[str, list[float]] = {}
    for r in rows:
        if r["reward"] != "":
            per_stage.setdefault(r["stage_id"], []).append(float(r["reward"]))
    episodes = []
    for rewards in per_stage.values():
        for i in range(0, len(rewards) - n_steps + 1, n_steps):
            episodes.append((i // n_steps, float(np.mean(rewards[i:i + n_steps]))))
    by_index: dict[int, list[float]] = {}
    for i, v in episodes:
        by_index.setdefault(i, []).append(v)
    curve = [float(np.mean(by_index[i])) for i in sorted(by_index)]
    return {
        "effective_throughput": eff,
        "throughput": thr,
        "effective_ratio": eff / thr if thr > 0 else 0.0,
        "latency_mean": float(np.mean(lats)) if lats else 0.0,
        "drops": int(sum(int(r["drops"]) for r in e2e)),
        "violations": int(sum(int(r["violations"]) for r in e2e)),
        "episodes": len(curve),
        "mean_episode_reward": float(np.mean(curve)) if curve else 0.0,
        "final_reward_trailing_mean": float(trailing_means(curve)[-1]) if curve else 0.0,
        "convergence_episode": convergence_episode(curve),
    }


def summarize_text(text: str, n_steps: int = 10) -> dict:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is not None:
        missing = [c for c in CSV_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"metrics CSV is missing columns {missing}")
    return summarize_rows(list(reader), n_steps)


def summarize(path, n_steps: int = 10) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"metrics file {path} does not exist")
    return summarize_text(path.read_text(), n_steps)
