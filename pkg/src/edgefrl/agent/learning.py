from __future__ import annotations

import logging
import math

import numpy as np

from ..nn import PROB_FLOOR, GradientTape, NumericalError, OptimizerState, backward, optimizer_step
from .network import AgentNetwork
from .types import Experience, LossReport, TrainConfig

log = logging.getLogger(__name__)


def compute_reward(throughput: float, request_rate: float, lat: float, batch_size: int,
                   slo_violations: int, cfg: TrainConfig) -> float:
    """Throughput ratio minus latency and oversize penalties, halved and clamped to [-1, 1].

    SLO violations inflate the oversize term alongside the batch size.
    """
    if not request_rate > 0:
        raise ValueError(f"request_rate must be positive, got {request_rate}")
    raw = 0.5 * (cfg.w_throughput * throughput / request_rate
                 - cfg.w_latency * lat
                 - cfg.w_oversize * (batch_size + slo_violations) / request_rate)
    return float(min(1.0, max(-1.0, raw)))


def compute_gae(rewards, values, gamma: float, lam: float) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (rewards.size + 1,):
        raise ValueError(f"need len(values) == len(rewards) + 1, got {values.size} and {rewards.size}")
    adv = np.zeros_like(rewards)
    running = 0.0
    for t in range(rewards.size - 1, -1, -1):
        delta = rewards[t] + gamma * values[t + 1] - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return adv


def probability_ratios(new_selected: np.ndarray, old_selected: np.ndarray) -> np.ndarray:
    """Per-step ratio, the product over heads of new/old probability of the taken action.

    Both arguments are (steps, heads) arrays of the chosen actions' probabilities.
    """
    new = np.asarray(new_selected, dtype=np.float64)
    old = np.maximum(np.asarray(old_selected, dtype=np.float64), PROB_FLOOR)
    return np.prod(new / old, axis=-1)


def policy_loss(ratios, advantages, rewards, clip: float) -> float:
    ratios = np.asarray(ratios, dtype=np.float64)
    weight = np.asarray(advantages, dtype=np.float64) + np.exp(-np.asarray(rewards, dtype=np.float64))
    return float(np.mean(np.minimum(clip * ratios, ratios) * weight))


def value_loss(estimates, rewards) -> float:
    diff = np.asarray(estimates, dtype=np.float64) - np.asarray(rewards, dtype=np.float64)
    return float(np.mean(diff * diff))


def action_penalty(res_indices, mt_indices, weight: float) -> float:
    total = np.asarray(res_indices, dtype=np.float64) + np.asarray(mt_indices, dtype=np.float64)
    return float(weight * np.mean(total))


def total_loss(l_p: float, l_v: float, episode: list[Experience], cfg: TrainConfig) -> float:
    pen = action_penalty([e.action.res_idx for e in episode], [e.action.mt_idx for e in episode],
                         cfg.penalty_weight)
    return l_p + l_v + pen


def _selected(probs: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return probs[np.arange(idx.size), idx]


def update(net: AgentNetwork, episode: list[Experience], opt: OptimizerState, cfg: TrainConfig,
           bootstrap_value: float = 0.0) -> tuple[LossReport, bool]:
    """One gated gradient step on the episode loss. Mutates ``net`` only when applied."""
    if not episode:
        raise ValueError("update needs a non-empty episode")
    n = len(episode)
    states = np.stack([np.asarray(e.state, dtype=np.float64) for e in episode])
    rewards = np.array([e.reward for e in episode], dtype=np.float64)
    estimates = [e.value_estimate for e in episode] + [bootstrap_value]
    adv = compute_gae(rewards, estimates, cfg.gamma, cfg.lam)

    tape = GradientTape()
    prob_nodes, value_node = net.forward_tape(tape, states)
    idx = np.array([net.head_indices(e.action) for e in episode], dtype=np.int64)
    n_heads = len(prob_nodes)
    new_sel = np.stack([_selected(tape.value(prob_nodes[h]), idx[:, h]) for h in range(n_heads)], axis=1)
    old_sel = np.maximum(
        np.array([[e.policy_probs[h][idx[t, h]] for h in range(n_heads)] for t, e in enumerate(episode)]),
        PROB_FLOOR)
    head_ratio = new_sel / old_sel
    ratio = np.prod(head_ratio, axis=1)
    weight = adv + np.exp(-rewards)

    l_p = float(np.mean(np.minimum(cfg.clip * ratio, ratio) * weight))
    head_policy = {
        name: float(np.mean(np.minimum(cfg.clip * head_ratio[:, h], head_ratio[:, h]) * weight))
        for h, name in enumerate(net.head_names)
    }
    values = tape.value(value_node)[:, 0]
    l_v = value_loss(values, rewards)
    pen = action_penalty([e.action.res_idx for e in episode], [e.action.mt_idx for e in episode],
                         cfg.penalty_weight)
    total = l_p + l_v + pen
    report = LossReport(total=total, policy=l_p, value=l_v, penalty=pen, head_policy=head_policy)

    if not math.isfinite(total):
        log.error("non-finite episode loss %r; update skipped", total)
        return report, False
    if abs(total) < cfg.gate_threshold:
        return report, False

    coef = np.where(cfg.clip * ratio < ratio, cfg.clip, 1.0)
    d_ratio = coef * weight / n
    out_grads = {}
    for h in range(n_heads):
        # d ratio / d new_h = prod of the other heads' ratios / old_h
        others = np.prod(np.delete(head_ratio, h, axis=1), axis=1) if n_heads > 1 else np.ones(n)
        g = np.zeros_like(tape.value(prob_nodes[h]))
        g[np.arange(n), idx[:, h]] = d_ratio * others / old_sel[:, h]
        out_grads[prob_nodes[h]] = g
    out_grads[value_node] = (2.0 * (values - rewards) / n)[:, None]
    grads = backward(tape, out_grads)
    try:
        optimizer_step(net.layers, grads, opt)
    except NumericalError as exc:
        log.error("update rejected: %s", exc)
        return report, False
    return report, True
