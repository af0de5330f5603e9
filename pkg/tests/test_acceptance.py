"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The directional criteria run full presets over five seeds and take minutes.
"""

import math
import time

import numpy as np
import pytest

from edgefrl.agent import AgentNetwork, IAgent, TrainConfig, compute_gae, compute_reward, decide, update
from edgefrl.agent.network import BACKBONE_LAYERS
from edgefrl.agent.types import Experience
from edgefrl.experiment import preset, run
from edgefrl.experiment.presets import SWITCH_RATES, SWITCH_SEGMENT
from edgefrl.federation import (
    DeviceStats,
    GlobalModel,
    SelectionConfig,
    aggregate,
    broadcast_and_finetune,
    inverse_loss_weights,
    total_utility,
)
from edgefrl.nn import OptimizerState, neg_log_likelihood

from checks import SPACE, conservation_run, network_gradcheck, record
from oracles import gae_series
from test_federation import update_from

SEEDS = range(5)
TICK = 0.1
N_STEPS = 10


def reward_series(art, agent_id):
    return np.array([r for _, r in art.rewards[agent_id]])


def final_third(x):
    return x[2 * len(x) // 3:]


def test_criterion_1_numerics():
    start = time.perf_counter()
    grad_err = max(network_gradcheck(seed) for seed in range(20))

    rng = np.random.default_rng(0)
    gae_err = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 30))
        r, v = rng.uniform(-1, 1, n), rng.uniform(-2, 2, n + 1)
        gamma, lam = rng.uniform(0, 1, 2)
        gae_err = max(gae_err, float(np.max(np.abs(compute_gae(r, v, gamma, lam) - gae_series(r, v, gamma, lam)))))
    gae_err = max(gae_err, float(np.max(np.abs(compute_gae([1, 0], [0.5, 0.5, 0], 0.1, 0.1) - [0.545, -0.5]))))

    cfg = TrainConfig()
    hand = [
        (compute_reward(30, 30, 0.02, 4, 0, cfg), 0.5 * (1.1 - 0.2 - 8 / 30)),
        (compute_reward(15, 30, 0.05, 8, 0, cfg), 0.5 * (0.55 - 0.5 - 16 / 30)),
        (compute_reward(30, 30, 0.0, 1, 0, TrainConfig(w_throughput=2, w_latency=0, w_oversize=0)), 1.0),
        (neg_log_likelihood([1, 0, 0], 0), 0.0),
        (neg_log_likelihood([0.5, 0.25, 0.25], 0), math.log(2)),
        (neg_log_likelihood([0.25] * 4, 3), math.log(4)),
        (total_utility(DeviceStats(0.5, 0.5, 0.5), 40, SelectionConfig()), 1.0),
        (total_utility(DeviceStats(0.5, 0.5, 0.5), 10, SelectionConfig()), 0.5),
        (total_utility(DeviceStats(0, 0, 0), 40, SelectionConfig()), 0.0),
    ]
    hand_err = max(abs(got - want) for got, want in hand)
    elapsed = time.perf_counter() - start

    ok = grad_err < 1e-4 and gae_err < 1e-12 and hand_err < 1e-9 and elapsed < 10
    assert record(1, ok, f"gradcheck max rel err {grad_err:.2e} over 20 seeds, GAE err {gae_err:.1e}, "
                         f"hand-value err {hand_err:.1e}, {elapsed:.1f} s")


def test_criterion_2_aggregation_algebra():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    nets = [AgentNetwork.initialize(SPACE, rng) for _ in range(6)]
    base = GlobalModel.from_network(nets[0])

    single = aggregate(base, [update_from("c", nets[1])]).model
    mid_err = max(float(np.max(np.abs(single.backbone[n].weight - (nets[0].layers[n].weight + nets[1].layers[n].weight) / 2)))
                  for n in BACKBONE_LAYERS)

    keys = list(update_from("x", nets[0]).heads)
    ups = [update_from(f"c{i}", nets[i + 1], {k: float(rng.uniform(0.1, 2)) for k in keys}) for i in range(5)]
    ref = aggregate(base, ups).model.to_arrays()
    perm_ok = True
    for _ in range(5):
        order = rng.permutation(5)
        got = aggregate(base, [ups[i] for i in order]).model.to_arrays()
        perm_ok &= all(np.array_equal(ref[k], got[k]) for k in ref)

    sym = inverse_loss_weights([0.7, 0.7])
    sym_ok = bool(np.all(sym == 0.5))

    agent = IAgent("a", SPACE, TrainConfig(), np.random.default_rng(1))
    agent.begin_await()
    for _ in range(15):
        agent.step(rng.uniform(size=8), 0.0)
    model = GlobalModel.from_network(nets[2])
    broadcast_and_finetune(agent, model)
    frozen_ok = agent.net.same_parameters(model.network_for(SPACE), BACKBONE_LAYERS)
    elapsed = time.perf_counter() - start

    ok = mid_err == 0.0 and perm_ok and sym_ok and frozen_ok and elapsed < 10
    assert record(2, ok, f"single-client midpoint err {mid_err:.1e}, permutation-invariant {perm_ok}, "
                         f"equal-loss weights {sym.tolist()}, fine-tune freezes backbone {frozen_ok}, "
                         f"{elapsed:.1f} s")


def test_criterion_3_conservation():
    start = time.perf_counter()
    broken = over = ticks = 0
    prev = [0, 0]
    for per_stage, e2e, queued in conservation_run(10_000, seed=0):
        ticks += 1
        for m, q, q0 in zip(per_stage, queued, prev):
            broken += m.arrivals != m.completions + m.drops + (q - q0)
            over += m.effective_throughput > m.throughput
        over += e2e.effective_throughput > e2e.throughput
        prev = queued
    elapsed = time.perf_counter() - start
    ok = ticks == 10_000 and broken == 0 and over == 0 and elapsed < 30
    assert record(3, ok, f"{ticks} ticks, {broken} conservation breaks, {over} effective>total, {elapsed:.1f} s")


def test_criterion_4_determinism():
    start = time.perf_counter()
    cfg = preset("crl-switch")[0]
    a, b = run(cfg).csv_text, run(cfg).csv_text
    elapsed = time.perf_counter() - start
    ok = a == b and len(a) > 0 and elapsed < 120
    assert record(4, ok, f"crl-switch replay identical={a == b} ({len(a)} bytes), {elapsed:.1f} s")


def test_criterion_5_continual_learning():
    start = time.perf_counter()
    window = int(round(60 / TICK))
    shifts = range(1, len(SWITCH_RATES))
    learning = np.zeros(len(shifts))
    frozen = np.zeros(len(shifts))
    for seed in SEEDS:
        art = run(preset("crl-switch", seed)[0])
        for j, k in enumerate(shifts):
            i0 = int(round(k * SWITCH_SEGMENT / TICK))
            learning[j] += np.mean(art.effective["learning"][i0:i0 + window]) / len(SEEDS)
            frozen[j] += np.mean(art.effective["frozen"][i0:i0 + window]) / len(SEEDS)
    wins = int(np.sum(learning > frozen))
    elapsed = time.perf_counter() - start
    ok = wins >= 2 and elapsed < 300
    pairs = ", ".join(f"{l:.1f} vs {f:.1f}" for l, f in zip(learning, frozen))
    assert record(5, ok, f"learning beats frozen after {wins}/3 shifts (fps, learning vs frozen: {pairs}), "
                         f"{elapsed:.0f} s")


def test_criterion_6_federated_scaling():
    start = time.perf_counter()
    curves = {}
    for seed in SEEDS:
        for cfg in preset("frl-scale", seed):
            n = len(cfg.pipelines)
            if n > 4:
                continue
            art = run(cfg)
            per_decision = np.mean([reward_series(art, aid) for aid in sorted(art.rewards)], axis=0)
            usable = len(per_decision) // N_STEPS * N_STEPS
            curves.setdefault(n, []).append(per_decision[:usable].reshape(-1, N_STEPS).mean(axis=1))
    final = {n: float(np.mean([final_third(c) for c in cs])) for n, cs in curves.items()}
    spread = {n: float(np.array(cs).std(axis=0).mean()) for n, cs in curves.items()}
    elapsed = time.perf_counter() - start
    monotone = final[1] <= final[2] <= final[4]
    ok = monotone and spread[4] < spread[1] and elapsed < 600
    assert record(6, ok, "final-third reward " + ", ".join(f"{n}p={final[n]:.3f}" for n in sorted(final))
                  + f"; across-seed std 1p={spread[1]:.3f} 4p={spread[4]:.3f}, {elapsed:.0f} s")


def test_criterion_7_warm_start():
    start = time.perf_counter()
    wins = 0
    warm_final, blank_final = [], []
    for seed in SEEDS:
        art = run(preset("warm-cold", seed)[0])
        warm, blank = reward_series(art, "warm/0"), reward_series(art, "blank/0")
        early = 20 * N_STEPS
        wins += warm[:early].mean() > blank[:early].mean()
        warm_final.append(final_third(warm).mean())
        blank_final.append(final_third(blank).mean())
    w, b = float(np.mean(warm_final)), float(np.mean(blank_final))
    # rewards live in [-1, 1]; the ratio is taken on the shifted [0, 1] scale
    share = ((b + 1) / 2) / ((w + 1) / 2)
    elapsed = time.perf_counter() - start
    ok = wins >= 4 and share >= 0.8
    assert record(7, ok, f"warm beats blank over first 20 episodes in {wins}/5 seeds; final-third reward "
                         f"warm {w:.3f} blank {b:.3f}, blank at {share:.0%} of warm, {elapsed:.0f} s")


def test_criterion_8_single_head_ablation():
    start = time.perf_counter()
    wins = 0
    pairs = []
    for seed in SEEDS:
        art = run(preset("single-head", seed)[0])
        cascade = final_third(reward_series(art, "cascade/0")).mean()
        single = final_third(reward_series(art, "single/0")).mean()
        wins += single < cascade
        pairs.append(f"{cascade:.3f}/{single:.3f}")
    elapsed = time.perf_counter() - start
    assert record(8, wins >= 4, f"single-head below cascade in {wins}/5 seeds "
                                f"(cascade/single: {', '.join(pairs)}), {elapsed:.0f} s")


def test_criterion_9_overheads():
    rng = np.random.default_rng(0)
    cfg = TrainConfig()
    agent = IAgent("a", SPACE, cfg, np.random.default_rng(1))
    largest = 0
    reward = None
    for _ in range(3000):
        agent.step(rng.uniform(size=8), reward)
        reward = float(rng.uniform(-1, 1))
        largest = max(largest, len(agent.diversity))
    buffer_ok = largest <= cfg.buffer_capacity

    net = AgentNetwork.initialize(SPACE, rng)
    episode = []
    for _ in range(cfg.n_steps):
        s = rng.uniform(size=8)
        action, probs, value = decide(net, s, rng)
        episode.append(Experience(s, action, float(rng.uniform(-1, 1)), value, tuple(probs)))
    before = net.copy()
    _, applied = update(net, episode, OptimizerState(), TrainConfig(gate_threshold=1e9))
    gate_ok = not applied and net.same_parameters(before)

    sizes = [len(AgentNetwork.initialize(SPACE, rng, single_head=sh).to_bytes()) for sh in (False, True)]
    payload_ok = max(sizes) < 100_000
    ok = buffer_ok and gate_ok and payload_ok
    assert record(9, ok, f"buffer peak {largest}/{cfg.buffer_capacity}, gate-closed untouched {gate_ok}, "
                         f"payload {sizes[0] / 1000:.1f} KB cascade / {sizes[1] / 1000:.1f} KB single-head")
