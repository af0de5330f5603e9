import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from edgefrl.agent import (
    ActionSpaceSpec,
    AgentNetwork,
    DiversityBuffer,
    Experience,
    TrainConfig,
    compute_gae,
    compute_reward,
    decide,
    probability_ratios,
    total_loss,
)
from edgefrl.agent.types import Action
from edgefrl.federation import (
    Candidate,
    DeviceStats,
    GlobalModel,
    SelectionConfig,
    aggregate,
    inverse_loss_weights,
    select_clients,
)
from edgefrl.federation.aggregation import LOSS_EPS
from edgefrl.nn import categorical_sample, neg_log_likelihood, softmax
from edgefrl.sim import DeviceProfile, contention

from oracles import gae_series
from test_federation import update_from

SETTINGS = settings(max_examples=60, deadline=None)
finite = st.floats(-1e4, 1e4, allow_nan=False)
unit = st.floats(0.0, 1.0, allow_nan=False)
choices = st.lists(st.integers(1, 64), min_size=1, max_size=5, unique=True).map(lambda v: tuple(sorted(v)))


@SETTINGS
@given(st.lists(finite, min_size=1, max_size=20))
def test_softmax_sums_to_one(logits):
    p = softmax(logits)
    assert np.isfinite(p).all() and (p >= 0).all()
    assert abs(p.sum() - 1.0) <= 1e-9


@SETTINGS
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8), st.integers(0, 2**31))
def test_sampling_is_a_function_of_rng_state(weights, seed):
    p = np.array(weights) / sum(weights)
    a = categorical_sample(p, np.random.default_rng(seed))
    b = categorical_sample(p, np.random.default_rng(seed))
    assert a == b and 0 <= a < len(p)


@SETTINGS
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8), st.data())
def test_nll_non_negative(weights, data):
    if sum(weights) == 0:
        weights = [1.0] * len(weights)
    p = np.array(weights) / sum(weights)
    i = data.draw(st.integers(0, len(p) - 1))
    v = neg_log_likelihood(p, i)
    assert v >= 0
    assert (v == 0) == (p[i] == 1.0)


@SETTINGS
@given(st.floats(0, 200), st.floats(0.5, 200), st.floats(0, 2), st.integers(1, 32), st.integers(0, 50),
       st.floats(0.001, 1.0))
def test_reward_monotone(thr, rate, lat, bs, viol, step):
    cfg = TrainConfig()
    r = compute_reward(thr, rate, lat, bs, viol, cfg)
    assert -1.0 <= r <= 1.0
    assert compute_reward(thr + step, rate, lat, bs, viol, cfg) >= r
    assert compute_reward(thr, rate, lat + step, bs, viol, cfg) <= r
    assert compute_reward(thr, rate, lat, bs + 1, viol, cfg) <= r
    assert compute_reward(thr, rate, lat, bs, viol + 1, cfg) <= r


@SETTINGS
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=30), st.data(), unit, unit)
def test_gae_matches_series(rewards, data, gamma, lam):
    values = data.draw(st.lists(st.floats(-5, 5), min_size=len(rewards) + 1, max_size=len(rewards) + 1))
    got = compute_gae(rewards, values, gamma, lam)
    assert np.max(np.abs(got - gae_series(rewards, values, gamma, lam))) <= 1e-12


@SETTINGS
@given(st.lists(st.lists(st.floats(1e-6, 1.0), min_size=3, max_size=3), min_size=1, max_size=20))
def test_unchanged_policy_gives_unit_ratio(rows):
    probs = np.array(rows)
    assert (probability_ratios(probs, probs) == 1.0).all()


@SETTINGS
@given(st.floats(-10, 10), st.floats(0, 10))
def test_total_loss_without_penalty(l_p, l_v):
    cfg = TrainConfig(penalty_weight=0.0)
    ep = [Experience(np.zeros(8), Action(2, 0, 2), 0.0, 0.0, ())]
    assert total_loss(l_p, l_v, ep, cfg) == l_p + l_v


@SETTINGS
@given(choices, choices, choices, st.integers(0, 1000))
def test_cascade_contract_for_any_space(res, bs, mt, seed):
    spec = ActionSpaceSpec(res, bs, mt)
    rng = np.random.default_rng(seed)
    net = AgentNetwork.initialize(spec, rng)
    assert net.layers["head_bs"].in_dim == 48 + len(res)
    s = rng.uniform(size=8)
    a1, p1, _ = decide(net, s, np.random.default_rng(seed))
    a2, p2, _ = decide(net, s, np.random.default_rng(seed))
    assert a1 == a2
    spec.validate(a1)
    assert [len(p) for p in p1] == list(spec.dims)


@SETTINGS
@given(st.integers(1, 12), st.lists(st.floats(0, 10), min_size=1, max_size=80))
def test_diversity_buffer_capacity_and_floor(capacity, scores):
    buf = DiversityBuffer(capacity)
    floor = None
    for i, d in enumerate(scores):
        buf.insert(Experience(np.full(8, i / 100), Action(0, 0, 0), 0.0, 0.0, (np.ones(1),), d))
        assert len(buf) <= capacity
        if len(buf) == capacity:
            m = buf.min_diversity()
            assert floor is None or m >= floor
            floor = m


@SETTINGS
@given(st.lists(st.floats(0, 100), min_size=1, max_size=10))
def test_head_weights(losses):
    w = inverse_loss_weights(losses)
    assert abs(w.sum() - 1.0) <= 1e-12
    order = np.argsort(losses, kind="stable")
    for a, b in zip(order, order[1:]):
        # strictness holds once the losses differ after the epsilon shift
        if losses[a] + LOSS_EPS < losses[b] + LOSS_EPS:
            assert w[a] > w[b]


@SETTINGS
@given(st.integers(1, 64), st.integers(1, 64))
def test_contention(m, cores):
    c = contention(m, cores)
    assert 0 < c <= 1
    assert (c == 1.0) == (m <= cores)
    if m >= cores:
        assert contention(m + 1, cores) < c


@SETTINGS
@given(st.floats(1e-4, 0.1), st.floats(1e-5, 0.05), st.integers(1, 64), st.integers(1, 63))
def test_batching_trade_off(base, per_item, max_batch, bs):
    d = DeviceProfile("x", base, per_item, 0.01, 0.01, max_batch=max_batch)
    lo, hi = d.batch_latency(bs), d.batch_latency(bs + 1)
    assert hi >= lo
    assert min(bs + 1, max_batch) / hi >= min(bs, max_batch) / lo - 1e-12


@settings(max_examples=15, deadline=None)
@given(st.permutations(range(4)), st.lists(st.floats(0, 3), min_size=4, max_size=4))
def test_aggregation_permutation_invariant(order, losses):
    rng = np.random.default_rng(0)
    spec = ActionSpaceSpec((1, 2, 4), (1, 2, 4, 8, 16), (1, 2, 4))
    nets = [AgentNetwork.initialize(spec, rng) for _ in range(5)]
    base = GlobalModel.from_network(nets[0])
    ups = [update_from(f"c{i}", nets[i + 1], {k: losses[i] for k in update_from("x", nets[0]).heads})
           for i in range(4)]
    ref = aggregate(base, ups).model.to_arrays()
    got = aggregate(base, [ups[i] for i in order]).model.to_arrays()
    assert all(np.array_equal(ref[k], got[k]) for k in ref)


@SETTINGS
@given(st.lists(st.tuples(st.integers(0, 4), unit, unit, unit, st.floats(0.1, 50)), min_size=1, max_size=12),
       st.floats(0.05, 1.0))
def test_selection_deterministic_and_bounded(rows, fraction):
    cands = [Candidate(f"a{i}", f"d{dev}", DeviceStats(m, c, v), bw) for i, (dev, m, c, v, bw) in enumerate(rows)]
    cfg = SelectionConfig(fraction=fraction)
    picked = select_clients(cands, cfg)
    assert picked == select_clients(list(reversed(cands)), cfg)
    assert picked and len(set(picked)) == len(picked)
    devices = {c.device_id for c in cands if c.agent_id in picked}
    assert len(devices) == max(1, int(np.ceil(fraction * len({c.device_id for c in cands}) - 1e-9)))
