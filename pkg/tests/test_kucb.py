import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kucbrl.exceptions import InvalidInputError
from kucbrl.krr import CountedGramState
from kucbrl.kucb import batch_beta, plan_window, run, run_policy, select_action
from kucbrl.mdp import solve_average_reward

from helpers import K3, agent_config, model


def test_empty_data_plan_is_prior_bonus():
    m = model()
    g = CountedGramState(K3, 1.0, m.state_action_points)
    plan = plan_window(g, m.rewards, [], 4, 0.3)
    assert np.array_equal(plan.fhat, np.zeros_like(plan.fhat))
    assert np.allclose(plan.sigma, 1.0)
    assert np.allclose(plan.q, np.clip(m.rewards + 0.3, 0, 4))
    assert np.array_equal(plan.v_next[-1], np.zeros(m.S))


def test_infinite_beta_saturates():
    m = model()
    g = CountedGramState(K3, 1.0, m.state_action_points)
    plan = plan_window(g, m.rewards, [], 3, math.inf)
    assert np.all(plan.q == 3.0)


@given(seed=st.integers(0, 1000), w=st.integers(1, 6), beta=st.floats(0, 50))
def test_plan_values_lie_in_window_range(seed, w, beta):
    m = model(seed % 5)
    rng = np.random.default_rng(seed)
    g = CountedGramState(K3, 1.0, m.state_action_points)
    idx = rng.integers(0, m.S * m.A, 30)
    for u in idx:
        g.append_index(int(u))
    succ = rng.integers(0, m.S, 30)
    plan = plan_window(g, m.rewards, succ, w, beta)
    assert np.all(plan.q >= 0) and np.all(plan.q <= w)
    assert np.array_equal(plan.v, plan.q.max(axis=2))
    # each level's targets are the next level's values
    assert np.array_equal(plan.v_next[:-1], plan.v[1:])


def test_ties_pick_lowest_action():
    m = model()
    g = CountedGramState(K3, 1.0, m.state_action_points)
    plan = plan_window(g, m.rewards, [], 2, math.inf)
    assert select_action(plan, 1, 0) == 0
    with pytest.raises(InvalidInputError):
        select_action(plan, 3, 0)


@pytest.mark.parametrize("w", [1, 4, 7])
def test_batch_structure(w):
    m = model()
    tr = run(m, agent_config(w=w, T=50), np.random.default_rng(0), retain_internals=True)
    assert tr.T == 50 and tr.factorizations == math.ceil(50 / w) == len(tr.batches)
    assert np.array_equal(tr.t0, w * (np.arange(50) // w))
    assert [b.t0 for b in tr.batches] == list(range(0, 50, w))
    assert all(b.n == b.t0 for b in tr.batches)
    assert np.all((tr.reward >= 0) & (tr.reward <= 1))
    assert np.array_equal(tr.state[1:], tr.next_state[:-1])


def test_dense_and_counted_runs_agree():
    m = model(1)
    cfg = agent_config(w=3, T=45)
    a = run(m, cfg, np.random.default_rng(7))
    b = run(m, cfg, np.random.default_rng(7), dense=True)
    assert np.array_equal(a.action, b.action) and np.array_equal(a.state, b.state)
    assert np.allclose(a.sigma_used, b.sigma_used, atol=1e-10)
    assert np.allclose(a.beta_used, b.beta_used, rtol=1e-10)


def test_runs_are_reproducible():
    m = model(2)
    cfg = agent_config()
    a = run(m, cfg, np.random.default_rng(3))
    b = run(m, cfg, np.random.default_rng(3))
    assert np.array_equal(a.action, b.action) and np.array_equal(a.sigma_used, b.sigma_used)


def test_beta_override_and_scale():
    m = model()
    g = CountedGramState(K3, 1.0, m.state_action_points)
    cfg = agent_config()
    assert batch_beta(g, replace(cfg, beta_override=0.0)) == 0.0
    assert batch_beta(g, replace(cfg, beta_scale=0.5)) == pytest.approx(0.5 * batch_beta(g, cfg))
    # delta is split over ceil(T / w) windows
    split = replace(cfg, T=cfg.T * 10)
    assert batch_beta(g, split) > batch_beta(g, cfg)


def test_oracle_policy_rollout_earns_gain():
    m = model(4)
    sol = solve_average_reward(m)
    tr = run_policy(m, 20000, np.random.default_rng(0), sol.policy, agent="oracle_policy")
    assert tr.reward.mean() == pytest.approx(sol.j_star, abs=0.02)
    assert np.all(tr.action == sol.policy[tr.state])


def test_config_validation():
    with pytest.raises(InvalidInputError):
        agent_config(w=10, T=5)
    with pytest.raises(InvalidInputError):
        agent_config(rho=2.0).__class__(w=1, rho=1.0, T=5, kernel=K3,
                                        confidence=agent_config(rho=2.0).confidence)
    with pytest.raises(InvalidInputError):
        agent_config(beta_override=-1.0)
