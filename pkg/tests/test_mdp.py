import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kucbrl.exceptions import ConvergenceError, InvalidInputError
from kucbrl.kernels import KernelSpec
from kucbrl.mdp import (
    MDPModel,
    expected_value,
    expected_values,
    finite_horizon_values,
    is_communicating,
    make_smooth_mdp,
    policy_gain,
    solve_average_reward,
    stationary_distribution,
    step,
)

from oracles import policy_iteration_gain

K3 = KernelSpec("se", 3, lengthscale=0.3)


def small_model(seed=0, S=6, A=3):
    return make_smooth_mdp(seed, S, A, 2, K3, 0.05, 5.0)


def two_state():
    # action 1 in state 0 moves to the rewarding state 1
    P = np.array([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]])
    R = np.array([[0.0, 0.0], [1.0, 0.5]])
    return MDPModel(np.array([[0.0], [1.0]]), np.array([[0.0], [1.0]]), R, P)


def test_two_state_gain_is_one():
    sol = solve_average_reward(two_state())
    assert sol.j_star == pytest.approx(1.0, abs=1e-10)
    assert sol.policy.tolist() == [1, 0]
    assert sol.residual <= 1e-9


def test_periodic_chain_converges():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = P[1, 0, 0] = 1.0
    m = MDPModel(np.array([[0.0], [1.0]]), np.array([[0.0]]), np.array([[1.0], [0.0]]), P)
    assert solve_average_reward(m).j_star == pytest.approx(0.5, abs=1e-10)


@given(seed=st.integers(0, 10**4))
def test_solver_matches_policy_iteration(seed):
    m = small_model(seed)
    sol = solve_average_reward(m)
    J, _ = policy_iteration_gain(m)
    assert sol.j_star == pytest.approx(J, abs=1e-9)
    assert policy_gain(m, sol.policy) == pytest.approx(sol.j_star, abs=1e-9)
    assert sol.v_star[0] == 0.0
    assert sol.span_v == pytest.approx(sol.v_star.max() - sol.v_star.min())


def test_generator_is_deterministic_and_valid():
    a, b = small_model(3), small_model(3)
    assert np.array_equal(a.transitions, b.transitions) and np.array_equal(a.rewards, b.rewards)
    assert a.rewards.min() == 0.0 and a.rewards.max() == 1.0
    assert np.all(a.transitions >= 0.05 / a.S - 1e-15)
    assert is_communicating(a)
    assert not np.array_equal(a.transitions, small_model(4).transitions)


def test_reward_action_weight_zero_means_state_rewards():
    m = make_smooth_mdp(1, 5, 3, 2, K3, 0.05, 5.0, reward_action_weight=0.0)
    assert np.allclose(m.rewards, m.rewards[:, :1])
    m = make_smooth_mdp(1, 5, 3, 2, K3, 0.05, 5.0, reward_action_weight=1.0)
    assert not np.allclose(m.rewards, m.rewards[:, :1])


def test_step_frequencies_match_transitions():
    m = small_model(0, S=4, A=2)
    rng = np.random.default_rng(0)
    n = 40000
    counts = np.bincount([step(m, 1, 1, rng)[0] for _ in range(n)], minlength=4)
    p = m.transitions[1, 1]
    assert np.all(np.abs(counts / n - p) <= 4 * np.sqrt(p * (1 - p) / n) + 1e-12)


def test_finite_horizon_brute_force():
    m = small_model(2, S=3, A=2)
    import itertools

    best = np.full(3, -np.inf)
    for plan in itertools.product(range(2), repeat=3 * 2):  # nonstationary 2-step policies
        pol = np.array(plan).reshape(2, 3)
        for s in range(3):
            v1 = m.rewards[np.arange(3), pol[1]]
            val = m.rewards[s, pol[0, s]] + m.transitions[s, pol[0, s]] @ v1
            best[s] = max(best[s], val)
    assert np.allclose(finite_horizon_values(m, 2), best)


def test_expected_values_and_stationary():
    m = small_model(1)
    v = np.arange(m.S, dtype=float)
    assert expected_value(m, v, 2, 1) == pytest.approx(expected_values(m, v)[2, 1])
    P = m.transitions[:, 0]
    mu = stationary_distribution(P)
    assert np.allclose(mu @ P, mu) and mu.sum() == pytest.approx(1.0)


def test_save_load_roundtrip(tmp_path):
    m = small_model(5)
    m.save(tmp_path / "m.json")
    m2 = MDPModel.load(tmp_path / "m.json")
    assert np.array_equal(m.transitions, m2.transitions) and np.array_equal(m.states, m2.states)
    assert m2.mixing_eps == m.mixing_eps


def test_models_are_immutable():
    with pytest.raises(ValueError):
        small_model().rewards[0, 0] = 0.3


def test_validation_errors():
    with pytest.raises(InvalidInputError):
        make_smooth_mdp(0, 1, 2, 2, K3, 0.05, 1.0)
    with pytest.raises(InvalidInputError):
        make_smooth_mdp(0, 4, 2, 2, KernelSpec("se", 2), 0.05, 1.0)
    P = np.full((2, 1, 2), 0.6)
    with pytest.raises(InvalidInputError):
        MDPModel(np.zeros((2, 1)), np.zeros((1, 1)), np.zeros((2, 1)), P)
    with pytest.raises(ConvergenceError):
        solve_average_reward(small_model(), max_iters=2)
