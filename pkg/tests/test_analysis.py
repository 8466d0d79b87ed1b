import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kucbrl.analysis import (
    Replay,
    check_coverage,
    check_delayed_potential,
    check_elliptical,
    check_optimism,
    check_variance_ratio,
    cumulative_regret,
    delayed_sigma,
    gamma_bound_poly,
    theorem_checks,
)
from kucbrl.exceptions import InvalidInputError
from kucbrl.kernels import KernelSpec
from kucbrl.krr import GramState
from kucbrl.kucb import RunTrace, run, run_policy

from helpers import K3, agent_config, model


def fake_trace(z_index, support, rho=1.0, w=1, kernel=None, rewards=None):
    z = np.asarray(z_index, dtype=np.int64)
    T = z.size
    kernel = kernel or KernelSpec("se", support.shape[1], lengthscale=0.3)
    return RunTrace(agent="kucb", seed=0, w=w, rho=rho, kernel=kernel, support=support, n_actions=1,
                    state=z, action=np.zeros(T, dtype=np.int64),
                    reward=np.zeros(T) if rewards is None else np.asarray(rewards, float),
                    next_state=np.zeros(T, dtype=np.int64), t0=w * (np.arange(T) // w),
                    sigma_used=np.full(T, np.nan), beta_used=np.full(T, np.nan))


def test_cumulative_regret_examples():
    tr = fake_trace([0] * 4, np.zeros((1, 1)))
    assert cumulative_regret(tr, 0.5).tolist() == [0.5, 1.0, 1.5, 2.0]
    tr = fake_trace([0] * 3, np.zeros((1, 1)), rewards=[0.5] * 3)
    assert np.all(cumulative_regret(tr, 0.5) == 0.0)


def test_final_regret_matches_summation():
    m = model()
    tr = run_policy(m, 500, np.random.default_rng(0))
    assert cumulative_regret(tr, 0.7)[-1] == pytest.approx(500 * 0.7 - math.fsum(tr.reward), abs=1e-12)


def test_replay_matches_dense_state(rng):
    support = rng.random((7, 2))
    z = rng.integers(0, 7, 40)
    k = KernelSpec("se", 2, lengthscale=0.4)
    rep = Replay(k, support, 0.3, z)
    g = GramState(k, 0.3)
    for t, u in enumerate(z):
        assert rep.prev_var[t] == pytest.approx(g.posterior_variance(support[u]), abs=1e-12)
        assert np.allclose(rep.var_table[t], g.posterior_variances(support), atol=1e-12)
        g.append(support[u])
    assert rep.logdet[-1] == pytest.approx(g.logdet, rel=1e-12)
    assert rep.subsequence_info_gain(z) == pytest.approx(rep.info_gain(), rel=1e-10)


def test_elliptical_single_step_equality():
    tr = fake_trace([0], np.zeros((1, 1)))
    rep = check_elliptical(tr)
    assert rep.passed and abs(rep.worst_margin) <= 1e-12
    assert check_elliptical(fake_trace([], np.zeros((1, 1)))).worst_margin == 0.0


def test_delayed_potential_single_window():
    tr = fake_trace(np.arange(5), np.linspace(0, 1, 5)[:, None], w=5)
    rep = check_delayed_potential(tr)
    assert rep.detail["lhs"] == pytest.approx(5.0)
    assert rep.passed and rep.detail["rhs"] > 5.0


def test_delayed_potential_duplicated_point():
    tr = fake_trace([0] * 30, np.zeros((1, 1)), w=3)
    rep = check_delayed_potential(tr)
    assert rep.passed and rep.worst_margin > 0


def test_variance_ratio_far_point_is_tight():
    k = KernelSpec("se", 1, lengthscale=0.01)
    tr = fake_trace([1], np.array([[0.0], [1.0]]), kernel=k)
    rep = Replay.from_trace(tr)
    assert rep.var_table[0, 0] / rep.var_table[1, 0] == pytest.approx(1.0, abs=1e-12)
    assert check_variance_ratio(tr, 50, np.random.default_rng(0)).passed


@given(seed=st.integers(0, 10**5), rho=st.sampled_from([0.1, 1.0, 10.0]), w=st.integers(1, 6))
def test_theorem_checks_hold_on_random_sequences(seed, rho, w):
    rng = np.random.default_rng(seed)
    support = rng.random((8, 3))
    tr = fake_trace(rng.integers(0, 8, 60), support, rho=rho, w=w, kernel=K3)
    for report in theorem_checks(tr, samples=100, rng=rng):
        assert report.passed, report


def test_agent_sigma_matches_replay():
    m = model()
    tr = run(m, agent_config(w=4, T=80), np.random.default_rng(1))
    assert np.allclose(tr.sigma_used, delayed_sigma(tr), atol=1e-10)
    rep = check_delayed_potential(tr)
    assert rep.passed and rep.detail["sigma_mismatch"] <= 1e-10


def test_coverage_first_window_formula():
    m = model()
    tr = run(m, agent_config(w=3, T=3), np.random.default_rng(0), retain_internals=True)
    plan = tr.plans[0]
    assert np.array_equal(plan.fhat, np.zeros_like(plan.fhat))
    f = m.transitions @ plan.v_next[0]
    expect = int(np.count_nonzero(np.abs(f) > plan.beta_used * plan.sigma))
    rep = check_coverage(tr, m)
    assert rep.violations == expect
    # last planning level has zero targets: zero error, margin = width
    assert np.array_equal(plan.v_next[-1], np.zeros(m.S))


def test_coverage_sabotage_and_sentinel():
    m = model()
    cfg = agent_config(w=3, T=30)
    bad = run(m, replace(cfg, beta_override=0.0), np.random.default_rng(0), retain_internals=True)
    assert not check_coverage(bad, m).passed
    inf = run(m, replace(cfg, beta_override=math.inf), np.random.default_rng(0), retain_internals=True)
    assert check_coverage(inf, m).violations == 0


def test_optimism_under_coverage():
    m = model()
    tr = run(m, agent_config(w=3, T=60), np.random.default_rng(0), retain_internals=True)
    assert check_coverage(tr, m).passed
    assert check_optimism(tr, m).passed


def test_internals_required():
    m = model()
    tr = run(m, agent_config(w=3, T=6), np.random.default_rng(0))
    with pytest.raises(InvalidInputError):
        check_coverage(tr, m)


def test_gamma_bound_reference():
    assert gamma_bound_poly(0, 1.0, 2.0) == 0.0
    assert gamma_bound_poly(math.e - 1, 1.0, 2.0) == pytest.approx(math.sqrt(math.e - 1), rel=1e-12)
    assert gamma_bound_poly(100, 1.0, 1e6) == pytest.approx(math.log(101), rel=1e-4)
    with pytest.raises(InvalidInputError):
        gamma_bound_poly(1, 1.0, 1.0)


def test_unnormalised_ratio_bound_fails_for_small_rho():
    # two nearby points, rho = 0.1: one observation cuts the variance at z
    # by far more than 1 + sigma^2(z_j); the rho-normalised bound still holds
    k = KernelSpec("se", 1, lengthscale=1.0)
    tr = fake_trace([1], np.array([[0.0], [0.05]]), rho=0.1, kernel=k)
    rep = Replay.from_trace(tr)
    ratio = rep.var_table[0, 0] / rep.var_table[1, 0]
    assert ratio > 1.0 + rep.var_table[0, 1]
    assert ratio <= 1.0 + rep.var_table[0, 1] / 0.1
