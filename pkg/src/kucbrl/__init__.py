"""Kernel-based optimistic reinforcement learning for average-reward MDPs."""

from .analysis import (
    CheckReport,
    Replay,
    check_coverage,
    check_delayed_potential,
    check_elliptical,
    check_optimism,
    check_variance_ratio,
    cumulative_regret,
    gamma_bound_poly,
    theorem_checks,
)
from .confidence import ConfidenceParams, beta, beta_full, beta_simplified, choose_M, default_params
from .exceptions import ConvergenceError, InvalidInputError, NumericalError
from .kernels import EigenProfile, KernelSpec, default_profile, estimate_state_profile, gram, tail_sums
from .krr import CountedGramState, GramState
from .kucb import AgentConfig, RunTrace, WindowPlan, plan_window, run, run_policy, select_action
from .mdp import MDPModel, OptimalSolution, make_smooth_mdp, policy_gain, solve_average_reward

__version__ = "0.1.0"
