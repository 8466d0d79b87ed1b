"""Kernel-based optimistic agent for average-reward MDPs.

Every ``w`` steps the agent freezes its dataset, plans backwards over a
``w``-step window with optimistic state-action values, and then acts
greedily on those values for the next ``w`` steps. Environment steps are
1-based: step ``t`` belongs to the window anchored at
``t0 = w * ((t - 1) // w)`` and its predictions use exactly the first ``t0``
transitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import confidence as conf
from .exceptions import InvalidInputError
from .kernels import KernelSpec
from .krr import CountedGramState, GramState
from .mdp import MDPModel, step


@dataclass(frozen=True)
class AgentConfig:
    """Agent hyperparameters.

    ``beta_override`` replaces the computed width multiplier with a constant;
    0 gives the no-bonus ablation. ``beta_scale`` multiplies the computed
    width and is ignored when an override is set.
    """

    w: int
    rho: float
    T: int
    kernel: KernelSpec
    confidence: conf.ConfidenceParams
    beta_scale: float = 1.0
    beta_override: Optional[float] = None
    tie_break: str = "lowest"

    def __post_init__(self):
        if self.w < 1 or self.T < 1:
            raise InvalidInputError("w and T must be positive")
        if self.w > self.T:
            raise InvalidInputError("window w may not exceed the horizon T")
        if not self.rho > 0 or not self.beta_scale > 0:
            raise InvalidInputError("rho and beta_scale must be positive")
        if self.tie_break != "lowest":
            raise InvalidInputError("only lowest-index tie breaking is supported")
        if self.confidence.rho != self.rho:
            raise InvalidInputError("confidence.rho must equal the agent's rho")
        if self.beta_override is not None and self.beta_override < 0:
            raise InvalidInputError("beta_override must be nonnegative")

    @property
    def n_batches(self) -> int:
        return math.ceil(self.T / self.w)


@dataclass
class WindowPlan:
    """Optimistic values for one window; row ``h - 1`` serves step ``t0 + h``.

    ``fhat[h - 1]`` is the prediction of the expected value of ``v_next[h - 1]``
    (the next level's value table; zeros at the last level).
    """

    q: np.ndarray  # (w, S, A)
    v: np.ndarray  # (w, S)
    sigma: np.ndarray  # (S, A)
    fhat: np.ndarray  # (w, S, A)
    v_next: np.ndarray  # (w, S)
    beta_used: float
    t0: int


def batch_beta(gram, config: AgentConfig) -> float:
    """Width multiplier for a window anchored at ``t0 = len(gram)``.

    The confidence level is split evenly over the ``ceil(T / w)`` windows.
    """
    if config.beta_override is not None:
        return float(config.beta_override)
    params = config.confidence.with_delta(config.confidence.delta / config.n_batches)
    return config.beta_scale * conf.beta(params, gram.n, gram.logdet)


def _summed_targets(gram, successors, S):
    """Matrix ``N[u, s']`` counting observations of ``z_u`` followed by ``s'``."""
    if isinstance(gram, CountedGramState):
        U = gram.U
        hist = np.asarray(gram.history, dtype=np.int64)
        succ = np.asarray(successors, dtype=np.int64)
        return np.bincount(hist * S + succ, minlength=U * S).reshape(U, S).astype(float)
    return None


def plan_window(gram, rewards, successors, w: int, beta: float, points=None) -> WindowPlan:
    """Backward optimistic planning over a window of ``w`` steps.

    Parameters
    ----------
    gram : CountedGramState or GramState (or a snapshot of either)
        Data frozen at the window anchor ``t0 = len(gram)``.
    rewards : (S, A) array
        Known reward table.
    successors : int array of length ``t0``
        Successor state index observed after each recorded point.
    w : int
        Window length.
    beta : float
        Width multiplier applied to the posterior standard deviation.
    points : (S * A, d) array, optional
        State-action coordinates; required for a dense ``GramState``.
    """
    rewards = np.asarray(rewards, dtype=float)
    S, A = rewards.shape
    successors = np.asarray(successors, dtype=np.int64)
    if successors.size != gram.n:
        raise InvalidInputError("need one successor per recorded point")
    counted = isinstance(gram, CountedGramState)
    if counted:
        var = gram.support_variances()
        N = _summed_targets(gram, successors, S)
    else:
        if points is None:
            raise InvalidInputError("dense planning needs state-action points")
        var = gram.posterior_variances(points)
    sigma = np.sqrt(var).reshape(S, A)
    if math.isinf(beta):
        bonus = np.where(sigma > 0, math.inf, 0.0)
    else:
        bonus = beta * sigma

    q = np.empty((w, S, A))
    v = np.empty((w, S))
    fhat = np.empty((w, S, A))
    v_next = np.empty((w, S))
    nxt = np.zeros(S)
    for h in range(w, 0, -1):
        if gram.n == 0:
            pred = np.zeros(S * A)
        elif counted:
            pred = gram.predict_support(N @ nxt)
        else:
            pred = gram.predict_many(points, nxt[successors])
        pred = pred.reshape(S, A)
        q[h - 1] = np.clip(rewards + pred + bonus, 0.0, float(w))
        v[h - 1] = q[h - 1].max(axis=1)
        fhat[h - 1] = pred
        v_next[h - 1] = nxt
        nxt = v[h - 1]
    return WindowPlan(q=q, v=v, sigma=sigma, fhat=fhat, v_next=v_next, beta_used=float(beta), t0=gram.n)


def select_action(plan: WindowPlan, h: int, s: int) -> int:
    """Greedy action for step ``h`` (1-based) of the window; lowest index wins ties."""
    if not 1 <= h <= plan.q.shape[0]:
        raise InvalidInputError(f"step-in-window {h} outside 1..{plan.q.shape[0]}")
    return int(np.argmax(plan.q[h - 1, s]))


@dataclass
class BatchRecord:
    t0: int
    n: int
    logdet: float
    info_gain: float
    beta: float


@dataclass
class RunTrace:
    """Per-step log of one run plus per-window records.

    Arrays are indexed by ``t - 1`` for 1-based step ``t``. ``plans`` holds the
    :class:`WindowPlan` of every window when internals are retained.
    """

    agent: str
    seed: int
    w: int
    rho: float
    kernel: KernelSpec
    support: np.ndarray
    n_actions: int
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    t0: np.ndarray
    sigma_used: np.ndarray
    beta_used: np.ndarray
    batches: list = field(default_factory=list)
    plans: Optional[list] = None
    factorizations: int = 0
    config: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.state.size

    @property
    def z_index(self) -> np.ndarray:
        """Flat state-action index of every visited point."""
        return self.state * self.n_actions + self.action


def _empty_trace(agent, seed, model, config, T, w):
    return dict(
        agent=agent,
        seed=seed,
        w=w,
        rho=config.rho if config is not None else float("nan"),
        kernel=config.kernel if config is not None else None,
        support=model.state_action_points,
        n_actions=model.A,
        state=np.zeros(T, dtype=np.int64),
        action=np.zeros(T, dtype=np.int64),
        reward=np.zeros(T),
        next_state=np.zeros(T, dtype=np.int64),
        t0=np.zeros(T, dtype=np.int64),
        sigma_used=np.full(T, np.nan),
        beta_used=np.full(T, np.nan),
    )


def run(model: MDPModel, config: AgentConfig, rng: np.random.Generator, *, seed: int = 0,
        retain_internals: bool = False, dense: bool = False, agent: str = "kucb") -> RunTrace:
    """Run the agent for ``config.T`` steps from state 0.

    The agent reads only coordinates, the reward table and sampled
    transitions. ``dense=True`` uses the generic incremental-Cholesky state
    instead of the counted one (identical results, much slower for long runs).
    """
    T, w = config.T, config.w
    rec = _empty_trace(agent, seed, model, config, T, w)
    points = model.state_action_points
    if dense:
        gram = GramState(config.kernel, config.rho)
    else:
        gram = CountedGramState(config.kernel, config.rho, points)
    plans = [] if retain_internals else None
    batches = []
    successors: list[int] = []
    factorizations = 0
    s = 0
    plan = None
    for t in range(1, T + 1):
        if (t - 1) % w == 0:
            snap = gram.snapshot()
            beta = batch_beta(snap, config)
            plan = plan_window(snap, model.rewards, successors, w, beta, points=points)
            factorizations += 1
            batches.append(BatchRecord(t0=t - 1, n=snap.n, logdet=snap.logdet,
                                       info_gain=snap.info_gain(), beta=beta))
            if plans is not None:
                plans.append(plan)
        h = t - plan.t0
        a = select_action(plan, h, s)
        s_next, r = step(model, s, a, rng)
        i = t - 1
        rec["state"][i], rec["action"][i], rec["reward"][i] = s, a, r
        rec["next_state"][i], rec["t0"][i] = s_next, plan.t0
        rec["sigma_used"][i] = plan.sigma[s, a]
        rec["beta_used"][i] = plan.beta_used
        if dense:
            gram.append(points[s * model.A + a])
        else:
            gram.append_index(s * model.A + a)
        successors.append(s_next)
        s = s_next
    return RunTrace(batches=batches, plans=plans, factorizations=factorizations, **rec)


def run_policy(model: MDPModel, T: int, rng: np.random.Generator, policy=None, *, seed: int = 0,
               agent: str = "random", w: int = 1, config: Optional[AgentConfig] = None) -> RunTrace:
    """Roll out a fixed policy; ``policy=None`` draws actions uniformly."""
    rec = _empty_trace(agent, seed, model, config, T, w)
    s = 0
    for t in range(1, T + 1):
        a = int(rng.integers(model.A)) if policy is None else int(policy[s])
        s_next, r = step(model, s, a, rng)
        i = t - 1
        rec["state"][i], rec["action"][i], rec["reward"][i] = s, a, r
        rec["next_state"][i], rec["t0"][i] = s_next, w * ((t - 1) // w)
        s = s_next
    return RunTrace(**rec)
