"""Finite MDPs embedded in a Euclidean box, with exact average-reward solvers.

The true transition tensor lives here only as ground truth: for sampling
successor states, for the optimal gain used in regret, and for the exact
expected values used by coverage checks. Agents see rewards, coordinates and
sampled transitions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.special import softmax

from .exceptions import ConvergenceError, InvalidInputError, NumericalError
from .kernels import KernelSpec

MAX_ATTEMPTS = 5


@dataclass(frozen=True, eq=False)
class MDPModel:
    """Finite MDP with states and actions embedded in ``[0, 1]^d``.

    State-action pair ``(s, a)`` has flat index ``s * A + a`` and coordinates
    ``concat(states[s], actions[a])``.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    transitions: np.ndarray
    mixing_eps: float = 0.0

    def __post_init__(self):
        S, A = self.rewards.shape
        if self.states.shape[0] != S or self.actions.shape[0] != A:
            raise InvalidInputError("states/actions do not match the reward table")
        if self.transitions.shape != (S, A, S):
            raise InvalidInputError(f"transitions must have shape {(S, A, S)}")
        if np.any(self.transitions < 0) or np.max(np.abs(self.transitions.sum(-1) - 1)) > 1e-12:
            raise InvalidInputError("transition rows must be probability vectors")
        if np.any(self.rewards < 0) or np.any(self.rewards > 1):
            raise InvalidInputError("rewards must lie in [0, 1]")
        for arr in (self.states, self.actions, self.rewards, self.transitions):
            arr.flags.writeable = False

    @property
    def S(self) -> int:
        return self.rewards.shape[0]

    @property
    def A(self) -> int:
        return self.rewards.shape[1]

    @property
    def d_s(self) -> int:
        return self.states.shape[1]

    @property
    def d_a(self) -> int:
        return self.actions.shape[1]

    @cached_property
    def state_action_points(self) -> np.ndarray:
        """All ``S * A`` state-action coordinates in flat-index order."""
        S, A = self.S, self.A
        return np.hstack([np.repeat(self.states, A, axis=0), np.tile(self.actions, (S, 1))])

    @cached_property
    def _cdf(self) -> np.ndarray:
        return np.cumsum(self.transitions, axis=-1)

    def to_dict(self) -> dict:
        return {
            "states": self.states.tolist(),
            "actions": self.actions.tolist(),
            "rewards": self.rewards.tolist(),
            "transitions": self.transitions.tolist(),
            "mixing_eps": self.mixing_eps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MDPModel":
        return cls(
            states=np.array(data["states"], dtype=float),
            actions=np.array(data["actions"], dtype=float),
            rewards=np.array(data["rewards"], dtype=float),
            transitions=np.array(data["transitions"], dtype=float),
            mixing_eps=float(data.get("mixing_eps", 0.0)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "MDPModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class OptimalSolution:
    j_star: float
    v_star: np.ndarray
    q_star: np.ndarray
    span_v: float
    iters: int
    residual: float

    @property
    def policy(self) -> np.ndarray:
        return np.argmax(self.q_star, axis=1)


def _unit_norm_function(rng, kernel, anchors, n_funcs):
    """Coefficients of ``n_funcs`` random kernel expansions with unit RKHS norm."""
    K = kernel.matrix(anchors, anchors)
    K = 0.5 * (K + K.T)
    evals = np.linalg.eigvalsh(K)
    if evals[0] <= 1e-13 * evals[-1]:
        raise NumericalError("anchor Gram matrix is degenerate")
    c = rng.standard_normal((anchors.shape[0], n_funcs))
    norms = np.sqrt(np.einsum("if,ij,jf->f", c, K, c))
    return c / norms


def make_smooth_mdp(
    seed: int,
    S: int,
    A: int,
    d_s: int,
    kernel: KernelSpec,
    mixing_eps: float,
    roughness: float,
    d_a: int = 1,
    reward_action_weight: float = 0.0,
) -> MDPModel:
    """Random MDP whose transition logits and rewards are smooth in ``(s, a)``.

    For every successor ``s'`` a latent ``g_{s'}(z) = sum_i c_i k(z, z_i)`` over
    ``S`` random anchors is drawn with unit RKHS norm. Rows are
    ``(1 - eps) softmax(roughness * g(z)) + eps / S``.

    Rewards come from one more unit-norm latent ``g_r``, blended as
    ``(1 - lam) g_r(s, a_mid) + lam g_r(s, a)`` with ``lam =
    reward_action_weight`` and ``a_mid`` the centre of the action box, then
    rescaled affinely so their range over the grid is exactly ``[0, 1]``. With
    small ``lam`` rewards depend mostly on the state, so actions matter
    through where they lead and myopic play is costly.

    Identical arguments give bit-identical models.
    """
    if S < 2 or A < 2:
        raise InvalidInputError("need S >= 2 and A >= 2")
    if not 0 < mixing_eps <= 0.5:
        raise InvalidInputError("mixing_eps must lie in (0, 0.5]")
    if roughness < 0:
        raise InvalidInputError("roughness must be nonnegative")
    if not 0 <= reward_action_weight <= 1:
        raise InvalidInputError("reward_action_weight must lie in [0, 1]")
    if kernel.input_dim != d_s + d_a:
        raise InvalidInputError(f"kernel input_dim must be d_s + d_a = {d_s + d_a}")
    last = None
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng(seed + attempt)
        states = rng.random((S, d_s))
        actions = rng.random((A, d_a))
        anchors = rng.random((S, d_s + d_a))
        try:
            coef = _unit_norm_function(rng, kernel, anchors, S + 1)
        except NumericalError as exc:
            last = exc
            continue
        model_points = np.hstack([np.repeat(states, A, axis=0), np.tile(actions, (S, 1))])
        G = kernel.matrix(model_points, anchors) @ coef
        probs = softmax(roughness * G[:, :S], axis=1)
        P = (1.0 - mixing_eps) * probs + mixing_eps / S
        P /= P.sum(axis=1, keepdims=True)
        mid = np.hstack([np.repeat(states, A, axis=0), np.full((S * A, d_a), 0.5)])
        g_mid = kernel.matrix(mid, anchors) @ coef[:, S]
        g = (1.0 - reward_action_weight) * g_mid + reward_action_weight * G[:, S]
        spread = g.max() - g.min()
        r = np.clip((g - g.min()) / spread, 0.0, 1.0) if spread > 0 else np.full_like(g, 0.5)
        return MDPModel(
            states=states,
            actions=actions,
            rewards=r.reshape(S, A),
            transitions=P.reshape(S, A, S),
            mixing_eps=float(mixing_eps),
        )
    raise NumericalError(f"degenerate kernel after {MAX_ATTEMPTS} attempts: {last}")


def solve_average_reward(model: MDPModel, tol: float = 1e-10, max_iters: int = 10**6, damping: float = 0.5) -> OptimalSolution:
    """Optimal gain, bias and state-action values by relative value iteration.

    Iterates the aperiodic transform ``(1 - damping) I + damping P`` with the
    bias anchored at state 0, stopping when the span of successive
    differences (rescaled to the original chain) drops to ``tol``.
    """
    r, P = model.rewards, model.transitions
    tau = damping
    h = np.zeros(model.S)
    span = math.inf
    for it in range(1, max_iters + 1):
        Th = (1.0 - tau) * h + tau * np.max(r + P @ h, axis=1)
        diff = Th - h
        span = (diff.max() - diff.min()) / tau
        h = Th - Th[0]
        if span <= tol:
            break
    else:
        raise ConvergenceError(f"relative value iteration did not converge in {max_iters} iterations", span)
    j_star = 0.5 * (diff.max() + diff.min()) / tau
    q_star = r + P @ h - j_star
    residual = float(np.max(np.abs(q_star.max(axis=1) - h)))
    return OptimalSolution(
        j_star=float(j_star),
        v_star=h,
        q_star=q_star,
        span_v=float(h.max() - h.min()),
        iters=it,
        residual=residual,
    )


def policy_matrix(model: MDPModel, policy) -> np.ndarray:
    """Normalise a deterministic policy (action per state) to an ``S x A`` matrix."""
    policy = np.asarray(policy)
    if policy.ndim == 1:
        pi = np.zeros((model.S, model.A))
        pi[np.arange(model.S), policy] = 1.0
        return pi
    return policy.astype(float)


def stationary_distribution(Pp: np.ndarray) -> np.ndarray:
    S = Pp.shape[0]
    M = Pp.T - np.eye(S)
    M[-1, :] = 1.0
    b = np.zeros(S)
    b[-1] = 1.0
    return np.linalg.solve(M, b)


def policy_gain(model: MDPModel, policy) -> float:
    """Exact long-run average reward of a stationary policy (unichain models)."""
    pi = policy_matrix(model, policy)
    Pp = np.einsum("sa,sat->st", pi, model.transitions)
    rp = (pi * model.rewards).sum(axis=1)
    return float(stationary_distribution(Pp) @ rp)


def finite_horizon_values(model: MDPModel, horizon: int) -> np.ndarray:
    """Optimal total reward over ``horizon`` steps from each state."""
    V = np.zeros(model.S)
    for _ in range(horizon):
        V = np.max(model.rewards + model.transitions @ V, axis=1)
    return V


def step(model: MDPModel, s: int, a: int, rng: np.random.Generator) -> tuple[int, float]:
    """Sample ``s' ~ P(.|s, a)`` by inverse CDF on one uniform draw."""
    u = rng.random()
    nxt = int(np.searchsorted(model._cdf[s, a], u, side="right"))
    return min(nxt, model.S - 1), float(model.rewards[s, a])


def expected_value(model: MDPModel, v, s: int, a: int) -> float:
    """``E_{s' ~ P(.|s,a)} v(s')``."""
    return float(model.transitions[s, a] @ np.asarray(v, dtype=float))


def expected_values(model: MDPModel, v) -> np.ndarray:
    """Expected next-state value for every state-action pair, shape ``(S, A)``."""
    return model.transitions @ np.asarray(v, dtype=float)


def is_communicating(model: MDPModel) -> bool:
    """True when every stationary policy induces a strongly connected chain.

    Checked on the intersection of transition supports over actions, which is
    contained in the graph of any policy.
    """
    common = np.all(model.transitions > 0, axis=1)
    n, _ = connected_components(common, directed=True, connection="strong")
    return n == 1
