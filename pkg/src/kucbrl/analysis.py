"""Regret accounting and numerical certificates on realised runs.

Every check here rebuilds what it needs from the logged point sequence and the
kernel; nothing is read back from the agent's own Gram state. The replay
exploits that every observation is a grid point: it carries the posterior
covariance over the whole grid and applies one rank-one correction per
observation, so the posterior variance at every grid point after every prefix
falls out of a single O(T U^2) pass.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .exceptions import InvalidInputError
from .kernels import gram
from .kucb import RunTrace
from .mdp import MDPModel, expected_values, finite_horizon_values

THEOREM_TOL = 1e-9


@dataclass
class CheckReport:
    """Outcome of one inequality check; ``worst_margin`` is bound minus realised."""

    name: str
    passed: bool
    worst_margin: float
    location: object = None
    violations: int = 0
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.worst_margin = float(self.worst_margin)
        self.violations = int(self.violations)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["location"] = None if self.location is None else str(self.location)
        return d


def cumulative_regret(trace: RunTrace, j_star: float) -> np.ndarray:
    """Prefix sums of ``J* - r_t``."""
    return np.cumsum(j_star - np.asarray(trace.reward, dtype=float))


class Replay:
    """Fully-updated posterior quantities along a logged grid-point sequence.

    Attributes
    ----------
    var_table : (T + 1, U) array
        ``var_table[t, u]`` is the posterior variance at grid point ``u`` given
        the first ``t`` observations.
    prev_var : (T,) array
        ``sigma^2_{t-1}(z_t)`` for ``t = 1..T``.
    logdet : (T + 1,) array
        ``log det(I + K_t / rho)`` for each prefix length ``t``.
    """

    def __init__(self, kernel, support, rho: float, z_index):
        self.rho = float(rho)
        self.z_index = np.asarray(z_index, dtype=np.int64)
        self.K = gram(kernel, support)
        T, U = self.z_index.size, self.K.shape[0]
        if T and (self.z_index.min() < 0 or self.z_index.max() >= U):
            raise InvalidInputError("point index outside the support")
        # Posterior covariance over the grid, updated by one rank-one
        # correction per observation: O(U^2) per step regardless of t.
        cov = self.K.copy()
        table = np.empty((T + 1, U))
        table[0] = np.diag(cov)
        prev_var = np.empty(T)
        logdet = np.zeros(T + 1)
        for t, g in enumerate(self.z_index):
            pv = cov[g, g]
            d2 = pv + self.rho
            row = cov[g] / math.sqrt(d2)
            cov -= np.outer(row, row)
            table[t + 1] = np.diag(cov)
            prev_var[t] = max(pv, 0.0)
            logdet[t + 1] = logdet[t] + math.log(d2 / self.rho)
        self.var_table = np.maximum(table, 0.0)
        self.prev_var = prev_var
        self.logdet = logdet

    @classmethod
    def from_trace(cls, trace: RunTrace) -> "Replay":
        return cls(trace.kernel, trace.support, trace.rho, trace.z_index)

    @property
    def T(self) -> int:
        return self.z_index.size

    def info_gain(self, t: Optional[int] = None) -> float:
        return 0.5 * self.logdet[self.T if t is None else t]

    def subsequence_info_gain(self, idx) -> float:
        """Realised information gain of an arbitrary subsequence of grid points.

        Duplicates are folded into counts via ``det(I + K_n/rho) =
        det(I + D K_U D / rho)`` with ``D = diag(sqrt(counts))``.
        """
        c = np.bincount(np.asarray(idx, dtype=np.int64), minlength=self.K.shape[0])
        live = np.flatnonzero(c)
        if live.size == 0:
            return 0.0
        d = np.sqrt(c[live].astype(float))
        M = np.eye(live.size) + d[:, None] * self.K[np.ix_(live, live)] * d[None, :] / self.rho
        sign, ld = np.linalg.slogdet(M)
        return 0.5 * ld


def _replay(trace, replay):
    return Replay.from_trace(trace) if replay is None else replay


def check_elliptical(trace: RunTrace, replay: Optional[Replay] = None, tol: float = THEOREM_TOL) -> CheckReport:
    """Sum of sequential variances against ``2 gamma / log(1 + 1/rho)``, at every prefix.

    Valid for kernels with ``k(z, z) <= 1``.
    """
    if trace.T == 0:
        return CheckReport("elliptical", True, 0.0, location=0)
    rep = _replay(trace, replay)
    L = math.log1p(1.0 / rep.rho)
    lhs = np.cumsum(rep.prev_var)
    rhs = rep.logdet[1:] / L
    margin = rhs - lhs
    i = int(np.argmin(margin))
    worst = float(margin[i])
    return CheckReport("elliptical", worst >= -tol, worst, location=i + 1,
                       detail={"lhs": float(lhs[-1]), "rhs": float(rhs[-1])})


def delayed_sigma(trace: RunTrace, replay: Optional[Replay] = None) -> np.ndarray:
    """``sigma_{t0(t)}(z_t)`` recomputed from the replay."""
    rep = _replay(trace, replay)
    t0 = trace.w * (np.arange(trace.T) // trace.w)
    return np.sqrt(rep.var_table[t0, rep.z_index])


def check_delayed_potential(trace: RunTrace, w: Optional[int] = None, replay: Optional[Replay] = None,
                            tol: float = THEOREM_TOL) -> CheckReport:
    """Sum of window-delayed standard deviations against the delayed-update bound.

    The information gain over ``T / w`` points is taken as the largest
    realised gain among the ``w`` interleaved subsequences
    ``{z_t : t = j mod w}``. When the trace logged the agent's own delayed
    deviations those are summed, and they must agree with the replay.
    """
    w = trace.w if w is None else int(w)
    T = trace.T
    if T == 0:
        return CheckReport("delayed_potential", True, 0.0, location=0)
    rep = _replay(trace, replay)
    t0 = w * (np.arange(T) // w)
    replayed = np.sqrt(rep.var_table[t0, rep.z_index])
    logged = np.asarray(trace.sigma_used, dtype=float)
    mismatch = 0.0
    if np.all(np.isfinite(logged)) and w == trace.w:
        mismatch = float(np.max(np.abs(logged - replayed)))
        lhs = float(logged.sum())
    else:
        lhs = float(replayed.sum())
    L = math.log1p(1.0 / rep.rho)
    gamma_T = rep.info_gain()
    gamma_w = max(rep.subsequence_info_gain(rep.z_index[j::w]) for j in range(min(w, T)))
    rhs = math.sqrt(2.0 * gamma_T / L * (T + 2.0 * w * w * gamma_w / L))
    margin = rhs - lhs
    passed = margin >= -tol and mismatch <= 1e-8
    return CheckReport("delayed_potential", passed, margin, location=T,
                       detail={"lhs": lhs, "rhs": rhs, "gamma_T": gamma_T, "gamma_T_over_w": gamma_w,
                               "sigma_mismatch": mismatch})


def check_variance_ratio(trace: RunTrace, samples: int, rng: np.random.Generator,
                         replay: Optional[Replay] = None, tol: float = THEOREM_TOL,
                         normalized: bool = True) -> CheckReport:
    """Both sides of the variance-ratio sandwich on random ``(t', t, z)`` triples.

    ``1 <= sigma^2_{t'}(z) / sigma^2_t(z) <= 1 + sum_{j=t'+1}^{t} sigma^2_{t'}(z_j) / rho``
    for ``t' < t`` and ``z`` drawn from the grid.

    The sum is measured in units of ``rho``: one observation at ``z_j`` shrinks
    the variance at ``z`` by at most the factor ``1 + sigma^2(z_j) / rho``.
    At ``rho = 1`` this is the unnormalised form, which ``normalized=False``
    checks literally; for ``rho < 1`` that literal form is false in general.
    """
    T = trace.T
    if T == 0 or samples <= 0:
        return CheckReport("variance_ratio", True, 0.0)
    rep = _replay(trace, replay)
    U = rep.var_table.shape[1]
    unit = rep.rho if normalized else 1.0
    worst, where, bad = math.inf, None, 0
    for _ in range(samples):
        tp = int(rng.integers(0, T))
        t = int(rng.integers(tp + 1, T + 1))
        u = int(rng.integers(0, U))
        num, den = rep.var_table[tp, u], rep.var_table[t, u]
        if den <= 0.0:
            # zero prior variance at u (e.g. a linear kernel at the origin)
            ratio = 1.0 if num <= 0.0 else math.inf
        else:
            ratio = num / den
        upper = 1.0 + rep.var_table[tp, rep.z_index[tp:t]].sum() / unit
        m = min(ratio - 1.0, upper - ratio)
        if m < -tol:
            bad += 1
        if m < worst:
            worst, where = m, (tp, t, u)
    return CheckReport("variance_ratio", bad == 0, float(worst), location=where, violations=bad,
                       detail={"samples": samples, "normalized": normalized})


def check_coverage(trace: RunTrace, model: MDPModel, tol: float = THEOREM_TOL) -> CheckReport:
    """Compare every prediction error with its confidence width.

    For each window, each planning level and each grid pair, the exact
    expected value of the next-level value table is compared with the
    prediction; a violation is ``|f - fhat| > beta * sigma``.
    """
    if trace.plans is None:
        raise InvalidInputError("coverage needs a trace run with retain_internals=True")
    worst, where, bad, checked = math.inf, None, 0, 0
    for plan in trace.plans:
        if math.isinf(plan.beta_used):
            width = np.where(plan.sigma > 0, math.inf, 0.0)
        else:
            width = plan.beta_used * plan.sigma
        for h in range(plan.q.shape[0]):
            f = expected_values(model, plan.v_next[h])
            margin = width - np.abs(f - plan.fhat[h])
            checked += margin.size
            bad += int(np.count_nonzero(margin < -tol))
            i = int(np.argmin(margin))
            if margin.flat[i] < worst:
                s, a = divmod(i, margin.shape[1])
                worst, where = float(margin.flat[i]), (plan.t0, h + 1, s, a)
    if checked == 0:
        worst = 0.0
    return CheckReport("coverage", bad == 0, worst, location=where, violations=bad,
                       detail={"checked": checked})


def check_optimism(trace: RunTrace, model: MDPModel, tol: float = 1e-8) -> CheckReport:
    """Planned window value against the exact ``w``-step optimal value.

    Only conclusive on runs where :func:`check_coverage` passed.
    """
    if trace.plans is None:
        raise InvalidInputError("optimism needs a trace run with retain_internals=True")
    exact = finite_horizon_values(model, trace.w)
    margins = np.array([np.min(p.v[0] - exact) for p in trace.plans])
    i = int(np.argmin(margins))
    return CheckReport("optimism", margins[i] >= -tol, float(margins[i]), location=trace.plans[i].t0)


def gamma_bound_poly(t: float, rho: float, p: float, C_bound: float = 1.0) -> float:
    """Reference growth curve ``C (t/rho)^(1/p) log(1 + t/rho)^(1 - 1/p)``."""
    if not p > 1:
        raise InvalidInputError("p must exceed 1")
    if t <= 0:
        return 0.0
    x = t / rho
    return C_bound * x ** (1.0 / p) * math.log1p(x) ** (1.0 - 1.0 / p)


def theorem_checks(trace: RunTrace, samples: int = 1000, rng: Optional[np.random.Generator] = None) -> list:
    """Elliptical, delayed-potential and variance-ratio checks sharing one replay."""
    rng = np.random.default_rng(trace.seed) if rng is None else rng
    rep = Replay.from_trace(trace)
    return [
        check_elliptical(trace, replay=rep),
        check_delayed_potential(trace, replay=rep),
        check_variance_ratio(trace, samples, rng, replay=rep),
    ]


def calibrate_beta(model: MDPModel, config, seeds, delta: float, hi: float = None, iters: int = 12) -> float:
    """Smallest constant width with empirical coverage at least ``1 - delta``.

    Diagnostic only: bisects a constant ``beta_override`` over fresh runs on
    ``model`` and reports how much slack the analytic width carries.
    """
    from dataclasses import replace

    from .kucb import run

    def bad_fraction(b):
        cfg = replace(config, beta_override=b)
        fails = 0
        for seed in seeds:
            tr = run(model, cfg, np.random.default_rng(seed), seed=seed, retain_internals=True)
            fails += not check_coverage(tr, model).passed
        return fails / len(seeds)

    lo = 0.0
    hi = float(config.w) * 10.0 if hi is None else float(hi)
    if bad_fraction(hi) > delta:
        return math.inf
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if bad_fraction(mid) <= delta:
            hi = mid
        else:
            lo = mid
    return hi
