"""Confidence-width multiplier for kernel ridge predictions of expected values.

``beta_full`` evaluates the Mercer-truncated width term by term;
``beta_simplified`` is the compact information-gain form with its hidden
constant set to one. Both take the state-kernel eigenprofile through
:class:`ConfidenceParams`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .exceptions import InvalidInputError
from .kernels import EigenProfile, tail_sums

MAX_M = 10**12


@dataclass(frozen=True)
class ConfidenceParams:
    """Constants entering the width multiplier.

    ``C_f`` bounds the RKHS norm of the expected-value function in the
    state-action kernel, ``C_v`` the norm of value functions in the state
    kernel, whose spectrum is ``state_profile``.
    """

    C_f: float
    C_v: float
    delta: float
    rho: float
    state_profile: EigenProfile = field(default_factory=EigenProfile.exponential)
    psi_max: float | None = None
    mode: str = "full"

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise InvalidInputError("delta must lie in (0, 1)")
        if self.C_f < 0 or self.C_v < 0:
            raise InvalidInputError("norm bounds must be nonnegative")
        if not self.rho > 0:
            raise InvalidInputError("rho must be positive")
        if self.mode not in ("full", "simplified"):
            raise InvalidInputError(f"unknown beta mode {self.mode!r}")
        if self.psi_max is None:
            object.__setattr__(self, "psi_max", self.state_profile.psi_max)
        if not self.psi_max > 0:
            raise InvalidInputError("psi_max must be positive")

    def with_delta(self, delta: float) -> "ConfidenceParams":
        return replace(self, delta=delta)


def default_params(w: int, rho: float, delta: float, state_profile: EigenProfile, **overrides) -> ConfidenceParams:
    """Norm bounds scale with the window: ``C_f = C_v = w`` unless overridden."""
    kw = dict(C_f=float(w), C_v=float(w), delta=delta, rho=rho, state_profile=state_profile)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ConfidenceParams(**kw)


def choose_M(profile: EigenProfile, n: int) -> int:
    """Mercer truncation level for ``n`` observations.

    Polynomial decay uses ``ceil(n**(1/q))`` with tail exponent ``q = p - 1``;
    exponential decay ``ceil(log n)``; an explicit list the smallest ``M`` whose
    tail mass times ``n`` does not exceed the head mass.
    """
    if profile.kind == "polynomial" and not profile.p > 1:
        raise InvalidInputError("polynomial eigendecay needs p > 1")
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    if n == 1:
        return 1
    if profile.kind == "polynomial":
        q = profile.p - 1.0
        # exp/log form avoids float overflow for q close to 0
        e = math.log(n) / q
        M = MAX_M if e > math.log(MAX_M) else math.ceil(math.exp(e) - 1e-9)
        return max(1, min(M, MAX_M))
    if profile.kind == "exponential":
        return max(1, math.ceil(math.log(n)))
    vals = profile.values
    for M in range(1, len(vals) + 1):
        head, tail = tail_sums(profile, M)
        if tail * n <= head:
            return M
    return len(vals)


def beta_full(params: ConfidenceParams, n: int, logdet: float, M: int) -> float:
    """Three-term width: norm bias, truncated Mercer head, and tail mass.

    ``logdet`` is ``log det(I + K_n / rho)``. The determinant enters only
    through its logarithm, so large ``n`` never overflows.
    """
    if logdet < 0:
        raise InvalidInputError("logdet must be nonnegative")
    if n < 0:
        raise InvalidInputError("n must be nonnegative")
    head, tail = tail_sums(params.state_profile, M)
    scale = params.C_v * params.psi_max / math.sqrt(params.rho)
    # 2 log sqrt((M/delta) det(.)) == log(M/delta) + logdet
    log_term = math.log(M / params.delta) + logdet
    middle = scale * math.sqrt(head) * math.sqrt(max(log_term, 0.0))
    last = 2.0 * scale * math.sqrt(n * tail)
    return params.C_f + middle + last


def beta_simplified(params: ConfidenceParams, n: float, gamma: float) -> float:
    """``C_f + C_v / sqrt(rho) * sqrt(log(n / delta) + gamma)``."""
    if gamma < 0:
        raise InvalidInputError("gamma must be nonnegative")
    if n <= 0:
        raise InvalidInputError("n must be positive")
    inner = math.log(n / params.delta) + gamma
    if inner < 0:
        raise InvalidInputError("log(n / delta) + gamma is negative")
    return params.C_f + params.C_v / math.sqrt(params.rho) * math.sqrt(inner)


def beta(params: ConfidenceParams, n: int, logdet: float) -> float:
    """Width for ``n`` observations in whichever mode ``params`` selects."""
    if params.mode == "simplified":
        return beta_simplified(params, max(n, 1), 0.5 * logdet)
    return beta_full(params, n, logdet, choose_M(params.state_profile, max(n, 1)))
