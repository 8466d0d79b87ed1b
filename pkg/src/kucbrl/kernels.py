"""Kernel functions, Gram matrices and Mercer eigendecay profiles.

Points are rows of 2-D arrays. All kernels here are stationary except the
linear one, and every stationary kernel satisfies ``k(z, z) = variance_scale``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .exceptions import InvalidInputError, NumericalError

FAMILIES = ("linear", "se", "matern")
MATERN_NUS = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class KernelSpec:
    """A positive definite kernel on ``input_dim``-dimensional points.

    ``family`` is one of ``"linear"``, ``"se"`` (squared exponential) or
    ``"matern"``. Matérn smoothness is restricted to the half-integer values
    with closed forms: 1/2, 3/2 and 5/2.
    """

    family: str
    input_dim: int
    lengthscale: float = 1.0
    nu: float = 2.5
    variance_scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown kernel family {self.family!r}")
        if int(self.input_dim) != self.input_dim or self.input_dim < 1:
            raise InvalidInputError("input_dim must be a positive integer")
        if not self.lengthscale > 0 or not self.variance_scale > 0:
            raise InvalidInputError("lengthscale and variance_scale must be positive")
        if self.family == "matern" and float(self.nu) not in MATERN_NUS:
            raise InvalidInputError(f"matern nu must be one of {MATERN_NUS}, got {self.nu}")

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise InvalidInputError(
                f"points have dimension {X.shape[1]}, kernel expects {self.input_dim}"
            )
        return X

    def matrix(self, X1, X2) -> np.ndarray:
        """Cross-kernel matrix ``[k(x1_i, x2_j)]``."""
        X1 = self._check(X1)
        X2 = self._check(X2)
        # Elementwise reductions (not BLAS) so a 1x1 call reproduces the
        # corresponding Gram entry bit for bit.
        if self.family == "linear":
            return self.variance_scale * (X1[:, None, :] * X2[None, :, :]).sum(-1)
        sq = ((X1[:, None, :] - X2[None, :, :]) ** 2).sum(-1)
        if self.family == "se":
            return self.variance_scale * np.exp(-0.5 * sq / self.lengthscale**2)
        r = np.sqrt(sq) / self.lengthscale
        if self.nu == 0.5:
            return self.variance_scale * np.exp(-r)
        if self.nu == 1.5:
            a = math.sqrt(3.0) * r
            return self.variance_scale * (1.0 + a) * np.exp(-a)
        a = math.sqrt(5.0) * r
        return self.variance_scale * (1.0 + a + a * a / 3.0) * np.exp(-a)

    def diag(self, X) -> np.ndarray:
        """``k(x, x)`` for each row of ``X``."""
        X = self._check(X)
        if self.family == "linear":
            return self.variance_scale * (X * X).sum(-1)
        return np.full(X.shape[0], float(self.variance_scale))


def eval(kernel: KernelSpec, z1, z2) -> float:
    """Evaluate ``k(z1, z2)`` for two single points."""
    z1 = np.asarray(z1, dtype=float).reshape(1, -1)
    z2 = np.asarray(z2, dtype=float).reshape(1, -1)
    return float(kernel.matrix(z1, z2)[0, 0])


def gram(kernel: KernelSpec, points) -> np.ndarray:
    """Symmetric Gram matrix of ``points``; exact symmetry is enforced."""
    X = kernel._check(points)
    if X.shape[0] == 0:
        raise InvalidInputError("gram needs at least one point")
    K = kernel.matrix(X, X)
    return 0.5 * (K + K.T)


@dataclass(frozen=True)
class EigenProfile:
    """Mercer eigenvalue profile of a kernel.

    ``kind`` selects the parametrisation:

    * ``"polynomial"``: ``lambda_m = C * m**-p`` with ``p > 1``.
    * ``"exponential"``: ``lambda_m = C * exp(-rate * m)``.
    * ``"explicit"``: a finite nonincreasing list ``values``.

    ``psi_max`` bounds the eigenfunctions uniformly.
    """

    kind: str
    C: float = 1.0
    p: float = 2.0
    rate: float = 1.0
    values: tuple = field(default_factory=tuple)
    psi_max: float = 1.0

    def __post_init__(self):
        if self.kind not in ("polynomial", "exponential", "explicit"):
            raise InvalidInputError(f"unknown profile kind {self.kind!r}")
        if not self.psi_max > 0:
            raise InvalidInputError("psi_max must be positive")
        if self.kind == "polynomial":
            if not self.C > 0 or not self.p > 1:
                raise InvalidInputError("polynomial profile needs C > 0 and p > 1")
        elif self.kind == "exponential":
            if not self.C > 0 or not self.rate > 0:
                raise InvalidInputError("exponential profile needs C > 0 and rate > 0")
        else:
            vals = np.asarray(self.values, dtype=float)
            if vals.ndim != 1 or vals.size == 0:
                raise InvalidInputError("explicit profile needs a nonempty list of eigenvalues")
            if np.any(vals < 0) or np.any(np.diff(vals) > 0):
                raise InvalidInputError("explicit eigenvalues must be nonnegative and nonincreasing")
            object.__setattr__(self, "values", tuple(float(v) for v in vals))

    @classmethod
    def polynomial(cls, C=1.0, p=2.0, psi_max=1.0):
        return cls("polynomial", C=C, p=p, psi_max=psi_max)

    @classmethod
    def exponential(cls, C=1.0, rate=1.0, psi_max=1.0):
        return cls("exponential", C=C, rate=rate, psi_max=psi_max)

    @classmethod
    def explicit(cls, values: Sequence[float], psi_max=1.0):
        return cls("explicit", values=tuple(values), psi_max=psi_max)

    def eigenvalues(self, m_max: int) -> np.ndarray:
        """The first ``m_max`` eigenvalues (explicit lists are zero-padded)."""
        m = np.arange(1, m_max + 1, dtype=float)
        if self.kind == "polynomial":
            return self.C * m ** (-self.p)
        if self.kind == "exponential":
            return self.C * np.exp(-self.rate * m)
        out = np.zeros(m_max)
        vals = np.asarray(self.values)[:m_max]
        out[: vals.size] = vals
        return out

    def tail_sums(self, M: int) -> tuple[float, float]:
        return tail_sums(self, M)


def tail_sums(profile: EigenProfile, M: int) -> tuple[float, float]:
    """Return ``(sum_{m<=M} lambda_m, bound on sum_{m>M} lambda_m)``.

    Explicit profiles are summed exactly. The polynomial head is the exact
    partial sum (never above ``C p / (p - 1)``) and its tail the integral bound
    ``C M**(1-p) / (p-1)``; the exponential head is the exact geometric partial
    sum and its tail the integral bound ``C exp(-rate M) / rate``.
    """
    if int(M) != M or M < 1:
        raise InvalidInputError("M must be a positive integer")
    M = int(M)
    if profile.kind == "explicit":
        vals = np.asarray(profile.values)
        return float(vals[:M].sum()), float(vals[M:].sum())
    if profile.kind == "polynomial":
        C, p = profile.C, profile.p
        # Hurwitz zeta gives sum_{m>M} m^-p without materialising M terms.
        head = C * float(special.zeta(p, 1) - special.zeta(p, M + 1))
        head = min(head, C * p / (p - 1.0))
        return head, C / (p - 1.0) * M ** (1.0 - p)
    C, r = profile.C, profile.rate
    q = math.exp(-r)
    head = C * q * (1.0 - q**M) / (1.0 - q)
    return head, C * math.exp(-r * M) / r


def default_profile(kernel: KernelSpec, psi_max: float = 1.0, C: float = 1.0) -> EigenProfile:
    """Analytic eigendecay profile for a kernel family.

    SE maps to an exponential profile, Matérn(nu) in dimension d to a
    polynomial profile with ``p = 1 + 2 nu / d``, and a linear kernel to ``d``
    equal eigenvalues ``C / d``.
    """
    if kernel.family == "se":
        return EigenProfile.exponential(C=C, rate=1.0, psi_max=psi_max)
    if kernel.family == "matern":
        return EigenProfile.polynomial(C=C, p=1.0 + 2.0 * kernel.nu / kernel.input_dim, psi_max=psi_max)
    d = kernel.input_dim
    return EigenProfile.explicit([C / d] * d, psi_max=psi_max)


def estimate_state_profile(kernel: KernelSpec, states, psi_max: Optional[float] = None) -> EigenProfile:
    """Empirical Mercer spectrum of ``kernel`` under the uniform measure on ``states``.

    Eigenvalues are those of ``Gram / n``; eigenfunctions are the unit
    eigenvectors scaled by ``sqrt(n)``. For a finite state set this is the
    exact Mercer decomposition with respect to the counting measure.
    """
    X = kernel._check(states)
    n = X.shape[0]
    if n < 2:
        raise InvalidInputError("need at least two states")
    K = gram(kernel, X)
    evals, evecs = np.linalg.eigh(K / n)
    if evals[0] < -1e-8 * np.trace(K) / n:
        raise NumericalError(f"Gram matrix is not PSD (min eigenvalue {evals[0]:.3e})")
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    if psi_max is None:
        live = evals > 1e-12 * max(evals[0], 1e-300)
        psi_max = float(np.abs(evecs[:, live]).max() * math.sqrt(n))
    return EigenProfile.explicit(evals, psi_max=psi_max)
