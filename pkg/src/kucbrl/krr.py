"""Kernel ridge regression over a growing set of observation points.

Two interchangeable representations are provided:

``GramState``
    Rank-one Cholesky extension of ``K_n + rho I`` over arbitrary points.
    Exact for any point sequence, O(n^2) per append and O(n^2) memory.

``CountedGramState``
    For points drawn from a fixed finite support (the state-action grid of a
    finite MDP). Duplicates collapse into counts ``c_u`` and every quantity is
    computed from the support-sized matrix ``D K D + rho I`` with
    ``D = diag(sqrt(c))``. Predictions, variances and the log-determinant are
    identical to the dense form; only the cost changes.

Both expose ``posterior_variance``, ``predict``, ``info_gain``, ``logdet`` and
``snapshot``. Snapshots are read-only and unaffected by later appends.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import InvalidInputError, NumericalError
from .kernels import KernelSpec

JITTER_FACTOR = 1e-10


class _DenseQueries:
    """Read-side operations shared by the dense state and its snapshots."""

    kernel: KernelSpec
    rho: float

    def __len__(self):
        return self._n

    @property
    def n(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._X[: self._n]

    @property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor of ``K_n + rho I``."""
        return self._L[: self._n, : self._n]

    @property
    def logdet(self) -> float:
        """``log det(I + K_n / rho)``."""
        return self._logdet

    def info_gain(self) -> float:
        """Realised information gain ``0.5 log det(I + K_n / rho)``."""
        return 0.5 * self._logdet

    def _whiten(self, Z) -> np.ndarray:
        # L^{-1} k_n(Z), shape (n, m)
        kz = self.kernel.matrix(self.points, Z)
        return solve_triangular(self.chol, kz, lower=True, check_finite=False)

    def posterior_variances(self, Z) -> np.ndarray:
        Z = self.kernel._check(Z)
        prior = self.kernel.diag(Z)
        if self._n == 0:
            return prior
        V = self._whiten(Z)
        return np.maximum(prior - (V * V).sum(0), 0.0)

    def posterior_variance(self, z) -> float:
        return float(self.posterior_variances(np.reshape(z, (1, -1)))[0])

    def predict_many(self, Z, targets) -> np.ndarray:
        Z = self.kernel._check(Z)
        y = np.asarray(targets, dtype=float).reshape(-1)
        if y.size != self._n:
            raise InvalidInputError(f"expected {self._n} targets, got {y.size}")
        if self._n == 0:
            return np.zeros(Z.shape[0])
        b = solve_triangular(self.chol, y, lower=True, check_finite=False)
        return self._whiten(Z).T @ b

    def predict(self, z, targets) -> float:
        return float(self.predict_many(np.reshape(z, (1, -1)), targets)[0])


class GramSnapshot(_DenseQueries):
    """Frozen view of a :class:`GramState`; shares the factor buffer."""

    def __init__(self, state: "GramState"):
        self.kernel = state.kernel
        self.rho = state.rho
        self.jitter = state.jitter
        self._n = state._n
        self._logdet = state._logdet
        # Appends only write rows >= n, so these views never change.
        self._X = state._X[: self._n].view()
        self._L = state._L[: self._n, : self._n].view()
        self._X.flags.writeable = False
        self._L.flags.writeable = False

    def snapshot(self) -> "GramSnapshot":
        return self


class GramState(_DenseQueries):
    """Incremental Cholesky factor of ``K_n + rho I``.

    >>> from kucbrl.kernels import KernelSpec
    >>> g = GramState(KernelSpec("se", 1), rho=1.0)
    >>> round(g.append([0.0]).posterior_variance([0.0]), 12)
    0.5
    """

    def __init__(self, kernel: KernelSpec, rho: float, capacity: int = 64):
        if not rho > 0:
            raise InvalidInputError("rho must be positive")
        self.kernel = kernel
        self.rho = float(rho)
        self.jitter = 0.0
        self._n = 0
        self._logdet = 0.0
        cap = max(int(capacity), 1)
        self._X = np.zeros((cap, kernel.input_dim))
        self._L = np.zeros((cap, cap))

    def _grow(self):
        cap = 2 * self._X.shape[0]
        X = np.zeros((cap, self.kernel.input_dim))
        L = np.zeros((cap, cap))
        X[: self._n] = self._X[: self._n]
        L[: self._n, : self._n] = self._L[: self._n, : self._n]
        self._X, self._L = X, L

    def append(self, z) -> "GramState":
        """Add one observation point; extends the factor by one row."""
        z = self.kernel._check(np.reshape(z, (1, -1)))
        n = self._n
        if n == self._X.shape[0]:
            self._grow()
        kzz = float(self.kernel.diag(z)[0])
        if n:
            row = solve_triangular(
                self.chol, self.kernel.matrix(self.points, z)[:, 0], lower=True, check_finite=False
            )
        else:
            row = np.zeros(0)
        prior_var = kzz - row @ row
        schur = prior_var + self.rho
        if schur <= 0:
            extra = JITTER_FACTOR * kzz
            schur += extra
            if schur <= 0:
                raise NumericalError(f"Schur complement {schur:.3e} not positive after jitter")
            self.jitter += extra
        self._X[n] = z[0]
        self._L[n, :n] = row
        self._L[n, n] = math.sqrt(schur)
        self._logdet += math.log(schur / self.rho)
        self._n = n + 1
        return self

    def extend(self, Z) -> "GramState":
        for z in np.atleast_2d(Z):
            self.append(z)
        return self

    def snapshot(self) -> GramSnapshot:
        return GramSnapshot(self)


class CountedGramState:
    """Kernel ridge regression with observations restricted to a finite support.

    Parameters
    ----------
    kernel : KernelSpec
    rho : float
        Ridge regularisation, fixed for the lifetime of the state.
    support : array (U, d)
        Candidate observation points. Observations are recorded by support
        index via :meth:`append_index`.

    Targets are supplied either per observation (length ``n``, as for the
    dense form) or already summed per support point (length ``U``) through
    :meth:`predict_support`.
    """

    def __init__(self, kernel: KernelSpec, rho: float, support):
        if not rho > 0:
            raise InvalidInputError("rho must be positive")
        self.kernel = kernel
        self.rho = float(rho)
        self.support = kernel._check(support).copy()
        self.support.flags.writeable = False
        U = self.support.shape[0]
        K = kernel.matrix(self.support, self.support)
        self.K = 0.5 * (K + K.T)
        self.K.flags.writeable = False
        self.prior = kernel.diag(self.support)
        self.counts = np.zeros(U, dtype=np.int64)
        self.history: list[int] = []
        self.factorizations = 0
        self._cache = None
        self._frozen = False

    def __len__(self):
        return len(self.history)

    @property
    def n(self) -> int:
        return len(self.history)

    @property
    def U(self) -> int:
        return self.support.shape[0]

    def append_index(self, u: int) -> "CountedGramState":
        if self._frozen:
            raise InvalidInputError("snapshot is read-only")
        if not 0 <= u < self.U:
            raise InvalidInputError(f"support index {u} out of range")
        self.counts[u] += 1
        self.history.append(int(u))
        self._cache = None
        return self

    def append(self, z) -> "CountedGramState":
        """Append by coordinates; ``z`` must coincide with a support point."""
        z = self.kernel._check(np.reshape(z, (1, -1)))[0]
        hits = np.flatnonzero(np.all(self.support == z, axis=1))
        if hits.size == 0:
            raise InvalidInputError("point is not in the support")
        return self.append_index(int(hits[0]))

    def _factor(self):
        if self._cache is None:
            d = np.sqrt(self.counts.astype(float))
            B = d[:, None] * self.K * d[None, :]
            B[np.diag_indices_from(B)] += self.rho
            try:
                L = np.linalg.cholesky(B)
            except np.linalg.LinAlgError as exc:
                raise NumericalError("support system is not positive definite") from exc
            W = solve_triangular(L, d[:, None] * self.K, lower=True, check_finite=False)
            # per-row ratios are exactly 1 at unvisited support points; the
            # true value is nonnegative, so clamp away rounding below zero
            logdet = max(2.0 * np.log(np.diag(L) / math.sqrt(self.rho)).sum(), 0.0)
            self._cache = (d, L, W, logdet)
            self.factorizations += 1
        return self._cache

    @property
    def logdet(self) -> float:
        return float(self._factor()[3])

    def info_gain(self) -> float:
        return 0.5 * self.logdet

    def support_variances(self) -> np.ndarray:
        """Posterior variance at every support point."""
        if self.n == 0:
            return self.prior.copy()
        W = self._factor()[2]
        return np.maximum(self.prior - (W * W).sum(0), 0.0)

    def posterior_variances(self, Z) -> np.ndarray:
        Z = self.kernel._check(Z)
        prior = self.kernel.diag(Z)
        if self.n == 0:
            return prior
        d, L, _, _ = self._factor()
        V = solve_triangular(L, d[:, None] * self.kernel.matrix(self.support, Z), lower=True)
        return np.maximum(prior - (V * V).sum(0), 0.0)

    def posterior_variance(self, z) -> float:
        return float(self.posterior_variances(np.reshape(z, (1, -1)))[0])

    def _weights(self, summed):
        d, L, _, _ = self._factor()
        scaled = np.divide(summed, d, out=np.zeros(self.U), where=d > 0)
        return solve_triangular(L, scaled, lower=True, check_finite=False)

    def predict_support(self, summed_targets) -> np.ndarray:
        """Predictions at every support point from per-support target sums."""
        s = np.asarray(summed_targets, dtype=float).reshape(-1)
        if s.size != self.U:
            raise InvalidInputError(f"expected {self.U} summed targets, got {s.size}")
        if self.n == 0:
            return np.zeros(self.U)
        return self._factor()[2].T @ self._weights(s)

    def summed(self, targets) -> np.ndarray:
        """Sum per-observation targets into per-support totals."""
        y = np.asarray(targets, dtype=float).reshape(-1)
        if y.size != self.n:
            raise InvalidInputError(f"expected {self.n} targets, got {y.size}")
        return np.bincount(np.asarray(self.history, dtype=np.int64), weights=y, minlength=self.U)

    def predict_many(self, Z, targets) -> np.ndarray:
        Z = self.kernel._check(Z)
        s = self.summed(targets)
        if self.n == 0:
            return np.zeros(Z.shape[0])
        d, L, _, _ = self._factor()
        V = solve_triangular(L, d[:, None] * self.kernel.matrix(self.support, Z), lower=True)
        return V.T @ self._weights(s)

    def predict(self, z, targets) -> float:
        return float(self.predict_many(np.reshape(z, (1, -1)), targets)[0])

    def snapshot(self) -> "CountedGramState":
        if self._frozen:
            return self
        snap = object.__new__(CountedGramState)
        snap.kernel = self.kernel
        snap.rho = self.rho
        snap.support = self.support
        snap.K = self.K
        snap.prior = self.prior
        snap.counts = self.counts.copy()
        snap.counts.flags.writeable = False
        snap.history = list(self.history)
        snap.factorizations = 0
        snap._cache = None
        snap._frozen = True
        return snap
