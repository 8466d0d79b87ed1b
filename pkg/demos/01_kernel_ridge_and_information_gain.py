"""Kernel ridge regression, posterior variance and information gain.

Fits a noisy 1-d function from points appended one at a time, shows the
posterior standard deviation shrinking where data accumulate, and compares
the realised information gain with the polynomial-growth reference curve.
"""

import numpy as np

from kucbrl.analysis import gamma_bound_poly
from kucbrl.kernels import KernelSpec
from kucbrl.krr import GramState

rng = np.random.default_rng(0)
kernel = KernelSpec("matern", 1, lengthscale=0.2, nu=2.5)
state = GramState(kernel, rho=0.1)

f = lambda x: np.sin(6 * x) * np.exp(-x)
X = rng.random((60, 1))
y = f(X[:, 0]) + 0.05 * rng.standard_normal(60)

grid = np.linspace(0, 1, 9)[:, None]
print("n   max sigma on grid   info gain   reference (p = 1 + 2 nu / d = 6)")
for n, x in enumerate(X, 1):
    state.append(x)
    if n in (1, 5, 15, 30, 60):
        sd = np.sqrt(state.posterior_variances(grid)).max()
        print(f"{n:<3} {sd:18.4f} {state.info_gain():11.3f} {gamma_bound_poly(n, state.rho, 6.0):12.3f}")

pred = state.predict_many(grid, y)
print("\n   x     f(x)    fhat(x)")
for x, p in zip(grid[:, 0], pred):
    print(f"{x:5.2f} {f(x):8.4f} {p:9.4f}")
