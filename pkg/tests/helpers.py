import numpy as np

from kucbrl import confidence as conf
from kucbrl.kernels import KernelSpec, default_profile
from kucbrl.kucb import AgentConfig
from kucbrl.mdp import make_smooth_mdp

K3 = KernelSpec("se", 3, lengthscale=0.3)


def model(seed=0, S=6, A=3):
    return make_smooth_mdp(seed, S, A, 2, K3, 0.05, 5.0)


def agent_config(w=3, rho=1.0, T=60, **kw):
    params = conf.default_params(w, rho, 0.1, default_profile(KernelSpec("se", 2, lengthscale=0.3)))
    return AgentConfig(w=w, rho=rho, T=T, kernel=K3, confidence=params, **kw)
