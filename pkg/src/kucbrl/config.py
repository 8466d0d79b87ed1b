"""Experiment configuration: a YAML file with ``mdp``, ``agent``, ``run`` and ``output`` sections.

Unknown keys and ill-typed values are errors that report the offending line.
Kernel entries omit ``input_dim``; it is derived from the MDP dimensions.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Any, Optional

import yaml

from . import confidence as conf
from .kernels import EigenProfile, KernelSpec, default_profile, estimate_state_profile
from .kucb import AgentConfig

BASELINES = ("random", "greedy_no_bonus", "oracle_policy")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class KernelSection:
    family: str = "se"
    lengthscale: float = 0.3
    nu: float = 2.5
    variance_scale: float = 1.0

    def build(self, input_dim: int) -> KernelSpec:
        return KernelSpec(self.family, input_dim, lengthscale=self.lengthscale, nu=self.nu,
                          variance_scale=self.variance_scale)


@dataclass
class ProfileSection:
    """Eigenprofile of the state kernel.

    ``kind`` is ``default`` (derived from the kernel family), ``polynomial``,
    ``exponential``, ``explicit`` or ``estimate`` (spectrum of the state Gram
    matrix under the uniform measure on the MDP's states).
    """

    kind: str = "default"
    C: float = 1.0
    p: float = 2.0
    rate: float = 1.0
    values: list = field(default_factory=list)
    psi_max: Optional[float] = None


@dataclass
class MDPSection:
    seed: int = 0
    S: int = 20
    A: int = 4
    d_s: int = 2
    d_a: int = 1
    kernel: KernelSection = field(default_factory=KernelSection)
    mixing_eps: float = 0.05
    roughness: float = 10.0
    reward_action_weight: float = 0.0
    solver_tol: float = 1e-10
    solver_max_iters: int = 10**6
    # when true the model for run seed k is generated from ``seed + k``
    vary_with_seed: bool = False


@dataclass
class AgentSection:
    w: Any = "auto"
    rho: float = 1.0
    delta: float = 0.1
    beta_mode: str = "full"
    beta_scale: float = 1.0
    beta_override: Optional[float] = None
    C_f: Optional[float] = None
    C_v: Optional[float] = None
    kernel: KernelSection = field(default_factory=KernelSection)
    state_kernel: KernelSection = field(default_factory=KernelSection)
    profile: ProfileSection = field(default_factory=ProfileSection)


@dataclass
class RunSection:
    T: int = 2000
    n_seeds: int = 1
    seed_offset: int = 0
    baselines: list = field(default_factory=lambda: list(BASELINES))
    ratio_samples: int = 1000
    checks: bool = True
    jobs: int = 1


@dataclass
class OutputSection:
    directory: str = "out"
    emit_plot_data: bool = True
    plot_stride: int = 1
    reference_p: float = 2.0


@dataclass
class ExperimentConfig:
    mdp: MDPSection = field(default_factory=MDPSection)
    agent: AgentSection = field(default_factory=AgentSection)
    run: RunSection = field(default_factory=RunSection)
    output: OutputSection = field(default_factory=OutputSection)

    # -- derived objects -------------------------------------------------

    def mdp_kernel(self) -> KernelSpec:
        return self.mdp.kernel.build(self.mdp.d_s + self.mdp.d_a)

    def agent_kernel(self) -> KernelSpec:
        return self.agent.kernel.build(self.mdp.d_s + self.mdp.d_a)

    def state_kernel(self) -> KernelSpec:
        return self.agent.state_kernel.build(self.mdp.d_s)

    def state_profile(self, states=None) -> EigenProfile:
        p = self.agent.profile
        psi = 1.0 if p.psi_max is None else p.psi_max
        if p.kind == "default":
            return default_profile(self.state_kernel(), psi_max=psi, C=p.C)
        if p.kind == "polynomial":
            return EigenProfile.polynomial(C=p.C, p=p.p, psi_max=psi)
        if p.kind == "exponential":
            return EigenProfile.exponential(C=p.C, rate=p.rate, psi_max=psi)
        if p.kind == "explicit":
            return EigenProfile.explicit(p.values, psi_max=psi)
        if states is None:
            raise ConfigError("profile kind 'estimate' needs the MDP states")
        return estimate_state_profile(self.state_kernel(), states, psi_max=p.psi_max)

    def window(self, T: Optional[int] = None, profile: Optional[EigenProfile] = None) -> int:
        """Window size; ``"auto"`` follows the theoretical choice for the profile.

        Polynomial decay ``p`` gives ``ceil(T^((p-1)/(4p+4)))``, anything else
        ``ceil(T^(1/4))``.
        """
        T = self.run.T if T is None else T
        if self.agent.w != "auto":
            return int(self.agent.w)
        return auto_window(T, profile if profile is not None else self.state_profile_hint())

    def state_profile_hint(self) -> Optional[EigenProfile]:
        if self.agent.profile.kind == "estimate":
            return None
        return self.state_profile()

    def agent_config(self, states=None, w: Optional[int] = None, rho: Optional[float] = None,
                     T: Optional[int] = None, beta_override: Any = "config") -> AgentConfig:
        T = self.run.T if T is None else T
        profile = self.state_profile(states)
        w = self.window(T, profile) if w is None else int(w)
        rho = self.agent.rho if rho is None else float(rho)
        params = conf.default_params(
            w, rho, self.agent.delta, profile, C_f=self.agent.C_f, C_v=self.agent.C_v,
            mode=self.agent.beta_mode,
        )
        override = self.agent.beta_override if beta_override == "config" else beta_override
        return AgentConfig(w=w, rho=rho, T=T, kernel=self.agent_kernel(), confidence=params,
                           beta_scale=self.agent.beta_scale, beta_override=override)

    def seeds(self) -> list:
        return list(range(self.run.seed_offset, self.run.seed_offset + self.run.n_seeds))

    def to_dict(self) -> dict:
        return _to_plain(self)


def auto_window(T: int, profile: Optional[EigenProfile]) -> int:
    if profile is not None and profile.kind == "polynomial":
        p = profile.p
        return max(1, math.ceil(T ** ((p - 1.0) / (4.0 * p + 4.0)) - 1e-9))
    return max(1, math.ceil(T**0.25 - 1e-9))


def _to_plain(obj):
    if is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, list):
        return [_to_plain(x) for x in obj]
    return obj


# -- parsing ---------------------------------------------------------------

def _node_lines(node, prefix=()):
    """Map dotted key paths to 1-based line numbers in a composed YAML tree."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (str(k.value),)
            out[".".join(path)] = k.start_mark.line + 1
            out.update(_node_lines(v, path))
    return out


def _coerce(value, default, path, line):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path} must be true or false", line)
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{path} must be an integer", line)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path} must be a number", line)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path} must be a string", line)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{path} must be a list", line)
        return value
    return value


def _fill(obj, data, lines, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'} must be a mapping", lines.get(prefix))
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        line = lines.get(path)
        if key not in known:
            raise ConfigError(f"unknown key '{path}'", line)
        current = getattr(obj, key)
        if is_dataclass(current):
            _fill(current, value if value is not None else {}, lines, path)
        elif value is None:
            setattr(obj, key, None)
        elif current is None:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{path} must be a number or null", line)
            setattr(obj, key, float(value))
        elif key == "w":
            if value != "auto" and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError("agent.w must be a positive integer or 'auto'", line)
            setattr(obj, key, value)
        else:
            setattr(obj, key, _coerce(value, current, path, line))


def _validate(cfg: ExperimentConfig, lines):
    def err(msg, path):
        raise ConfigError(msg, lines.get(path))

    for sec in ("mdp.kernel", "agent.kernel", "agent.state_kernel"):
        head, tail = sec.split(".")
        ks = getattr(getattr(cfg, head), tail)
        try:
            ks.build(1)
        except ValueError as exc:
            err(f"{sec}: {exc}", sec)
    if cfg.agent.profile.kind not in ("default", "polynomial", "exponential", "explicit", "estimate"):
        err(f"unknown profile kind '{cfg.agent.profile.kind}'", "agent.profile.kind")
    if cfg.agent.beta_mode not in ("full", "simplified"):
        err(f"unknown beta_mode '{cfg.agent.beta_mode}'", "agent.beta_mode")
    if not 0 < cfg.agent.delta < 1:
        err("agent.delta must lie in (0, 1)", "agent.delta")
    if not cfg.agent.rho > 0:
        err("agent.rho must be positive", "agent.rho")
    if not cfg.agent.beta_scale > 0:
        err("agent.beta_scale must be positive", "agent.beta_scale")
    if cfg.agent.w != "auto" and cfg.agent.w < 1:
        err("agent.w must be positive", "agent.w")
    if cfg.run.n_seeds < 1:
        err("run.n_seeds must be at least 1", "run.n_seeds")
    if cfg.run.T < 1:
        err("run.T must be positive", "run.T")
    if cfg.run.jobs < 1:
        err("run.jobs must be positive", "run.jobs")
    for b in cfg.run.baselines:
        if b not in BASELINES:
            err(f"unknown baseline '{b}' (choose from {', '.join(BASELINES)})", "run.baselines")
    if not 0 < cfg.mdp.mixing_eps <= 0.5:
        err("mdp.mixing_eps must lie in (0, 0.5]", "mdp.mixing_eps")
    if cfg.mdp.S < 2 or cfg.mdp.A < 2:
        err("mdp.S and mdp.A must be at least 2", "mdp.S")
    if cfg.output.plot_stride < 1:
        err("output.plot_stride must be positive", "output.plot_stride")


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form key=value")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def _apply_override(data: dict, key: str, value):
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override '{key}' does not address a mapping")
    node[parts[-1]] = value


def load_config(text: str = "", overrides=()) -> ExperimentConfig:
    """Parse YAML text (possibly empty) plus ``key=value`` overrides."""
    try:
        node = yaml.compose(text) if text.strip() else None
        data = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark is not None else None) from None
    lines = _node_lines(node) if node is not None else {}
    data = copy.deepcopy(data) if data is not None else {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", 1)
    for ov in overrides:
        key, value = parse_override(ov) if isinstance(ov, str) else ov
        _apply_override(data, key, value)
    cfg = ExperimentConfig()
    _fill(cfg, data, lines, "")
    _validate(cfg, lines)
    return cfg


def load_config_file(path, overrides=()) -> ExperimentConfig:
    with open(path) as fh:
        return load_config(fh.read(), overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
