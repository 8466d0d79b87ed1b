"""Seeded experiments: single runs, (w, rho) sweeps and the verification suite.

Every seed owns its generators; when several seeds run in worker processes the
results come back to the parent, which writes all files in sorted order, so
output bytes never depend on ``jobs``. Floats are written with ``repr`` and
therefore round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

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
)
from .config import ExperimentConfig, auto_window
from .exceptions import ConvergenceError, NumericalError
from .kucb import RunTrace, run, run_policy
from .mdp import MDPModel, OptimalSolution, make_smooth_mdp, solve_average_reward

TRACE_COLUMNS = ("seed", "t", "t0", "state", "action", "reward", "regret_cum", "sigma_used", "beta_used")
SWEEP_COLUMNS = ("w", "rho", "seed", "final_regret", "avg_regret", "info_gain", "coverage_violations")
THEOREM_CHECKS = ("elliptical", "delayed_potential", "variance_ratio")
COVERAGE_SLACK = 0.05


def fmt(x) -> str:
    """Shortest round-tripping text for a number."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def build_model(cfg: ExperimentConfig, seed: int = 0) -> MDPModel:
    m = cfg.mdp
    mdp_seed = m.seed + seed if m.vary_with_seed else m.seed
    return make_smooth_mdp(mdp_seed, m.S, m.A, m.d_s, cfg.mdp_kernel(), m.mixing_eps, m.roughness,
                           d_a=m.d_a, reward_action_weight=m.reward_action_weight)


def solve(cfg: ExperimentConfig, model: MDPModel) -> OptimalSolution:
    return solve_average_reward(model, tol=cfg.mdp.solver_tol, max_iters=cfg.mdp.solver_max_iters)


@dataclass
class AgentResult:
    agent: str
    seed: int
    final_regret: float
    avg_regret: float
    info_gain: float
    trace: RunTrace
    regret: np.ndarray
    checks: list = field(default_factory=list)

    def check(self, name: str) -> Optional[CheckReport]:
        for c in self.checks:
            if c.name == name:
                return c
        return None

    def summary(self) -> dict:
        return {
            "final_regret": self.final_regret,
            "avg_regret": self.avg_regret,
            "info_gain": self.info_gain,
            "checks": [c.to_dict() for c in self.checks],
        }


@dataclass
class SeedOutcome:
    seed: int
    w: int
    rho: float
    j_star: float = math.nan
    span_v: float = math.nan
    solver_residual: float = math.nan
    results: dict = field(default_factory=dict)
    error: Optional[str] = None

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "w": self.w,
            "rho": self.rho,
            "j_star": self.j_star,
            "span_v": self.span_v,
            "solver_residual": self.solver_residual,
            "error": self.error,
            "agents": {name: r.summary() for name, r in sorted(self.results.items())},
        }


def _checks(trace: RunTrace, model: MDPModel, samples: int, seed: int, rep: Replay) -> list:
    rng = np.random.default_rng([seed, 1])
    reports = [
        check_elliptical(trace, replay=rep),
        check_delayed_potential(trace, replay=rep),
        check_variance_ratio(trace, samples, rng, replay=rep),
        check_coverage(trace, model),
    ]
    # optimism is implied only where coverage holds; reported, never gating
    reports.append(check_optimism(trace, model))
    return reports


def _result(agent, seed, trace, sol, checks=(), model=None, samples=0) -> AgentResult:
    """Regret and realised information gain of a trace, plus checks when asked."""
    rep = Replay.from_trace(trace)
    reports = _checks(trace, model, samples, seed, rep) if checks else []
    regret = cumulative_regret(trace, sol.j_star)
    final = float(regret[-1]) if regret.size else 0.0
    return AgentResult(agent, seed, final, final / max(trace.T, 1), float(rep.info_gain()), trace, regret, reports)


def run_seed(cfg: ExperimentConfig, seed: int, w: Optional[int] = None, rho: Optional[float] = None,
             checks: Optional[bool] = None, baselines=None) -> SeedOutcome:
    """Build and solve the model, then run KUCB-RL and the requested baselines.

    Every agent draws transitions from its own generator seeded by ``seed``.
    Solver and numerical failures are recorded on the outcome, not raised.
    """
    checks = cfg.run.checks if checks is None else checks
    baselines = cfg.run.baselines if baselines is None else baselines
    T = cfg.run.T
    try:
        model = build_model(cfg, seed)
        profile = cfg.state_profile(model.states)
        w_eff = cfg.window(T, profile) if w is None else int(w)
        config = cfg.agent_config(model.states, w=w_eff, rho=rho, T=T)
    except (NumericalError, ValueError) as exc:
        return SeedOutcome(seed, w or 0, rho if rho is not None else cfg.agent.rho, error=f"setup: {exc}")
    out = SeedOutcome(seed, config.w, config.rho)
    try:
        sol = solve(cfg, model)
    except ConvergenceError as exc:
        out.error = f"solver: {exc}"
        return out
    out.j_star, out.span_v, out.solver_residual = sol.j_star, sol.span_v, sol.residual
    echo = {"w": config.w, "rho": config.rho, "T": T}
    try:
        tr = run(model, config, np.random.default_rng(seed), seed=seed, retain_internals=checks)
        tr.config = echo
        out.results["kucb"] = _result("kucb", seed, tr, sol, checks, model, cfg.run.ratio_samples)
        tr.plans = None  # release planning internals once checked
        for name in baselines:
            rng = np.random.default_rng(seed)
            if name == "greedy_no_bonus":
                tr = run(model, replace(config, beta_override=0.0), rng, seed=seed, agent=name)
            elif name == "random":
                tr = run_policy(model, T, rng, seed=seed, agent=name, w=config.w, config=config)
            else:
                tr = run_policy(model, T, rng, sol.policy, seed=seed, agent=name, w=config.w, config=config)
            tr.config = echo
            out.results[name] = _result(name, seed, tr, sol)
    except NumericalError as exc:
        out.error = f"numerical: {exc}"
    return out


def _run_task(args):
    cfg, seed, w, rho, checks = args
    try:
        return run_seed(cfg, seed, w=w, rho=rho, checks=checks)
    except Exception:  # isolate unexpected per-seed failures
        return SeedOutcome(seed, w or 0, rho if rho is not None else cfg.agent.rho,
                           error="unexpected: " + traceback.format_exc(limit=3))


def _map(tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks))


# -- file emission ---------------------------------------------------------

def write_trace_csv(path, result: AgentResult) -> None:
    tr = result.trace
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(TRACE_COLUMNS)
        for i in range(tr.T):
            wr.writerow((fmt(tr.seed), fmt(i + 1), fmt(tr.t0[i]), fmt(tr.state[i]), fmt(tr.action[i]),
                         fmt(tr.reward[i]), fmt(result.regret[i]), fmt(tr.sigma_used[i]), fmt(tr.beta_used[i])))


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _write_plot_data(out: Path, cfg: ExperimentConfig, outcomes: list) -> None:
    ok = [o for o in outcomes if o.error is None]
    if not ok:
        return
    stride = cfg.output.plot_stride
    agents = sorted({a for o in ok for a in o.results})
    for agent in agents:
        series = np.array([o.results[agent].regret for o in ok if agent in o.results])
        mean = series.mean(axis=0)
        idx = np.arange(stride - 1, mean.size, stride)
        if mean.size and idx[-1] != mean.size - 1:
            idx = np.append(idx, mean.size - 1)
        with open(out / f"regret_{agent}.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(("t", "regret_mean", "regret_min", "regret_max"))
            for i in idx:
                wr.writerow((fmt(i + 1), fmt(mean[i]), fmt(series[:, i].min()), fmt(series[:, i].max())))
    kucb = [o.results["kucb"] for o in ok if "kucb" in o.results]
    if kucb:
        anchors = [b.t0 for b in kucb[0].trace.batches]
        gains = np.array([[b.info_gain for b in r.trace.batches] for r in kucb])
        rho = ok[0].rho
        with open(out / "info_gain.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(("t", "info_gain_mean", "gamma_reference"))
            for j, t in enumerate(anchors):
                ref = gamma_bound_poly(t, rho, cfg.output.reference_p)
                wr.writerow((fmt(t), fmt(gains[:, j].mean()), fmt(ref)))


def _emit(out: Path, cfg: ExperimentConfig, outcomes: list, extra: Optional[dict] = None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for o in sorted(outcomes, key=lambda o: o.seed):
        for name, res in sorted(o.results.items()):
            write_trace_csv(traces / f"seed{o.seed}_{name}.csv", res)
    summary = {
        "config": cfg.to_dict(),
        "seeds": [o.summary() for o in sorted(outcomes, key=lambda o: o.seed)],
        "coverage_failure_rate": coverage_failure_rate(outcomes),
    }
    if extra:
        summary.update(extra)
    _write_json(out / "summary.json", summary)
    if cfg.output.emit_plot_data:
        plot = out / "plot"
        plot.mkdir(exist_ok=True)
        _write_plot_data(plot, cfg, outcomes)
    return summary


def coverage_failure_rate(outcomes) -> Optional[float]:
    """Fraction of checked seeds with at least one coverage violation."""
    flags = []
    for o in outcomes:
        r = o.results.get("kucb")
        c = r.check("coverage") if r is not None else None
        if c is not None:
            flags.append(not c.passed)
    return float(np.mean(flags)) if flags else None


# -- entry points ----------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir=None, jobs: Optional[int] = None) -> int:
    """Run every seed and write traces, summary and plot data; 0 iff no seed failed."""
    out = Path(out_dir if out_dir is not None else cfg.output.directory)
    jobs = cfg.run.jobs if jobs is None else jobs
    outcomes = _map([(cfg, s, None, None, None) for s in cfg.seeds()], jobs)
    _emit(out, cfg, outcomes)
    return 1 if any(o.error for o in outcomes) else 0


def sweep_values(cfg: ExperimentConfig, w_values, rho_values=None) -> tuple[list, list]:
    """Grids for a sweep; the theoretical window joins a polynomial-profile grid."""
    rho_values = [cfg.agent.rho] if not rho_values else [float(r) for r in rho_values]
    w_values = [int(w) for w in w_values]
    hint = cfg.state_profile_hint()
    if hint is not None and hint.kind == "polynomial":
        w_values.append(auto_window(cfg.run.T, hint))
    ws = sorted(set(w for w in w_values if 1 <= w <= cfg.run.T))
    if not ws:
        raise ValueError("no admissible window in the sweep grid")
    return ws, sorted(set(rho_values))


def run_sweep(cfg: ExperimentConfig, w_values, rho_values=None, out_dir=None, jobs: Optional[int] = None,
              checks: Optional[bool] = None) -> int:
    """Cross product of windows, regularisers and seeds.

    Each cell gets a ``w{w}_rho{rho}`` directory laid out like a single
    experiment, and ``sweep.csv`` collects one row per (w, rho, seed).
    """
    out = Path(out_dir if out_dir is not None else cfg.output.directory)
    jobs = cfg.run.jobs if jobs is None else jobs
    ws, rhos = sweep_values(cfg, w_values, rho_values)
    tasks = [(cfg, s, w, r, checks) for w in ws for r in rhos for s in cfg.seeds()]
    outcomes = _map(tasks, jobs)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    failed = False
    k = 0
    for w in ws:
        for r in rhos:
            cell = outcomes[k:k + cfg.run.n_seeds]
            k += cfg.run.n_seeds
            _emit(out / f"w{w}_rho{fmt(r)}", cfg, cell, extra={"sweep_cell": {"w": w, "rho": r}})
            for o in cell:
                res = o.results.get("kucb")
                if o.error or res is None:
                    failed = True
                    rows.append((w, r, o.seed, math.nan, math.nan, math.nan, -1))
                    continue
                cov = res.check("coverage")
                rows.append((w, r, o.seed, res.final_regret, res.avg_regret, res.info_gain,
                             cov.violations if cov is not None else -1))
    with open(out / "sweep.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(SWEEP_COLUMNS)
        for row in rows:
            wr.writerow(tuple(fmt(x) for x in row))
    return 1 if failed else 0


def verify_outcomes(cfg: ExperimentConfig, outcomes) -> tuple[bool, list, list]:
    """Gate on theorem checks and the coverage rate; returns (ok, table rows, failure messages)."""
    rows, failures = [], []
    for o in sorted(outcomes, key=lambda o: o.seed):
        if o.error:
            failures.append(f"seed {o.seed}: {o.error.splitlines()[0]}")
            continue
        for c in o.results["kucb"].checks:
            rows.append((o.seed, c.name, c.passed, c.worst_margin, c.violations))
            if c.name in THEOREM_CHECKS and not c.passed:
                failures.append(f"check {c.name} failed on seed {o.seed} (worst margin {c.worst_margin!r})")
    rate = coverage_failure_rate(outcomes)
    limit = cfg.agent.delta + COVERAGE_SLACK
    if rate is None or rate > limit:
        failures.append(f"coverage failure rate {rate!r} exceeds {limit!r}")
    return not failures, rows, failures


def format_margin_table(rows) -> str:
    lines = [f"{'seed':>6} {'check':<18} {'pass':<5} {'worst_margin':>24} {'violations':>10}"]
    for seed, name, passed, margin, viol in rows:
        lines.append(f"{seed:>6} {name:<18} {'yes' if passed else 'NO':<5} {margin!r:>24} {viol:>10}")
    return "\n".join(lines)


def run_verify(cfg: ExperimentConfig, out_dir=None, jobs: Optional[int] = None, echo=print) -> int:
    """Run every check on every seed; exit status 0 iff the suite passes."""
    jobs = cfg.run.jobs if jobs is None else jobs
    outcomes = _map([(cfg, s, None, None, True) for s in cfg.seeds()], jobs)
    ok, rows, failures = verify_outcomes(cfg, outcomes)
    echo(format_margin_table(rows))
    rate = coverage_failure_rate(outcomes)
    echo(f"coverage failure rate: {rate!r} (limit {cfg.agent.delta + COVERAGE_SLACK!r})")
    for msg in failures:
        echo(f"FAIL: {msg}")
    echo("verify: " + ("PASS" if ok else "FAIL"))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "verify.json", {
            "passed": ok,
            "failures": failures,
            "coverage_failure_rate": rate,
            "checks": [{"seed": s, "check": n, "passed": p, "worst_margin": m, "violations": v}
                       for s, n, p, m, v in rows],
        })
    return 0 if ok else 1


def solve_only(cfg: ExperimentConfig, seed: int = 0) -> dict:
    model = build_model(cfg, seed)
    sol = solve(cfg, model)
    return {
        "j_star": sol.j_star,
        "span_v": sol.span_v,
        "iters": sol.iters,
        "residual": sol.residual,
        "policy": [int(a) for a in sol.policy],
        "v_star": [float(x) for x in sol.v_star],
    }


def cpu_jobs(requested: Optional[int]) -> int:
    if requested is None or requested < 1:
        return 1
    return min(requested, os.cpu_count() or 1)
