"""Checking the analysis inequalities on a realised run.

Runs the agent with the analytic confidence width, keeps every window's
planning tables, and evaluates the elliptical-potential, delayed-update,
variance-ratio, coverage and optimism checks. Finishes with the diagnostic
width calibration, which measures how conservative the analytic width is.
"""

from pathlib import Path

import numpy as np

from kucbrl import experiment as ex
from kucbrl.analysis import calibrate_beta
from kucbrl.config import load_config_file

cfg = load_config_file(Path(__file__).parents[1] / "configs" / "default.yaml", ["run.T=1000"])
outcome = ex.run_seed(cfg, seed=0, checks=True, baselines=[])
res = outcome.results["kucb"]
print(f"w={outcome.w} rho={outcome.rho} final regret={res.final_regret:.2f} info gain={res.info_gain:.2f}")
print(ex.format_margin_table([(0, c.name, c.passed, c.worst_margin, c.violations) for c in res.checks]))

mean_beta = np.mean([b.beta for b in res.trace.batches[1:]])
model = ex.build_model(cfg, 0)
config = cfg.agent_config(model.states, T=300)
smallest = calibrate_beta(model, config, seeds=range(5), delta=0.2, iters=6)
print(f"\nanalytic width ~{mean_beta:.1f}; smallest constant width covering 4/5 short runs ~{smallest:.2f}")
