"""Command-line entry point: ``kucbrl {run,sweep,verify,solve,gen-mdp}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiment as ex
from .config import ConfigError, load_config, load_config_file


def _config(args):
    overrides = list(args.override or [])
    if args.seeds is not None:
        overrides.append(f"run.n_seeds={args.seeds}")
    if args.config:
        cfg = load_config_file(args.config, overrides)
    else:
        cfg = load_config("", overrides)
    return cfg


def _out(args, cfg):
    return Path(args.out) if args.out else Path(cfg.output.directory)


def cmd_run(args, cfg):
    status = ex.run_experiment(cfg, _out(args, cfg), jobs=ex.cpu_jobs(args.jobs or cfg.run.jobs))
    print(f"wrote {_out(args, cfg)}")
    return status


def cmd_sweep(args, cfg):
    ws = args.w if args.w else [1, 2, 5, 10, 25, 50]
    status = ex.run_sweep(cfg, ws, args.rho, _out(args, cfg), jobs=ex.cpu_jobs(args.jobs or cfg.run.jobs))
    print(f"wrote {_out(args, cfg) / 'sweep.csv'}")
    return status


def cmd_verify(args, cfg):
    out = _out(args, cfg) if args.out else None
    return ex.run_verify(cfg, out, jobs=ex.cpu_jobs(args.jobs or cfg.run.jobs))


def cmd_solve(args, cfg):
    text = json.dumps(ex.solve_only(cfg), indent=2, sort_keys=True)
    if args.out:
        out = _out(args, cfg)
        out.mkdir(parents=True, exist_ok=True)
        (out / "solution.json").write_text(text + "\n")
    print(text)
    return 0


def cmd_gen_mdp(args, cfg):
    out = _out(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mdp.json"
    ex.build_model(cfg).save(path)
    print(f"wrote {path}")
    return 0


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify, "solve": cmd_solve, "gen-mdp": cmd_gen_mdp}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kucbrl", description="Kernel optimistic RL experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "run the agent and baselines for every seed",
        "sweep": "grid over window size and regulariser",
        "verify": "run the numerical checks; nonzero exit on failure",
        "solve": "solve the generated MDP exactly",
        "gen-mdp": "write the generated MDP as JSON",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="YAML experiment file (defaults apply when omitted)")
        p.add_argument("--out", help="output directory (default: output.directory)")
        p.add_argument("--seeds", type=int, help="number of seeds (overrides run.n_seeds)")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="dotted-path override, e.g. agent.rho=0.1; repeatable")
        p.add_argument("--jobs", type=int, help="worker processes for seeds and cells")
        if name == "sweep":
            p.add_argument("--w", type=int, nargs="+", help="window sizes (default 1 2 5 10 25 50)")
            p.add_argument("--rho", type=float, nargs="+", help="regularisers (default agent.rho)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
    except ConfigError as exc:
        where = f"{args.config}:" if args.config else ""
        print(f"config error: {where}{exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return COMMANDS[args.command](args, cfg)


if __name__ == "__main__":
    sys.exit(main())
