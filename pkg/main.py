"""Command-line entry point."""
import argparse
import sys
from datetime import datetime
from pathlib import Path

from errors import BlowUpError, ConfigurationError, DivergenceError, EPLabError
from experiments import (
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXPERIMENTS,
    log,
)
from run_config import load_config
from shared import db

SUBCOMMANDS = {
    "simulate": "simulate",
    "inequalities": "inequalities",
    "sweep": "kappa_sweep",
    "uniqueness": "uniqueness",
    "convergence": "convergence_study",
    "check": "check",
}


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Spectral lab for the heat-conducting Euler-Poisson iteration.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, experiment in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {experiment} experiment")
        _add_run_flags(p)
    p = sub.add_parser("run", help="run the experiment named in the config file")
    _add_run_flags(p)
    p = sub.add_parser("runs", help="list recent runs from the ledger")
    p.add_argument("--limit", type=int, default=20)
    p.add_argument("--experiment", default=None)
    p.add_argument("--config", type=Path, default=None, help="config whose ledger to list")
    return parser.parse_args(argv)


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, default=None, help="JSON run configuration (defaults when omitted)")
    p.add_argument("--output", default=None, help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, default=None, help="seed for data, ensembles and perturbations")
    p.add_argument("--threads", type=int, default=None, help="FFT and sub-solve threads (or EPLAB_THREADS)")


def list_runs(limit: int, experiment=None, ledger=None) -> int:
    rows = db.get_recent_runs(limit, experiment, path=ledger)
    if not rows:
        print("No runs recorded yet.")
        return 0
    for row in rows:
        stamp = datetime.fromtimestamp(row["timestamp"]).strftime('%Y-%m-%d %H:%M:%S')
        glyph = "✓" if row["exit_code"] == 0 else "❌"
        print(f"{glyph} #{row['id']:<4} {stamp}  {row['experiment']:<18} exit={row['exit_code']}  "
              f"{row['verdict']}  → {row['output_dir']}")
    return 0


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command == "runs":
            return list_runs(args.limit, args.experiment, config.ledger)
        config = config.with_overrides(args.output, args.seed, args.threads)
    except ConfigurationError as err:
        log(str(err), "❌")
        return EXIT_CONFIG
    experiment = config.experiment if args.command == "run" else SUBCOMMANDS[args.command]
    out = Path(config.output_dir)

    print("=" * 70, flush=True)
    print(f"  EP LAB: {experiment}", flush=True)
    print(f"  Output: {out} | Threads: {config.threads} | Seed: {config.data.seed}", flush=True)
    print("=" * 70, flush=True)

    try:
        result = EXPERIMENTS[experiment](config, out)
    except ConfigurationError as err:
        log(f"configuration rejected: {err}", "❌")
        return EXIT_CONFIG
    except (DivergenceError, BlowUpError) as err:
        log(str(err), "❌")
        return EXIT_DIVERGED
    except EPLabError as err:
        # rejected inputs and CFL violations are fixed in the config
        log(f"{type(err).__name__}: {err}", "❌")
        return EXIT_CONFIG

    for path in result.artifacts:
        print(f"   → {path}", flush=True)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
