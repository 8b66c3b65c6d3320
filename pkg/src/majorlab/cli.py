"""Command-line entry point: ``majorlab <experiment> [flags]``."""
from __future__ import annotations

import argparse
import sys

from .errors import AccuracyError, ConfigError, ConvergenceError, MajorlabError, ValidationError
from .experiments import EXPERIMENTS, load_config, run_experiment
from .output import emit_outputs, summary_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _int_list(text: str):
    try:
        return [int(float(v)) if "**" not in v else int(_power(v)) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _power(v: str) -> int:
    base, exp = v.split("**")
    return int(base) ** int(exp)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="majorlab", description="Majorisation and limit-law experiments on random spectra.")
    p.add_argument("command", nargs="?", choices=EXPERIMENTS, help="experiment to run")
    p.add_argument("--experiment", choices=EXPERIMENTS, help="same as the positional command")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--n", type=_int_list, help="comma-separated n values (N cutoffs for persistence); 2**7 style allowed")
    p.add_argument("--c", type=float, help="aspect ratio m/n")
    p.add_argument("--gap-C", dest="gap_C", type=float, help="m = n + ceil(C sqrt(n log n))")
    p.add_argument("--m", type=_int_list, help="explicit m per n")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory for summary.json, trials.csv and plot.csv")
    p.add_argument("--sampler", choices=("auto", "dense", "fast"))
    p.add_argument("--validate-sampler", dest="validate_sampler", action="store_true", default=None,
                   help="also compare dense and fast Wishart samplers")
    p.add_argument("--scaling", choices=("raw", "shifted", "normalised", "centered"), help="clt-check scaling")
    p.add_argument("--degrees", type=_int_list, help="clt-check monomial degrees")
    p.add_argument("--threshold", type=float, help="persistence threshold t")
    p.add_argument("--driver", choices=("gaussian", "exponential-difference"))
    p.add_argument("--eps", type=float, help="concentration band")
    p.add_argument("--no-trial-csv", dest="per_trial_csv", action="store_false", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = vars(args)
    command, experiment, config_path = flags.pop("command"), flags.pop("experiment"), flags.pop("config")
    if command and experiment and command != experiment:
        print(f"error: positional command {command!r} conflicts with --experiment {experiment!r}", file=sys.stderr)
        return EXIT_CONFIG
    if command or experiment:
        flags["experiment"] = command or experiment
    try:
        cfg = load_config(config_path, **flags)
    except (ConfigError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run_experiment(cfg)
    except (ConvergenceError, AccuracyError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MajorlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if cfg.out is None:
        sys.stdout.write(summary_json(summary))
        return EXIT_OK
    try:
        paths = emit_outputs(summary, cfg.out, cfg.per_trial_csv)
    except OSError as exc:
        sys.stdout.write(summary_json(summary))
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, path in paths.items():
        print(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
