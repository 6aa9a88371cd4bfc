"""Command-line entry point.

Subcommands:
  run                 drive a (policy x environment x seed) grid from a
                      JSON config and emit trace/summary CSVs
  prepare-movielens   turn rating CSVs into a processed instance directory
  bounds              print the grid lower-bound constants and the explicit
                      upper bound for the config's first repetition
  report              re-aggregate summary rows from emitted trace files

Exit codes: 0 success, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from .bounds import lower_bound_constant, theoretical_upper_bound
from .errors import ConfigError
from .harness import (
    SUMMARY_COLUMNS,
    build_environment,
    emit_results,
    load_config,
    report_from_traces,
    resolved_config_dict,
    run_experiment,
)
from .movielens import prepare_movielens
from .orders import StateModelSet, load_state_orders


def _print_summary(rows) -> None:
    print(",".join(SUMMARY_COLUMNS))
    for row in rows:
        print(
            f"{row.policy},{row.mean_cum_regret!r},{row.se!r},"
            f"{int(row.se_degenerate)},{row.seconds!r}"
        )


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if config.output is None:
        raise ConfigError("config needs an 'output' directory for run")
    override = None
    if args.states:
        orders = load_state_orders(args.states)
        override = StateModelSet(orders, validate_incompatibility=False)
    traces, summary = run_experiment(config, revealed_override=override)
    paths = emit_results(traces, summary, config.output, resolved_config_dict(config))
    _print_summary(summary)
    print(f"wrote {paths['traces']}")
    return 0


def _cmd_prepare(args) -> int:
    setting, alpha = args.setting, None
    if setting.startswith("mix:"):
        setting, alpha = "mix", float(args.setting.split(":", 1)[1])
    elif setting not in ("A", "B"):
        raise ConfigError(f"setting must be A, B or mix:<alpha>, got {args.setting!r}")
    paths = prepare_movielens(
        args.ratings, args.movies, m=args.m, setting=setting, alpha=alpha,
        out_dir=args.out, seed=args.seed,
        min_movie_ratings=args.min_movie_ratings,
        min_user_ratings=args.min_user_ratings,
    )
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _cmd_bounds(args) -> int:
    config = load_config(args.config)
    env = build_environment(config.environment)
    instance, full, _, _ = env.build(0, config.seed)
    try:
        upper = theoretical_upper_bound(instance, full, config.T, env.sigma)
        print(f"theoretical_upper_bound {upper!r}")
    except ValueError as e:
        print(f"theoretical_upper_bound unavailable: {e}")
    if env.k <= 4:
        for alt in ("lb", "lob", "mab"):
            try:
                value = lower_bound_constant(instance, alt, models=full)
                print(f"lower_bound_{alt} {value!r}")
            except ValueError as e:
                print(f"lower_bound_{alt} unavailable: {e}")
    else:
        print(f"lower bounds skipped: grid evaluation needs k <= 4, have k={env.k}")
    return 0


def _cmd_report(args) -> int:
    _print_summary(report_from_traces(args.traces))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orderbandits", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment grid from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument(
        "--states",
        help="order file overriding the revealed prior handed to lob policies",
    )
    p_run.set_defaults(func=_cmd_run)

    p_prep = sub.add_parser("prepare-movielens", help="build bandit instances from ratings")
    p_prep.add_argument("--ratings", required=True)
    p_prep.add_argument("--movies", required=True)
    p_prep.add_argument("--m", type=int, required=True)
    p_prep.add_argument("--setting", required=True, help="A, B or mix:<alpha>")
    p_prep.add_argument("--seed", type=int, default=0)
    p_prep.add_argument("--out", required=True)
    p_prep.add_argument("--min-movie-ratings", type=int, default=200)
    p_prep.add_argument("--min-user-ratings", type=int, default=200)
    p_prep.set_defaults(func=_cmd_prepare)

    p_bounds = sub.add_parser("bounds", help="print regret bound values for a config")
    p_bounds.add_argument("--config", required=True)
    p_bounds.set_defaults(func=_cmd_bounds)

    p_report = sub.add_parser("report", help="re-aggregate summaries from traces")
    p_report.add_argument("--traces", required=True, help="output directory of a run")
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
