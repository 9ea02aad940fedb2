"""Command-line front door: single runs, campaigns, profiles, replay.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
A config file of key=value lines (keys matching the long flag names) supplies
defaults; flags on the command line win. The PBMADS_OUT environment variable
sets the default output directory and nothing else.
"""
from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction
from pathlib import Path

from .bench import (
    VARIANTS,
    CampaignSpec,
    aggregate_campaign,
    run_campaign,
    truth_trajectory,
)
from .blackbox import NoiseSpec
from .core import Mode, SolverConfig
from .record import RunRecord, replay_record
from .suite import ProblemFormatError, builtin_names, builtin_suite, resolve_problem
from .solver import run as solver_run


class CliError(Exception):
    """Usage or configuration problem; maps to exit code 2."""


def _default_out() -> str:
    return os.environ.get("PBMADS_OUT", "runs")


def read_config_file(path) -> dict[str, str]:
    """key=value lines, # comments, keys named like the long flags."""
    values: dict[str, str] = {}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{line_no}: expected key=value, got {raw.strip()!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_").lower()] = value.strip()
    return values


def _parse_tau(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"invalid mesh ratio {text!r}") from exc


def _parse_tol_list(text: str) -> tuple[float, ...]:
    try:
        tols = tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid tolerance list {text!r}") from exc
    if not tols or any(t <= 0 or t >= 1 for t in tols):
        raise argparse.ArgumentTypeError("tolerances must lie in (0, 1)")
    return tols


def build_parser(config: dict[str, str] | None = None) -> argparse.ArgumentParser:
    config = config or {}

    def default(key: str, fallback):
        # Config file values arrive as strings; argparse's type= only runs on
        # command-line tokens, so convert here.
        if key not in config:
            return fallback
        raw = config[key]
        if isinstance(fallback, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(fallback, int) and not isinstance(fallback, bool):
            return int(raw)
        if isinstance(fallback, float):
            return float(raw)
        if isinstance(fallback, Fraction):
            return Fraction(raw)
        if isinstance(fallback, tuple):
            return _parse_tol_list(raw)
        return raw

    parser = argparse.ArgumentParser(
        prog="pbmads",
        description="Progressive-barrier direct search for noisy constrained problems.",
    )
    parser.add_argument("--config", help="key=value file supplying flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_solver_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--sigma", type=float, default=default("sigma", 0.01),
                       help="relative noise scale (default 0.01)")
        p.add_argument("--nk", type=int, default=default("nk", 2),
                       help="samples per point per iteration (default 2)")
        p.add_argument("--gamma", type=float, default=default("gamma", 17.0),
                       help="acceptance threshold factor, must exceed 2 (default 17)")
        p.add_argument("--epsilon", type=float, default=default("epsilon", 0.01),
                       help="estimate accuracy parameter (default 0.01)")
        p.add_argument("--tau", type=_parse_tau, default=default("tau", Fraction(1, 2)),
                       help="mesh adjustment ratio, rational in (0,1) (default 1/2)")
        p.add_argument("--rho", type=float, default=default("rho", 0.1),
                       help="frame-center preference margin (default 0.1)")
        p.add_argument("--budget-multiplier", type=int,
                       default=default("budget_multiplier", 1000),
                       help="evaluation budget is this times (n+1) (default 1000)")
        p.add_argument("--budget", type=int, default=default("budget", 0),
                       help="explicit evaluation budget, overrides the multiplier")
        p.add_argument("--mode", choices=("stochastic", "deterministic"),
                       default=default("mode", "stochastic"),
                       help="estimation scheme (default stochastic)")
        p.add_argument("--zhat", type=int, default=default("zhat", 50),
                       help="cap exponent: frame size never exceeds tau**-zhat")
        p.add_argument("--min-delta-p", type=float, default=default("min_delta_p", 1e-9),
                       help="stop once the frame size drops below this")
        p.add_argument("--secondary-frame", choices=("two", "full"),
                       default=default("secondary_frame", "two"),
                       help="poll directions at the secondary center (default two)")
        p.add_argument("--estimate-inert-feasible", action="store_true",
                       default=default("estimate_inert_feasible", False),
                       help="refresh the feasible incumbent estimate even before "
                            "any feasible point is known")

    p_solve = sub.add_parser("solve", help="run the solver once and write a run record")
    p_solve.add_argument("--problem", default=default("problem", None),
                         help="built-in name or problem definition file")
    p_solve.add_argument("--seed", type=int, default=default("seed", None),
                         help="run seed (unsigned 64-bit)")
    p_solve.add_argument("--start", type=int, default=default("start", 0),
                         help="index into the problem's start list (default 0)")
    p_solve.add_argument("--out", default=default("out", None),
                         help="output directory (default $PBMADS_OUT or ./runs)")
    p_solve.add_argument("--with-truth", action="store_true",
                         default=default("with_truth", False),
                         help="also report the best true-feasible value reached")
    add_solver_flags(p_solve)

    p_camp = sub.add_parser("campaign", help="run a grid of solver variants and emit profiles")
    p_camp.add_argument("--problems", default=default("problems", "all"),
                        help="comma-separated built-in names, or 'all' (default)")
    p_camp.add_argument("--sigmas", default=default("sigmas", "0.01"),
                        help="comma-separated noise scales (default 0.01)")
    p_camp.add_argument("--variants", default=default("variants", "stomads-nk2,madspb"),
                        help=f"comma-separated from: {', '.join(VARIANTS)}")
    p_camp.add_argument("--seeds", type=int, default=default("seeds", 5),
                        help="seed slots per cell (default 5)")
    p_camp.add_argument("--master-seed", type=int, default=default("master_seed", 0),
                        help="root seed the per-cell seeds derive from")
    p_camp.add_argument("--tol", type=_parse_tol_list,
                        default=default("tol", (1e-1, 1e-3)),
                        help="comma-separated convergence tolerances (default 1e-1,1e-3)")
    p_camp.add_argument("--jobs", type=int, default=default("jobs", 1),
                        help="parallel worker processes (default 1)")
    p_camp.add_argument("--out", default=default("out", None),
                        help="output directory (default $PBMADS_OUT or ./runs)")
    p_camp.add_argument("--gamma", type=float, default=default("gamma", 17.0))
    p_camp.add_argument("--epsilon", type=float, default=default("epsilon", 0.01))
    p_camp.add_argument("--tau", type=_parse_tau, default=default("tau", Fraction(1, 2)))
    p_camp.add_argument("--rho", type=float, default=default("rho", 0.1))
    p_camp.add_argument("--budget-multiplier", type=int,
                        default=default("budget_multiplier", 1000))

    p_prof = sub.add_parser("profile", help="build profiles from a directory of run records")
    p_prof.add_argument("records", help="directory containing .jsonl run records")
    p_prof.add_argument("--tol", type=_parse_tol_list,
                        default=default("tol", (1e-1, 1e-3)),
                        help="comma-separated convergence tolerances (default 1e-1,1e-3)")
    p_prof.add_argument("--out", default=default("out", None),
                        help="output directory (default: next to the records)")

    p_replay = sub.add_parser("replay", help="re-run a record and verify it reproduces")
    p_replay.add_argument("record", help="run record .jsonl file")

    p_list = sub.add_parser("problems", help="list built-in problems")

    for p in (p_solve, p_camp, p_prof, p_replay, p_list):
        p.add_argument("--config", help="key=value file supplying flag defaults")

    return parser


def _extract_config_path(argv: list[str]) -> str | None:
    for i, token in enumerate(argv):
        if token == "--config":
            if i + 1 >= len(argv):
                raise CliError("--config requires a path")
            return argv[i + 1]
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


def _solver_config(args) -> SolverConfig:
    if args.gamma <= 2:
        raise CliError(f"--gamma must exceed 2 (got {args.gamma:g}); "
                       "the acceptance guarantees fail otherwise")
    mode = Mode.DETERMINISTIC if args.mode == "deterministic" else Mode.STOCHASTIC
    try:
        return SolverConfig(
            gamma=args.gamma,
            epsilon=args.epsilon,
            tau=args.tau,
            z_hat=args.zhat,
            rho=args.rho,
            n_k=args.nk,
            mode=mode,
            budget=args.budget or None,
            budget_multiplier=args.budget_multiplier,
            min_delta_p=args.min_delta_p,
            estimate_inert_feasible=args.estimate_inert_feasible,
            full_secondary_frame=args.secondary_frame == "full",
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _resolve(problem_spec: str):
    try:
        return resolve_problem(problem_spec)
    except KeyError as exc:
        raise CliError(exc.args[0]) from exc
    except (ProblemFormatError, OSError) as exc:
        raise CliError(f"cannot load problem {problem_spec!r}: {exc}") from exc


def cmd_solve(args) -> int:
    if args.problem is None:
        raise CliError("solve requires --problem")
    if args.seed is None:
        raise CliError("solve requires --seed")
    problem = _resolve(args.problem)
    if not 0 <= args.start < len(problem.starts):
        raise CliError(f"--start must index {problem.name}'s {len(problem.starts)} starts")
    start = problem.starts[args.start]

    sigma = args.sigma
    if args.mode == "deterministic" and sigma != 0.0:
        print(f"warning: deterministic mode ignores noise; sigma={sigma:g} treated as 0",
              file=sys.stderr)
        sigma = 0.0
    if sigma > 0 and problem.f_star is None:
        raise CliError(f"problem {problem.name!r} has no reference optimum; "
                       "noise scaling needs one (add fstar=... or use --sigma 0)")
    noise = NoiseSpec.from_problem(problem, start, sigma)
    config = _solver_config(args)

    record = solver_run(problem, noise, config, args.seed, start)
    out_dir = Path(args.out or _default_out())
    path = record.write(out_dir / f"{problem.name}__seed{args.seed}.jsonl")

    final = record.final
    inc = final["incumbents"]
    print(f"problem {problem.name}: {final['evaluations']} evaluations, "
          f"{final['iterations']} iterations, stop: {final['stop']}")
    if inc["feas"] is not None:
        print(f"  feasible incumbent:   {_fmt_point(inc['feas'])}")
    print(f"  infeasible incumbent: {_fmt_point(inc['inf'])}")
    if args.with_truth:
        truth = truth_trajectory(problem, record)
        if truth.best_feasible_f is None:
            print("  truth: no evaluated point was feasible")
        else:
            print(f"  truth: best feasible objective {truth.best_feasible_f:.10g} "
                  f"after {truth.points[-1].evaluations} evaluations")
    print(f"record: {path}")
    return 0


def _fmt_point(coords) -> str:
    return "(" + ", ".join(f"{c:.10g}" for c in coords) + ")"


def cmd_campaign(args) -> int:
    suite = builtin_suite()
    if args.problems.strip().lower() == "all":
        problems = tuple(suite.values())
    else:
        problems = tuple(_resolve(name.strip()) for name in args.problems.split(","))
    try:
        sigmas = tuple(float(s) for s in args.sigmas.split(","))
    except ValueError as exc:
        raise CliError(f"invalid --sigmas {args.sigmas!r}") from exc
    variants = tuple(v.strip() for v in args.variants.split(","))
    if args.gamma <= 2:
        raise CliError(f"--gamma must exceed 2 (got {args.gamma:g})")
    try:
        spec = CampaignSpec(
            problems=problems,
            sigmas=sigmas,
            variants=variants,
            seeds=args.seeds,
            tau_tols=args.tol,
            master_seed=args.master_seed,
            budget_multiplier=args.budget_multiplier,
            gamma=args.gamma,
            epsilon=args.epsilon,
            tau=args.tau,
            rho=args.rho,
            jobs=args.jobs,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    out_dir = Path(args.out or _default_out())
    result = run_campaign(spec, out_dir)
    print(f"{len(result.record_paths)} runs -> {out_dir}")
    for row in result.summary_rows:
        print(f"  {row['solver']:>14} sigma={row['sigma']:g} tol={row['tau_tol']:g}: "
              f"{row['percent_solved']:.1f}% solved ({row['solved']}/{row['instances']})")
    for path in result.csv_paths + result.figure_paths:
        print(f"  wrote {path}")
    return 0


def cmd_profile(args) -> int:
    records_dir = Path(args.records)
    if not records_dir.is_dir():
        raise CliError(f"{records_dir} is not a directory")
    if args.out:
        out_dir = Path(args.out)
    elif records_dir.name == "records":
        out_dir = records_dir.parent
    else:
        out_dir = records_dir
    try:
        result = aggregate_campaign(out_dir, builtin_suite(), args.tol,
                                    records_dir=records_dir)
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from exc
    for path in result.csv_paths + result.figure_paths:
        print(f"wrote {path}")
    return 0


def cmd_replay(args) -> int:
    path = Path(args.record)
    if not path.is_file():
        raise CliError(f"{path} is not a file")
    try:
        record = RunRecord.read(path)
    except ValueError as exc:
        raise CliError(f"cannot read record: {exc}") from exc
    report = replay_record(record)
    print(report.summary())
    return 0 if report.identical else 1


def cmd_problems(_args) -> int:
    suite = builtin_suite()
    width = max(len(name) for name in suite)
    for name, problem in suite.items():
        f_star = "unknown" if problem.f_star is None else f"{problem.f_star:.10g}"
        print(f"{name:<{width}}  n={problem.n} m={problem.m} "
              f"starts={len(problem.starts)} f*={f_star}")
        if problem.description:
            print(f"{'':<{width}}  {problem.description}")
    return 0


_COMMANDS = {
    "solve": cmd_solve,
    "campaign": cmd_campaign,
    "profile": cmd_profile,
    "replay": cmd_replay,
    "problems": cmd_problems,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config_path = _extract_config_path(argv)
        try:
            config = read_config_file(config_path) if config_path else {}
        except OSError as exc:
            raise CliError(f"cannot read config file: {exc}") from exc
        parser = build_parser(config)
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        # argparse exits directly on usage errors and --help
        return int(exc.code) if exc.code is not None else 0
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
