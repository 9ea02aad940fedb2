"""Progressive-barrier direct search for noisy constrained blackbox problems.

The solver polls a mesh around a feasible and an infeasible incumbent,
accepts moves only on estimated decreases large enough to be trusted at the
current noise level, and tightens an adaptive infeasibility barrier as it
goes. A deterministic single-sample mode provides the classical baseline.
"""
from .bench import (
    CampaignSpec,
    ProfileCurve,
    RunTruth,
    aggregate_campaign,
    convergence_test,
    data_profile,
    f_bar_feas,
    performance_profile,
    run_campaign,
    solve_cost,
    truth_trajectory,
)
from .blackbox import NoiseSpec, NoisyOracle, Problem, SampleCache, true_eval
from .core import DesignPoint, MeshState, Mode, OutcomeTag, SolverConfig, violation
from .estimator import (
    EstimateBundle,
    estimate,
    estimate_once,
    required_samples_constraint,
    required_samples_objective,
)
from .record import ReplayReport, RunRecord, replay_record
from .solver import SolverRun, run
from .suite import (
    builtin_names,
    builtin_suite,
    get_problem,
    load_problem_file,
    parse_problem_text,
    register_problem,
    resolve_problem,
)

__version__ = "0.1.0"

__all__ = [
    "CampaignSpec",
    "DesignPoint",
    "EstimateBundle",
    "MeshState",
    "Mode",
    "NoiseSpec",
    "NoisyOracle",
    "OutcomeTag",
    "Problem",
    "ProfileCurve",
    "ReplayReport",
    "RunRecord",
    "RunTruth",
    "SampleCache",
    "SolverConfig",
    "SolverRun",
    "aggregate_campaign",
    "builtin_names",
    "builtin_suite",
    "convergence_test",
    "data_profile",
    "estimate",
    "estimate_once",
    "f_bar_feas",
    "get_problem",
    "load_problem_file",
    "parse_problem_text",
    "performance_profile",
    "register_problem",
    "replay_record",
    "required_samples_constraint",
    "required_samples_objective",
    "resolve_problem",
    "run",
    "run_campaign",
    "solve_cost",
    "true_eval",
    "truth_trajectory",
    "violation",
]
