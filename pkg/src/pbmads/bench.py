"""Benchmark harness: truth trajectories, convergence accounting, profiles.

All benchmark quantities are computed from run records with the noiseless
oracle: a run's trajectory is the best true-feasible objective value seen
after each blackbox call. A run "solves" an instance once that value closes
the required fraction of the gap between the average first-feasible value
and the reference optimum.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .blackbox import NoiseSpec, Problem, true_eval
from .core import DesignPoint, Mode, SolverConfig
from .record import RunRecord
from .rng import derive_key
from .solver import run as solver_run

FEAS_TOL = 1e-12  # per-constraint absolute tolerance for true feasibility


@dataclass(frozen=True)
class TrajectoryPoint:
    evaluations: int
    best_feasible_f: float


@dataclass(frozen=True)
class RunTruth:
    """Truth-oracle view of one run: monotone best-feasible improvements."""

    evaluations: int
    first_feasible_f: float | None
    points: tuple[TrajectoryPoint, ...]

    @property
    def best_feasible_f(self) -> float | None:
        return self.points[-1].best_feasible_f if self.points else None


def is_true_feasible(problem: Problem, x: DesignPoint) -> bool:
    t = true_eval(problem, x)
    if not math.isfinite(t.h):
        return False
    return all(cj <= FEAS_TOL for cj in t.c)


def truth_trajectory(problem: Problem, record: RunRecord) -> RunTruth:
    """Walk a record's evaluation stream against the noiseless oracle."""
    memo: dict[bytes, tuple[float, bool]] = {}
    best = math.inf
    first_feasible: float | None = None
    points: list[TrajectoryPoint] = []
    count = 0
    for event in record.events:
        if event["type"] != "eval":
            continue
        count += 1
        x = DesignPoint(tuple(event["point"]))
        got = memo.get(x.key)
        if got is None:
            t = true_eval(problem, x)
            feasible = math.isfinite(t.h) and all(cj <= FEAS_TOL for cj in t.c)
            got = (t.f, feasible)
            memo[x.key] = got
        f_true, feasible = got
        if feasible:
            if first_feasible is None:
                first_feasible = f_true
            if f_true < best:
                best = f_true
                points.append(TrajectoryPoint(count, f_true))
    return RunTruth(evaluations=count, first_feasible_f=first_feasible, points=tuple(points))


def convergence_test(
    best_feasible_f: float | None,
    f_star: float,
    f_bar_feas: float,
    tau_tol: float,
) -> bool:
    """Gap-closing test: a feasible value within tau_tol of the way from the
    average first-feasible value down to the reference optimum."""
    if best_feasible_f is None:
        return False
    return best_feasible_f <= f_star + tau_tol * (f_bar_feas - f_star)


def f_bar_feas(first_values: Iterable[float | None]) -> float | None:
    """Mean of the runs' first feasible objective values; runs that never
    found a feasible point are excluded. None when no run did."""
    values = [v for v in first_values if v is not None]
    if not values:
        return None
    return sum(values) / len(values)


def solve_cost(
    truth: RunTruth, f_star: float, f_bar: float | None, tau_tol: float
) -> float:
    """Evaluations until the convergence test first passes, else +inf."""
    if f_bar is None:
        return math.inf
    threshold = f_star + tau_tol * (f_bar - f_star)
    for tp in truth.points:
        if tp.best_feasible_f <= threshold:
            return tp.evaluations
    return math.inf


@dataclass(frozen=True)
class ProfileCurve:
    """Right-continuous step function through (breakpoint, fraction) pairs."""

    breakpoints: tuple[float, ...]
    fractions: tuple[float, ...]

    def value_at(self, x: float) -> float:
        value = 0.0
        for b, f in zip(self.breakpoints, self.fractions):
            if b <= x:
                value = f
            else:
                break
        return value


def _step_curve(marks: Sequence[float], total: int) -> ProfileCurve:
    """Cumulative fractions of `marks` (the finite solve marks) over total."""
    ordered = sorted(marks)
    breaks: list[float] = []
    fracs: list[float] = []
    seen = 0
    for i, b in enumerate(ordered):
        seen += 1
        if i + 1 < len(ordered) and ordered[i + 1] == b:
            continue
        breaks.append(b)
        fracs.append(seen / total)
    return ProfileCurve(tuple(breaks), tuple(fracs))


def performance_profile(
    costs: Mapping[object, Mapping[str, float]]
) -> dict[str, ProfileCurve]:
    """Fraction of instances solved within a factor r of the best solver.

    costs[instance][solver] is the evaluation count to solve (inf when the
    run never solved it). Instances nobody solved count in the denominator
    but never appear on a curve.
    """
    solvers = _solver_names(costs)
    total = len(costs)
    if total == 0:
        raise ValueError("no instances to profile")
    ratios: dict[str, list[float]] = {s: [] for s in solvers}
    for per_solver in costs.values():
        finite = [v for v in per_solver.values() if math.isfinite(v)]
        if not finite:
            continue
        best = min(finite)
        for s in solvers:
            v = per_solver.get(s, math.inf)
            if math.isfinite(v):
                ratios[s].append(v / best)
    return {s: _step_curve(ratios[s], total) for s in solvers}


def data_profile(
    costs: Mapping[object, Mapping[str, float]],
    dimensions: Mapping[object, int],
) -> dict[str, ProfileCurve]:
    """Fraction of instances solved within kappa groups of n+1 evaluations."""
    solvers = _solver_names(costs)
    total = len(costs)
    if total == 0:
        raise ValueError("no instances to profile")
    marks: dict[str, list[float]] = {s: [] for s in solvers}
    for instance, per_solver in costs.items():
        scale = dimensions[instance] + 1
        for s in solvers:
            v = per_solver.get(s, math.inf)
            if math.isfinite(v):
                marks[s].append(v / scale)
    return {s: _step_curve(marks[s], total) for s in solvers}


def _solver_names(costs: Mapping[object, Mapping[str, float]]) -> list[str]:
    names: list[str] = []
    for per_solver in costs.values():
        for s in per_solver:
            if s not in names:
                names.append(s)
    return names


# ------------------------------------------------------------------ campaign

VARIANTS: dict[str, tuple[Mode, int]] = {
    "stomads-nk1": (Mode.STOCHASTIC, 1),
    "stomads-nk2": (Mode.STOCHASTIC, 2),
    "stomads-nk3": (Mode.STOCHASTIC, 3),
    "madspb": (Mode.DETERMINISTIC, 1),
}


@dataclass(frozen=True)
class CampaignSpec:
    problems: tuple[Problem, ...]
    sigmas: tuple[float, ...] = (0.01,)
    variants: tuple[str, ...] = ("stomads-nk2", "madspb")
    seeds: int = 5
    tau_tols: tuple[float, ...] = (1e-1, 1e-3)
    master_seed: int = 0
    budget_multiplier: int = 1000
    gamma: float = 17.0
    epsilon: float = 0.01
    tau: Fraction = Fraction(1, 2)
    rho: float = 0.1
    z_hat: int = 50
    jobs: int = 1

    def __post_init__(self) -> None:
        if not self.problems:
            raise ValueError("campaign needs at least one problem")
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}; known: {', '.join(VARIANTS)}")
        if self.seeds < 1:
            raise ValueError("seeds must be positive")
        if self.jobs < 1:
            raise ValueError("jobs must be positive")


@dataclass(frozen=True)
class CampaignCell:
    problem: Problem
    start_index: int
    sigma: float
    variant: str
    seed_index: int
    seed: int

    @property
    def instance(self) -> tuple[str, int, int]:
        """Profile unit: one (problem, start, seed-slot) triple."""
        return (self.problem.name, self.start_index, self.seed_index)

    @property
    def record_name(self) -> str:
        sigma_tag = f"{self.sigma:g}".replace(".", "p")
        return (
            f"{self.problem.name}__s{self.start_index}__sig{sigma_tag}"
            f"__{self.variant}__seed{self.seed_index}.jsonl"
        )


def campaign_cells(spec: CampaignSpec) -> list[CampaignCell]:
    cells = []
    for problem in spec.problems:
        for start_index in range(len(problem.starts)):
            for sigma in spec.sigmas:
                for variant in spec.variants:
                    for seed_index in range(spec.seeds):
                        seed = derive_key(
                            spec.master_seed, problem.name, start_index,
                            f"{sigma:g}", variant, seed_index,
                        ) & 0x7FFFFFFFFFFF
                        cells.append(
                            CampaignCell(problem, start_index, sigma, variant, seed_index, seed)
                        )
    return cells


def _cell_config(spec: CampaignSpec, variant: str) -> SolverConfig:
    mode, n_k = VARIANTS[variant]
    return SolverConfig(
        gamma=spec.gamma,
        epsilon=spec.epsilon,
        tau=spec.tau,
        z_hat=spec.z_hat,
        rho=spec.rho,
        n_k=n_k,
        mode=mode,
        budget_multiplier=spec.budget_multiplier,
    )


def run_cell(spec: CampaignSpec, cell: CampaignCell, out_dir: Path) -> Path:
    start = cell.problem.starts[cell.start_index]
    noise = NoiseSpec.from_problem(cell.problem, start, cell.sigma)
    config = _cell_config(spec, cell.variant)
    record = solver_run(cell.problem, noise, config, cell.seed, start)
    return record.write(out_dir / "records" / cell.record_name)


def _run_cell_worker(args: tuple[CampaignSpec, CampaignCell, str]) -> str:
    spec, cell, out_dir = args
    return str(run_cell(spec, cell, Path(out_dir)))


@dataclass
class CampaignResult:
    out_dir: Path
    record_paths: list[Path]
    summary_rows: list[dict]
    csv_paths: list[Path] = field(default_factory=list)
    figure_paths: list[Path] = field(default_factory=list)


def run_campaign(spec: CampaignSpec, out_dir) -> CampaignResult:
    """Run every cell, then aggregate profiles, CSV reports, and figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = campaign_cells(spec)
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            paths = list(pool.map(_run_cell_worker, [(spec, c, str(out)) for c in cells]))
        record_paths = [Path(p) for p in paths]
    else:
        record_paths = [run_cell(spec, cell, out) for cell in cells]
    problems = {p.name: p for p in spec.problems}
    result = aggregate_campaign(out, problems, spec.tau_tols)
    result.record_paths = record_paths
    return result


def aggregate_campaign(
    out_dir,
    problems: Mapping[str, Problem],
    tau_tols: Sequence[float],
    records_dir=None,
) -> CampaignResult:
    """Read every record under records_dir and emit profiles + summary.

    Reference values pool all runs of all solvers per (problem, start, sigma):
    the reference optimum is the best true-feasible value any run evaluated,
    and the gap baseline averages each run's first true-feasible value.
    """
    from .report import render_profile_figure, write_profile_csv, write_summary_csv

    out = Path(out_dir)
    record_dir = Path(records_dir) if records_dir is not None else out / "records"
    paths = sorted(record_dir.glob("*.jsonl"))
    if not paths:
        raise FileNotFoundError(f"no run records under {record_dir}")

    runs = []  # (header, truth, name parts, problem)
    budgets: dict[str, set[int]] = {}
    for path in paths:
        record = RunRecord.read(path)
        header = record.header
        problem = problems.get(header["problem"])
        if problem is None:
            from .record import problem_from_header

            problem = problem_from_header(header)
        truth = truth_trajectory(problem, record)
        runs.append((header, truth, _record_parts(path.name, header), problem))
        budgets.setdefault(header["problem"], set()).add(header["budget"])
    mixed = {name: sorted(b) for name, b in budgets.items() if len(b) > 1}
    if mixed:
        warnings.warn(
            f"records mix evaluation budgets within a problem: {mixed}; "
            "profiles compare them as-is",
            stacklevel=2,
        )

    # Pool reference values per (problem, start, sigma).
    pools: dict[tuple, list[RunTruth]] = {}
    for header, truth, parts, problem in runs:
        pools.setdefault((parts["problem"], parts["start"], parts["sigma"]), []).append(truth)
    references: dict[tuple, tuple[float | None, float | None]] = {}
    for key, truths in pools.items():
        bests = [t.best_feasible_f for t in truths if t.best_feasible_f is not None]
        f_star_ref = min(bests) if bests else None
        f_bar = f_bar_feas(t.first_feasible_f for t in truths)
        references[key] = (f_star_ref, f_bar)

    sigmas = sorted({parts["sigma"] for _, _, parts, _ in runs})
    variants = []
    for _, _, parts, _ in runs:
        if parts["variant"] not in variants:
            variants.append(parts["variant"])

    csv_paths: list[Path] = []
    figure_paths: list[Path] = []
    summary_rows: list[dict] = []
    for tau_tol in tau_tols:
        costs: dict[tuple, dict[str, float]] = {}
        dims: dict[tuple, int] = {}
        for header, truth, parts, problem in runs:
            ref_star, ref_bar = references[(parts["problem"], parts["start"], parts["sigma"])]
            if ref_star is None:
                cost = math.inf
            else:
                cost = solve_cost(truth, ref_star, ref_bar, tau_tol)
            instance = (parts["problem"], parts["start"], parts["seed"], parts["sigma"])
            column = _column_label(parts["variant"], parts["sigma"], len(sigmas) > 1)
            costs.setdefault(instance, {})[column] = cost
            dims[instance] = problem.n
        perf = performance_profile(costs)
        data = data_profile(costs, dims)
        tol_tag = f"{tau_tol:g}"
        perf_csv = out / f"perf_profile_{tol_tag}.csv"
        data_csv = out / f"data_profile_{tol_tag}.csv"
        write_profile_csv(perf, perf_csv, "ratio")
        write_profile_csv(data, data_csv, "kappa")
        csv_paths.extend([perf_csv, data_csv])
        perf_png = out / f"perf_profile_{tol_tag}.png"
        data_png = out / f"data_profile_{tol_tag}.png"
        render_profile_figure(
            perf, perf_png,
            xlabel="ratio to best solver",
            title=f"Performance profile (tol={tol_tag})",
        )
        render_profile_figure(
            data, data_png,
            xlabel="groups of n+1 evaluations",
            title=f"Data profile (tol={tol_tag})",
        )
        figure_paths.extend([perf_png, data_png])

        # Summary: percent of instances solved per variant and sigma.
        for sigma in sigmas:
            for variant in variants:
                column = _column_label(variant, sigma, len(sigmas) > 1)
                relevant = [
                    per for inst, per in costs.items() if inst[3] == sigma and column in per
                ]
                if not relevant:
                    continue
                solved = sum(1 for per in relevant if math.isfinite(per[column]))
                summary_rows.append(
                    {
                        "solver": variant,
                        "sigma": sigma,
                        "tau_tol": tau_tol,
                        "instances": len(relevant),
                        "solved": solved,
                        "percent_solved": 100.0 * solved / len(relevant),
                    }
                )

    summary_path = out / "summary.csv"
    write_summary_csv(summary_rows, summary_path)
    csv_paths.append(summary_path)
    return CampaignResult(
        out_dir=out, record_paths=paths, summary_rows=summary_rows,
        csv_paths=csv_paths, figure_paths=figure_paths,
    )


def _column_label(variant: str, sigma: float, multi_sigma: bool) -> str:
    return f"{variant}@sigma={sigma:g}" if multi_sigma else variant


def _record_parts(name: str, header: dict) -> dict:
    """Identify a run for pairing across solvers.

    Campaign filenames carry (problem, start index, sigma, variant, seed slot)
    so runs of different variants with the same slot pair into one instance.
    Foreign filenames fall back to header fields; each record then forms its
    own instance.
    """
    stem = name[: -len(".jsonl")] if name.endswith(".jsonl") else name
    parts = stem.split("__")
    if len(parts) == 5:
        problem, s_tag, sig_tag, variant, seed_tag = parts
        try:
            return {
                "problem": problem,
                "start": int(s_tag[1:]),
                "sigma": float(sig_tag[3:].replace("p", ".")),
                "variant": variant,
                "seed": int(seed_tag[4:]),
            }
        except ValueError:
            pass
    if header["mode"] == "deterministic":
        variant = "madspb"
    else:
        variant = f"stomads-nk{header['n_k']}"
    return {
        "problem": header["problem"],
        "start": tuple(header["start"]),
        "sigma": header["sigma"],
        "variant": variant,
        "seed": header["seed"],
    }
