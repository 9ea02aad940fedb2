"""Progressive-barrier direct-search driver.

One iteration: re-estimate the incumbents, recompute the barrier threshold
from the infeasible incumbent's violation upper bound, pick frame centers,
poll mesh neighbors opportunistically, classify the iteration, update the
incumbents and the frame size.

Two incumbents are tracked: the best point whose violation upper bound
vanished (the feasible incumbent, live only after the first such point is
accepted) and the most promising not-certified-feasible point (the
infeasible incumbent). Acceptance always requires an estimated decrease of
at least gamma * epsilon * delta_p**2 (scaled by m for the violation), which
is what makes progress trustworthy under noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .blackbox import NoiseSpec, NoisyOracle, Problem, SampleCache
from .core import DesignPoint, IterationOutcome, MeshState, Mode, OutcomeTag, SolverConfig
from .estimator import EstimateBundle, estimate, estimate_once
from .poll import PollCandidate, build_poll_set
from .record import RunRecord, config_header
from .rng import derive_key


@dataclass(frozen=True)
class FrameSelection:
    primary: tuple[DesignPoint, bool]          # (center, centered on infeasible incumbent?)
    secondary: tuple[DesignPoint, bool] | None


def select_frame_centers(
    bundle_feas: EstimateBundle | None,
    bundle_inf: EstimateBundle | None,
    rho: float,
    epsilon: float,
    delta_p: float,
) -> FrameSelection:
    """Choose which incumbent anchors the full frame this iteration.

    The infeasible incumbent leads exactly when its estimated objective
    undercuts the feasible one by more than the frame trigger rho plus twice
    the estimation margin — evidence that pushing through the infeasible
    region is worthwhile. Otherwise the feasible incumbent leads.
    """
    if bundle_feas is None and bundle_inf is None:
        raise ValueError("at least one incumbent bundle is required")
    if bundle_feas is None:
        return FrameSelection((bundle_inf.point, True), None)
    if bundle_inf is None:
        return FrameSelection((bundle_feas.point, False), None)
    margin = 2.0 * epsilon * delta_p * delta_p
    if bundle_feas.f_hat - rho > bundle_inf.f_hat + margin:
        return FrameSelection((bundle_inf.point, True), (bundle_feas.point, False))
    return FrameSelection((bundle_feas.point, False), (bundle_inf.point, True))


def classify(
    evaluated: list[tuple[PollCandidate, EstimateBundle]],
    bundle_inf: EstimateBundle,
    bundle_feas: EstimateBundle | None,
    h_max: float,
    feas_flag: bool,
    gamma: float,
    epsilon: float,
    m: int,
    delta_p: float,
) -> tuple[OutcomeTag, PollCandidate | None]:
    """Classify an iteration from the evaluated candidates, in scan order.

    Dominating outcomes go to the first candidate that certifies feasibility
    (improving on the feasible incumbent once one exists) or that makes both
    estimated objective and violation drop by the trust margins relative to
    the infeasible incumbent. Failing those, a sufficient violation decrease
    alone makes the iteration improving, and the new infeasible incumbent is
    the qualifying candidate with the smallest violation upper bound.
    """
    f_margin = gamma * epsilon * delta_p * delta_p
    h_margin = gamma * m * epsilon * delta_p * delta_p
    for cand, b in evaluated:
        if b.upper == 0.0:
            if not feas_flag:
                return OutcomeTag.F_DOMINATING, cand
            if b.f_hat - bundle_feas.f_hat <= -f_margin:
                return OutcomeTag.F_DOMINATING, cand
        elif cand.from_infeasible_frame and 0.0 < b.upper <= h_max:
            if (
                b.f_hat - bundle_inf.f_hat <= -f_margin
                and b.h_hat - bundle_inf.h_hat <= -h_margin
            ):
                return OutcomeTag.H_DOMINATING, cand
    best: tuple[PollCandidate, EstimateBundle] | None = None
    for cand, b in evaluated:
        if (
            cand.from_infeasible_frame
            and 0.0 < b.upper <= h_max
            and b.h_hat - bundle_inf.h_hat <= -h_margin
        ):
            if best is None or b.upper < best[1].upper:
                best = (cand, b)
    if best is not None:
        return OutcomeTag.IMPROVING, best[0]
    return OutcomeTag.UNSUCCESSFUL, None


def update_mesh(mesh: MeshState, outcome: OutcomeTag) -> MeshState:
    return mesh.expanded() if outcome.success else mesh.contracted()


class SolverRun:
    """One seeded solve of one problem. Drives iterations and logs events."""

    def __init__(
        self,
        problem: Problem,
        noise: NoiseSpec,
        config: SolverConfig,
        seed: int,
        start: DesignPoint | None = None,
    ):
        self.problem = problem
        self.noise = noise
        self.config = config
        self.seed = int(seed)
        self.start = start if start is not None else problem.starts[0]
        if self.start.n != problem.n:
            raise ValueError("start dimension mismatch")
        if not problem.in_domain(self.start):
            raise ValueError("start lies outside the problem domain")
        budget = config.resolve_budget(problem.n)
        self.oracle = NoisyOracle(problem, noise, self.seed, budget)
        self.cache = SampleCache(problem.m + 1)
        self.mesh = config.initial_mesh()
        self.x_inf = self.start
        self.x_feas = self.start      # inert placeholder until feas_flag flips
        self.feas_flag = False
        self.k = 0
        self.stop_reason: str | None = None
        # Deterministic mode starts with an unbounded barrier; otherwise the
        # barrier is recomputed from the infeasible incumbent every iteration.
        self.h_max = math.inf
        self.events: list[dict] = []

    # ------------------------------------------------------------- helpers

    @property
    def deterministic(self) -> bool:
        return self.config.mode is Mode.DETERMINISTIC

    def _sink(self, x: DesignPoint, block) -> None:
        p = self.cache.count(x)
        total = len(block)
        base = p - total
        for i, row in enumerate(block):
            self.events.append(
                {
                    "type": "eval",
                    "k": self.k,
                    "point": list(x.coords),
                    "channels": [float(v) for v in row],
                    "p": base + i + 1,
                }
            )

    def _estimate(self, x: DesignPoint, delta_p: float) -> EstimateBundle | None:
        if self.deterministic:
            return estimate_once(
                self.cache, self.oracle, x, delta_p, self.config.epsilon, self._sink
            )
        return estimate(
            self.cache,
            self.oracle,
            x,
            delta_p,
            self.config.n_k,
            self.config.epsilon,
            self._sink,
        )

    def _stop(self, reason: str) -> None:
        self.stop_reason = reason

    def _log_iteration(self, outcome: IterationOutcome) -> None:
        self.events.append(
            {
                "type": "iter",
                "k": self.k,
                "outcome": outcome.tag.value,
                "accepted": list(outcome.accepted.coords) if outcome.accepted else None,
                "delta_p": str(self.mesh.delta_p),
                "h_max": self.h_max,
                "incumbents": {
                    "inf": list(self.x_inf.coords),
                    "feas": list(self.x_feas.coords),
                    "flag": self.feas_flag,
                },
            }
        )

    # ----------------------------------------------------------- iteration

    def step(self) -> IterationOutcome | None:
        """Run one iteration; None when the run has stopped."""
        if self.stop_reason is not None:
            return None
        if float(self.mesh.delta_p) < self.config.min_delta_p:
            self._stop("delta_p_floor")
            return None
        if self.oracle.remaining <= 0:
            self._stop("budget")
            return None
        cfg = self.config
        dp = float(self.mesh.delta_p)

        bundle_inf = self._estimate(self.x_inf, dp)
        if bundle_inf is None:
            self._stop("budget")
            return None
        bundle_feas = None
        if self.feas_flag:
            bundle_feas = self._estimate(self.x_feas, dp)
            if bundle_feas is None:
                self._stop("budget")
                return None
        elif cfg.estimate_inert_feasible and self.x_feas != self.x_inf:
            # Optional strict bookkeeping: sample the inert feasible seed too.
            if self._estimate(self.x_feas, dp) is None:
                self._stop("budget")
                return None

        # Barrier threshold for this iteration. The deterministic mode keeps
        # +inf for iteration 0 only.
        if not (self.deterministic and self.k == 0):
            self.h_max = bundle_inf.upper

        if self.feas_flag:
            frames = select_frame_centers(bundle_feas, bundle_inf, cfg.rho, cfg.epsilon, dp)
        else:
            frames = FrameSelection((self.x_inf, True), None)

        poll = build_poll_set(
            frames.primary,
            frames.secondary,
            self.mesh,
            self.problem.in_domain,
            derive_key(self.seed, "poll", self.k),
            self.cache.last_upper,
            cfg.full_secondary_frame,
        )

        evaluated: list[tuple[PollCandidate, EstimateBundle]] = []
        for cand in poll:
            bundle = self._estimate(cand.point, dp)
            if bundle is None:
                # Budget died mid-poll: finalize with current incumbents.
                self._stop("budget")
                return None
            evaluated.append((cand, bundle))
            tag, _ = classify(
                evaluated, bundle_inf, bundle_feas, self.h_max,
                self.feas_flag, cfg.gamma, cfg.epsilon, self.problem.m, dp,
            )
            if tag in (OutcomeTag.F_DOMINATING, OutcomeTag.H_DOMINATING):
                break

        tag, accepted = classify(
            evaluated, bundle_inf, bundle_feas, self.h_max,
            self.feas_flag, cfg.gamma, cfg.epsilon, self.problem.m, dp,
        )
        if tag is OutcomeTag.F_DOMINATING:
            self.x_feas = accepted.point
            self.feas_flag = True
        elif tag in (OutcomeTag.H_DOMINATING, OutcomeTag.IMPROVING):
            self.x_inf = accepted.point
        outcome = IterationOutcome(tag, accepted.point if accepted else None)

        self._log_iteration(outcome)
        self.mesh = update_mesh(self.mesh, tag)
        self.k += 1
        return outcome

    def run_to_completion(self) -> RunRecord:
        while self.step() is not None:
            pass
        header = config_header(
            self.problem, self.noise, self.config, self.seed, self.start,
            self.oracle.budget,
        )
        final = {
            "type": "final",
            "evaluations": self.oracle.calls,
            "iterations": self.k,
            "stop": self.stop_reason,
            "incumbents": {
                "inf": list(self.x_inf.coords),
                "feas": list(self.x_feas.coords) if self.feas_flag else None,
                "flag": self.feas_flag,
            },
        }
        return RunRecord(header=header, events=self.events, final=final)


def run(
    problem: Problem,
    noise: NoiseSpec,
    config: SolverConfig,
    seed: int,
    start: DesignPoint | None = None,
) -> RunRecord:
    """Solve and return the full run record."""
    return SolverRun(problem, noise, config, seed, start).run_to_completion()
