import math
from fractions import Fraction

import pytest

from pbmads.blackbox import NoiseSpec, true_eval
from pbmads.core import (
    DesignPoint,
    IterationOutcome,
    MeshState,
    Mode,
    OutcomeTag,
    SolverConfig,
)
from pbmads.estimator import EstimateBundle
from pbmads.poll import PollCandidate
from pbmads.solver import (
    FrameSelection,
    SolverRun,
    classify,
    run,
    select_frame_centers,
    update_mesh,
)
from pbmads.suite import get_problem

X_FEAS = DesignPoint((0.0, 0.0))
X_INF = DesignPoint((1.0, 1.0))


def bundle(point, f_hat, upper, h_hat=None, lower=None, delta_p=1.0):
    if h_hat is None:
        h_hat = upper
    if lower is None:
        lower = max(h_hat - (upper - h_hat), 0.0)
    return EstimateBundle(
        point=point,
        f_hat=f_hat,
        c_hat=(h_hat,),
        h_hat=h_hat,
        lower=lower,
        upper=upper,
        p=1,
        delta_p=delta_p,
    )


def cand(point, infeasible_frame=True, center=X_INF):
    return PollCandidate(center, (1, 0), point, infeasible_frame)


class TestSelectFrameCenters:
    def test_infeasible_leads_on_clear_gap(self):
        feas = bundle(X_FEAS, f_hat=3.0, upper=0.0)
        inf = bundle(X_INF, f_hat=1.0, upper=0.3)
        sel = select_frame_centers(feas, inf, rho=0.1, epsilon=0.01, delta_p=1.0)
        assert sel == FrameSelection((X_INF, True), (X_FEAS, False))

    def test_feasible_leads_on_equal_objectives(self):
        feas = bundle(X_FEAS, f_hat=2.0, upper=0.0)
        inf = bundle(X_INF, f_hat=2.0, upper=0.3)
        sel = select_frame_centers(feas, inf, rho=0.1, epsilon=0.01, delta_p=1.0)
        assert sel.primary == (X_FEAS, False)
        assert sel.secondary == (X_INF, True)

    def test_boundary_case_stays_with_feasible(self):
        # gap exactly equal to trigger + margin does not flip the frame
        feas = bundle(X_FEAS, f_hat=1.12, upper=0.0)
        inf = bundle(X_INF, f_hat=1.0, upper=0.3)
        sel = select_frame_centers(feas, inf, rho=0.1, epsilon=0.01, delta_p=1.0)
        assert sel.primary == (X_FEAS, False)

    def test_single_incumbent_cases(self):
        inf = bundle(X_INF, f_hat=1.0, upper=0.3)
        feas = bundle(X_FEAS, f_hat=1.0, upper=0.0)
        assert select_frame_centers(None, inf, 0.1, 0.01, 1.0) == FrameSelection(
            (X_INF, True), None
        )
        assert select_frame_centers(feas, None, 0.1, 0.01, 1.0) == FrameSelection(
            (X_FEAS, False), None
        )
        with pytest.raises(ValueError):
            select_frame_centers(None, None, 0.1, 0.01, 1.0)

    def test_trigger_scaling_invariance(self):
        # any rho preserving the inequality's truth keeps the same primary
        feas = bundle(X_FEAS, f_hat=3.0, upper=0.0)
        inf = bundle(X_INF, f_hat=1.0, upper=0.3)
        lead = lambda rho: select_frame_centers(feas, inf, rho, 0.01, 1.0).primary[0]
        assert lead(0.1) == lead(1.0) == X_INF
        assert lead(2.5) == lead(5.0) == X_FEAS


class TestClassify:
    # m=1, gamma=17, epsilon=0.01, delta_p=1: both margins are 0.17
    GAMMA, EPS, M, DP = 17.0, 0.01, 1, 1.0

    def _classify(self, evaluated, *, feas_flag=False, h_max=0.5, feas=None):
        inf = bundle(X_INF, f_hat=1.0, upper=0.5, h_hat=0.5)
        return classify(
            evaluated,
            inf,
            feas,
            h_max,
            feas_flag,
            self.GAMMA,
            self.EPS,
            self.M,
            self.DP,
        )

    def test_h_dominating_on_both_drops(self):
        pt = DesignPoint((1.5, 1.0))
        c = cand(pt)
        b = bundle(pt, f_hat=0.8, upper=0.2, h_hat=0.3)
        tag, who = self._classify([(c, b)])
        assert tag is OutcomeTag.H_DOMINATING
        assert who is c

    def test_improving_when_objective_drop_too_small(self):
        pt = DesignPoint((1.5, 1.0))
        c = cand(pt)
        b = bundle(pt, f_hat=0.9, upper=0.2, h_hat=0.3)
        tag, who = self._classify([(c, b)])
        assert tag is OutcomeTag.IMPROVING
        assert who is c

    def test_first_certified_point_dominates_before_any_success(self):
        pt = DesignPoint((2.0, 2.0))
        c = cand(pt)
        b = bundle(pt, f_hat=99.0, upper=0.0, h_hat=0.0)
        tag, who = self._classify([(c, b)], feas_flag=False)
        assert tag is OutcomeTag.F_DOMINATING
        assert who is c

    def test_certified_point_needs_objective_drop_after_success(self):
        feas = bundle(X_FEAS, f_hat=1.0, upper=0.0, h_hat=0.0)
        pt = DesignPoint((2.0, 2.0))
        c = cand(pt, infeasible_frame=False, center=X_FEAS)
        good = bundle(pt, f_hat=0.83, upper=0.0, h_hat=0.0)
        tag, who = self._classify([(c, good)], feas_flag=True, feas=feas)
        assert tag is OutcomeTag.F_DOMINATING
        bad = bundle(pt, f_hat=0.84, upper=0.0, h_hat=0.0)
        tag, who = self._classify([(c, bad)], feas_flag=True, feas=feas)
        assert tag is OutcomeTag.UNSUCCESSFUL
        assert who is None

    def test_candidates_above_barrier_do_not_count(self):
        pt = DesignPoint((1.5, 1.0))
        b = bundle(pt, f_hat=0.1, upper=0.6, h_hat=0.1)  # upper > h_max
        tag, who = self._classify([(cand(pt), b)])
        assert tag is OutcomeTag.UNSUCCESSFUL

    def test_feasible_frame_candidates_cannot_improve_violation(self):
        pt = DesignPoint((1.5, 1.0))
        b = bundle(pt, f_hat=0.8, upper=0.2, h_hat=0.3)
        c = cand(pt, infeasible_frame=False, center=X_FEAS)
        tag, _ = self._classify([(c, b)])
        assert tag is OutcomeTag.UNSUCCESSFUL

    def test_empty_candidate_list_is_unsuccessful(self):
        tag, who = self._classify([])
        assert tag is OutcomeTag.UNSUCCESSFUL
        assert who is None

    def test_improving_picks_smallest_violation_bound(self):
        p1, p2 = DesignPoint((1.5, 1.0)), DesignPoint((1.0, 1.5))
        b1 = bundle(p1, f_hat=0.9, upper=0.3, h_hat=0.3)
        b2 = bundle(p2, f_hat=0.95, upper=0.2, h_hat=0.3)
        tag, who = self._classify([(cand(p1), b1), (cand(p2), b2)])
        assert tag is OutcomeTag.IMPROVING
        assert who.point == p2

    def test_improving_tie_breaks_by_scan_order(self):
        p1, p2 = DesignPoint((1.5, 1.0)), DesignPoint((1.0, 1.5))
        b1 = bundle(p1, f_hat=0.9, upper=0.2, h_hat=0.3)
        b2 = bundle(p2, f_hat=0.9, upper=0.2, h_hat=0.3)
        tag, who = self._classify([(cand(p1), b1), (cand(p2), b2)])
        assert tag is OutcomeTag.IMPROVING
        assert who.point == p1

    def test_scan_order_is_opportunistic(self):
        # an h-dominating candidate earlier in the scan wins over a later
        # certified-feasible one
        p1, p2 = DesignPoint((1.5, 1.0)), DesignPoint((2.0, 2.0))
        b1 = bundle(p1, f_hat=0.8, upper=0.2, h_hat=0.3)
        b2 = bundle(p2, f_hat=0.0, upper=0.0, h_hat=0.0)
        tag, who = self._classify([(cand(p1), b1), (cand(p2), b2)])
        assert tag is OutcomeTag.H_DOMINATING
        assert who.point == p1


class TestUpdateMesh:
    def test_contracts_on_unsuccessful(self):
        mesh = MeshState(Fraction(1), Fraction(1, 2), z_hat=4)
        out = update_mesh(mesh, OutcomeTag.UNSUCCESSFUL)
        assert out.delta_p == Fraction(1, 2)
        assert out.delta_m == Fraction(1, 4)

    def test_expands_on_improving(self):
        mesh = MeshState(Fraction(1), Fraction(1, 2), z_hat=4)
        out = update_mesh(mesh, OutcomeTag.IMPROVING)
        assert out.delta_p == Fraction(2)
        assert out.delta_m == Fraction(2)

    def test_cap_freezes_expansion(self):
        mesh = MeshState(Fraction(16), Fraction(1, 2), z_hat=4)
        for tag in (OutcomeTag.F_DOMINATING, OutcomeTag.H_DOMINATING, OutcomeTag.IMPROVING):
            assert update_mesh(mesh, tag).delta_p == Fraction(16)


class TestIterationOutcomeContract:
    def test_success_needs_point(self):
        with pytest.raises(ValueError):
            IterationOutcome(OutcomeTag.IMPROVING, None)
        with pytest.raises(ValueError):
            IterationOutcome(OutcomeTag.UNSUCCESSFUL, X_INF)


def toy_run(seed=42, sigma=0.0, **kwargs):
    problem = get_problem("toy2d")
    noise = (
        NoiseSpec.exact(problem.m)
        if sigma == 0.0
        else NoiseSpec.from_problem(problem, problem.starts[0], sigma=sigma)
    )
    config = SolverConfig(**kwargs)
    return problem, noise, config, seed


class TestSolverRun:
    def test_same_seed_reproduces_bit_identical_records(self):
        problem, noise, config, seed = toy_run(sigma=0.01, n_k=2)
        a = run(problem, noise, config, seed)
        b = run(problem, noise, config, seed)
        assert a.header == b.header
        assert a.events == b.events
        assert a.final == b.final

    def test_different_seed_diverges(self):
        problem, noise, config, _ = toy_run(sigma=0.01)
        a = run(problem, noise, config, 1)
        b = run(problem, noise, config, 2)
        assert a.events != b.events

    def test_budget_never_exceeded(self):
        problem, noise, config, seed = toy_run(sigma=0.01, budget=137)
        rec = run(problem, noise, config, seed)
        assert rec.final["evaluations"] <= 137
        assert rec.final["stop"] == "budget"
        evals = [e for e in rec.events if e["type"] == "eval"]
        assert len(evals) == rec.final["evaluations"]

    def test_default_budget_rule(self):
        problem, noise, config, seed = toy_run()
        solver = SolverRun(problem, noise, config, seed)
        assert solver.oracle.budget == 1000 * (problem.n + 1)

    def test_frame_floor_stops_before_budget(self):
        problem, noise, config, seed = toy_run(mode=Mode.DETERMINISTIC)
        rec = run(problem, noise, config, seed)
        assert rec.final["stop"] == "delta_p_floor"
        assert rec.final["evaluations"] < 3000

    def test_deterministic_mode_pays_once_per_point(self):
        problem, noise, config, seed = toy_run(mode=Mode.DETERMINISTIC)
        rec = run(problem, noise, config, seed)
        evals = [e for e in rec.events if e["type"] == "eval"]
        points = {tuple(e["point"]) for e in evals}
        assert len(evals) == len(points) == rec.final["evaluations"]

    def test_stochastic_mode_pays_nk_per_estimate(self):
        problem, noise, config, seed = toy_run(sigma=0.01, n_k=3, budget=600)
        rec = run(problem, noise, config, seed)
        evals = [e for e in rec.events if e["type"] == "eval"]
        assert len(evals) == rec.final["evaluations"]
        assert len(evals) % 3 == 0
        # pooled sample count at any point only ever grows in steps of n_k
        totals = {}
        for e in evals:
            totals[tuple(e["point"])] = e["p"]
        assert all(total % 3 == 0 for total in totals.values())

    def test_mode_equivalence_at_zero_noise(self):
        problem, noise, _, seed = toy_run()
        stoch = run(problem, noise, SolverConfig(mode=Mode.STOCHASTIC, n_k=1), seed)
        det = run(problem, noise, SolverConfig(mode=Mode.DETERMINISTIC, n_k=1), seed)
        its = [e for e in stoch.events if e["type"] == "iter"]
        itd = [e for e in det.events if e["type"] == "iter"]
        assert len(its) == len(itd) == 122
        for a, b in zip(its, itd):
            stripped_a = {k: v for k, v in a.items() if k != "h_max"}
            stripped_b = {k: v for k, v in b.items() if k != "h_max"}
            assert stripped_a == stripped_b
        assert itd[0]["h_max"] == math.inf
        assert its[0]["h_max"] < math.inf
        assert its[1]["h_max"] == itd[1]["h_max"]

    def test_barrier_finite_from_start_in_stochastic_mode(self):
        problem, noise, config, seed = toy_run(sigma=0.01)
        rec = run(problem, noise, config, seed)
        for e in rec.events:
            if e["type"] == "iter":
                assert math.isfinite(e["h_max"])

    def test_incumbent_updates_follow_outcomes(self):
        problem, noise, config, seed = toy_run(sigma=0.01)
        rec = run(problem, noise, config, seed)
        its = [e for e in rec.events if e["type"] == "iter"]
        prev_inf = prev_feas = list(problem.starts[0].coords)
        prev_flag = False
        for e in its:
            inc = e["incumbents"]
            if inc["inf"] != prev_inf:
                assert e["outcome"] in ("h-dominating", "improving")
            if inc["feas"] != prev_feas:
                assert e["outcome"] == "f-dominating"
            if prev_flag:
                assert inc["flag"]  # the flag never resets
            prev_inf, prev_feas, prev_flag = inc["inf"], inc["feas"], inc["flag"]

    def test_accepted_point_matches_new_incumbent(self):
        problem, noise, config, seed = toy_run(sigma=0.01)
        rec = run(problem, noise, config, seed)
        for e in rec.events:
            if e["type"] != "iter" or e["accepted"] is None:
                continue
            inc = e["incumbents"]
            if e["outcome"] == "f-dominating":
                assert e["accepted"] == inc["feas"]
            else:
                assert e["accepted"] == inc["inf"]

    def test_budget_death_mid_poll_leaves_no_iteration_event(self):
        problem, noise, config, seed = toy_run(sigma=0.01, n_k=2, budget=3)
        rec = run(problem, noise, config, seed)
        assert rec.final["stop"] == "budget"
        assert rec.final["iterations"] == 0
        assert not [e for e in rec.events if e["type"] == "iter"]
        # the incumbent estimate fit, the first candidate no longer did
        assert rec.final["evaluations"] == 2

    def test_strict_bookkeeping_costs_extra(self):
        problem, noise, _, seed = toy_run()
        lean = run(problem, noise, SolverConfig(mode=Mode.DETERMINISTIC), seed)
        strict = run(
            problem,
            noise,
            SolverConfig(mode=Mode.DETERMINISTIC, estimate_inert_feasible=True),
            seed,
        )
        assert strict.final["evaluations"] >= lean.final["evaluations"]

    def test_true_violation_reaches_zero_on_disk_problem(self):
        problem, noise, config, seed = toy_run(mode=Mode.DETERMINISTIC)
        rec = run(problem, noise, config, seed)
        best_h = math.inf
        for e in rec.events:
            if e["type"] == "eval":
                h = true_eval(problem, DesignPoint(tuple(e["point"]))).h
                best_h = min(best_h, h)
        assert best_h == 0.0

    def test_start_validation(self):
        problem, noise, config, seed = toy_run()
        with pytest.raises(ValueError):
            SolverRun(problem, noise, config, seed, start=DesignPoint((0.0,)))
        with pytest.raises(ValueError):
            SolverRun(problem, noise, config, seed, start=DesignPoint((99.0, 99.0)))

    def test_alternate_start_used(self):
        problem, noise, config, seed = toy_run(sigma=0.01)
        alt = problem.starts[1]
        solver = SolverRun(problem, noise, config, seed, start=alt)
        assert solver.x_inf == alt
        assert solver.x_feas == alt

    def test_step_returns_none_after_stop(self):
        problem, noise, config, seed = toy_run(sigma=0.01, budget=3, n_k=2)
        solver = SolverRun(problem, noise, config, seed)
        while solver.step() is not None:
            pass
        assert solver.step() is None
        assert solver.stop_reason == "budget"
