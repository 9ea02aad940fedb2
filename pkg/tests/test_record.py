import json
import math
from fractions import Fraction

import pytest

from pbmads.blackbox import NoiseSpec
from pbmads.core import DesignPoint, Mode, SolverConfig
from pbmads.record import (
    RunRecord,
    config_from_header,
    config_header,
    problem_from_header,
    replay_record,
)
from pbmads.solver import run
from pbmads.suite import get_problem, parse_problem_text

INLINE_TEXT = """\
name boundary
n 2
m 1
bounds -2 2
f x1 + x2
c1 1 - x1^2 - x2^2
start 0 0
fstar -2.8284271247461903
"""


def small_record(sigma=0.01, seed=9, **kwargs):
    problem = get_problem("toy2d")
    noise = (
        NoiseSpec.exact(problem.m)
        if sigma == 0.0
        else NoiseSpec.from_problem(problem, problem.starts[0], sigma=sigma)
    )
    config = SolverConfig(budget=200, **kwargs)
    return problem, run(problem, noise, config, seed)


class TestHeader:
    def test_builtin_header_fields(self):
        problem, rec = small_record()
        h = rec.header
        assert h["type"] == "config"
        assert h["problem"] == "toy2d"
        assert h["problem_source"] == "builtin"
        assert h["n"] == 2 and h["m"] == 1
        assert h["sigma"] == pytest.approx(0.01)
        assert len(h["half_widths"]) == problem.m + 1
        assert h["tau"] == "1/2"
        assert h["budget"] == 200
        assert "problem_text" not in h

    def test_config_round_trip(self):
        config = SolverConfig(
            gamma=5.0,
            epsilon=0.02,
            tau=Fraction(1, 4),
            n_k=3,
            mode=Mode.DETERMINISTIC,
            rho=0.2,
            z_hat=12,
            min_delta_p=1e-6,
            estimate_inert_feasible=True,
            full_secondary_frame=True,
            budget=50,
        )
        problem = get_problem("toy2d")
        header = config_header(
            problem, NoiseSpec.exact(1), config, 3, problem.starts[0], 50
        )
        back = config_from_header(header)
        assert back == config

    def test_inline_problem_embeds_source(self):
        problem = parse_problem_text(INLINE_TEXT)
        noise = NoiseSpec.exact(problem.m)
        rec = run(problem, noise, SolverConfig(budget=60), 1)
        assert rec.header["problem_source"] == "inline"
        assert rec.header["problem_text"] == INLINE_TEXT
        revived = problem_from_header(rec.header)
        assert revived.name == "boundary"
        assert revived.objective((1.0, 1.0)) == pytest.approx(2.0)

    def test_builtin_problem_revives_by_name(self):
        _, rec = small_record()
        assert problem_from_header(rec.header) is get_problem("toy2d")

    def test_unknown_problem_fails_cleanly(self):
        _, rec = small_record()
        header = dict(rec.header)
        header["problem"] = "vanished"
        header["problem_source"] = "registered"
        with pytest.raises(KeyError):
            problem_from_header(header)


class TestRoundTrip:
    def test_write_read_identity(self, tmp_path):
        _, rec = small_record()
        path = tmp_path / "run.jsonl"
        rec.write(path)
        back = RunRecord.read(path)
        assert back.header == rec.header
        assert back.events == json.loads(
            "[" + ",".join(json.dumps(e, separators=(",", ":")) for e in rec.events) + "]"
        )
        assert back.final == rec.final

    def test_write_is_byte_stable(self, tmp_path):
        _, rec = small_record()
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        rec.write(a)
        rec.write(b)
        assert a.read_bytes() == b.read_bytes()

    def test_event_views(self):
        _, rec = small_record()
        evals = rec.eval_events()
        iters = rec.iter_events()
        assert evals and iters
        assert len(evals) + len(iters) == len(rec.events)
        assert all(e["type"] == "eval" for e in evals)
        assert all({"k", "point", "channels", "p"} <= e.keys() for e in evals)
        assert all(
            {"k", "outcome", "accepted", "delta_p", "h_max", "incumbents"} <= e.keys()
            for e in iters
        )

    def test_delta_p_serialized_as_exact_rational(self):
        _, rec = small_record()
        for e in rec.iter_events():
            assert float(Fraction(e["delta_p"])) > 0.0

    def test_read_rejects_truncated_file(self, tmp_path):
        p = tmp_path / "short.jsonl"
        p.write_text('{"type":"config","schema":1}\n')
        with pytest.raises(ValueError, match="too short"):
            RunRecord.read(p)

    def test_read_rejects_missing_header(self, tmp_path):
        _, rec = small_record()
        path = tmp_path / "run.jsonl"
        rec.write(path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[1:]) + "\n")
        with pytest.raises(ValueError, match="config header"):
            RunRecord.read(path)

    def test_read_rejects_unknown_schema(self, tmp_path):
        _, rec = small_record()
        path = tmp_path / "run.jsonl"
        rec.write(path)
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        header["schema"] = 999
        lines[0] = json.dumps(header, separators=(",", ":"))
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="schema"):
            RunRecord.read(path)

    def test_read_rejects_missing_final(self, tmp_path):
        _, rec = small_record()
        path = tmp_path / "run.jsonl"
        rec.write(path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ValueError, match="final"):
            RunRecord.read(path)


class TestReplay:
    def test_clean_record_replays_identically(self, tmp_path):
        _, rec = small_record()
        path = tmp_path / "run.jsonl"
        rec.write(path)
        report = replay_record(path)
        assert report.identical
        assert report.summary() == f"identical ({len(rec.events)} events)"

    def test_inline_record_replays_identically(self):
        problem = parse_problem_text(INLINE_TEXT)
        rec = run(problem, NoiseSpec.exact(1), SolverConfig(budget=60), 1)
        assert replay_record(rec).identical

    def test_deterministic_record_replays_identically(self):
        _, rec = small_record(sigma=0.0, mode=Mode.DETERMINISTIC)
        assert replay_record(rec).identical

    def test_tampered_channel_reports_event_index(self, tmp_path):
        _, rec = small_record()
        path = tmp_path / "run.jsonl"
        rec.write(path)
        lines = path.read_text().splitlines()
        victim = 5
        event = json.loads(lines[1 + victim])
        assert event["type"] == "eval"
        event["channels"][0] += 0.5
        lines[1 + victim] = json.dumps(event, separators=(",", ":"))
        path.write_text("\n".join(lines) + "\n")
        report = replay_record(path)
        assert not report.identical
        assert report.first_divergence == victim
        assert "divergence at event 5" in report.summary()
        assert "channels" in report.summary()

    def test_dropped_tail_reports_length_mismatch(self, tmp_path):
        _, rec = small_record()
        path = tmp_path / "run.jsonl"
        rec.write(path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-11] + [lines[-1]]) + "\n")
        report = replay_record(path)
        assert not report.identical

    def test_tampered_final_detected(self, tmp_path):
        _, rec = small_record()
        path = tmp_path / "run.jsonl"
        rec.write(path)
        lines = path.read_text().splitlines()
        final = json.loads(lines[-1])
        final["evaluations"] += 1
        lines[-1] = json.dumps(final, separators=(",", ":"))
        path.write_text("\n".join(lines) + "\n")
        report = replay_record(path)
        assert not report.identical
        assert "final" in report.summary()

    def test_infinite_barrier_survives_round_trip(self, tmp_path):
        # deterministic runs log h_max = inf at iteration 0; the JSON lines
        # format must carry it through write, read, and replay
        _, rec = small_record(sigma=0.0, mode=Mode.DETERMINISTIC)
        path = tmp_path / "run.jsonl"
        rec.write(path)
        back = RunRecord.read(path)
        assert back.iter_events()[0]["h_max"] == math.inf
        assert replay_record(path).identical
