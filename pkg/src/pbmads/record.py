"""Run records: JSONL serialization and bit-exact replay verification.

A record is one header line, one line per event (every blackbox call and
every iteration summary), and one final line. Floats go through repr-based
JSON so they round-trip exactly; frame sizes are stored as exact rational
strings. Replaying re-executes the run from the header and compares event
streams value for value.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import TYPE_CHECKING

from .core import DesignPoint, Mode, SolverConfig

if TYPE_CHECKING:  # pragma: no cover
    from .blackbox import NoiseSpec, Problem

SCHEMA_VERSION = 1


def config_header(
    problem: "Problem",
    noise: "NoiseSpec",
    config: SolverConfig,
    seed: int,
    start: DesignPoint,
    budget: int,
) -> dict:
    from .suite import builtin_names

    if problem.source_text is not None:
        source = "inline"
    elif problem.name in builtin_names():
        source = "builtin"
    else:
        source = "registered"
    header = {
        "type": "config",
        "schema": SCHEMA_VERSION,
        "problem": problem.name,
        "problem_source": source,
        "n": problem.n,
        "m": problem.m,
        "start": list(start.coords),
        "seed": int(seed),
        "sigma": noise.sigma,
        "half_widths": list(noise.half_widths),
        "mode": config.mode.value,
        "n_k": config.n_k,
        "gamma": config.gamma,
        "epsilon": config.epsilon,
        "tau": str(config.tau),
        "delta0": str(config.delta0),
        "z_hat": config.z_hat,
        "rho": config.rho,
        "budget": budget,
        "min_delta_p": config.min_delta_p,
        "estimate_inert_feasible": config.estimate_inert_feasible,
        "full_secondary_frame": config.full_secondary_frame,
    }
    if source == "inline":
        header["problem_text"] = problem.source_text
    return header


@dataclass
class RunRecord:
    header: dict
    events: list[dict]
    final: dict

    def write(self, path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with p.open("w") as fh:
            fh.write(json.dumps(self.header, separators=(",", ":")))
            fh.write("\n")
            for event in self.events:
                fh.write(json.dumps(event, separators=(",", ":")))
                fh.write("\n")
            fh.write(json.dumps(self.final, separators=(",", ":")))
            fh.write("\n")
        return p

    @classmethod
    def read(cls, path) -> "RunRecord":
        lines = Path(path).read_text().splitlines()
        if len(lines) < 2:
            raise ValueError(f"{path}: not a run record (too short)")
        header = json.loads(lines[0])
        if header.get("type") != "config":
            raise ValueError(f"{path}: first line is not a config header")
        if header.get("schema") != SCHEMA_VERSION:
            raise ValueError(
                f"{path}: schema {header.get('schema')!r} is not supported "
                f"(expected {SCHEMA_VERSION})"
            )
        final = json.loads(lines[-1])
        if final.get("type") != "final":
            raise ValueError(f"{path}: last line is not a final summary")
        events = [json.loads(line) for line in lines[1:-1]]
        return cls(header=header, events=events, final=final)

    # convenience views -------------------------------------------------

    def eval_events(self) -> list[dict]:
        return [e for e in self.events if e["type"] == "eval"]

    def iter_events(self) -> list[dict]:
        return [e for e in self.events if e["type"] == "iter"]


def problem_from_header(header: dict) -> "Problem":
    from .suite import get_problem, parse_problem_text

    source = header.get("problem_source", "builtin")
    if source == "inline":
        return parse_problem_text(header["problem_text"], name_hint=header["problem"])
    return get_problem(header["problem"])


def config_from_header(header: dict) -> SolverConfig:
    return SolverConfig(
        gamma=header["gamma"],
        epsilon=header["epsilon"],
        tau=Fraction(header["tau"]),
        delta0=Fraction(header["delta0"]),
        z_hat=header["z_hat"],
        rho=header["rho"],
        n_k=header["n_k"],
        mode=Mode(header["mode"]),
        budget=header["budget"],
        min_delta_p=header["min_delta_p"],
        estimate_inert_feasible=header["estimate_inert_feasible"],
        full_secondary_frame=header["full_secondary_frame"],
    )


@dataclass(frozen=True)
class ReplayReport:
    identical: bool
    events_checked: int
    first_divergence: int | None = None
    detail: str = ""

    def summary(self) -> str:
        if self.identical:
            return f"identical ({self.events_checked} events)"
        return f"divergence at event {self.first_divergence}: {self.detail}"


def _first_difference(old: list[dict], new: list[dict]) -> tuple[int, str] | None:
    for i, (a, b) in enumerate(zip(old, new)):
        if a != b:
            keys = sorted(set(a) | set(b))
            for key in keys:
                if a.get(key) != b.get(key):
                    return i, f"field {key!r}: recorded {a.get(key)!r}, replayed {b.get(key)!r}"
            return i, "event mismatch"
    if len(old) != len(new):
        i = min(len(old), len(new))
        return i, f"event count: recorded {len(old)}, replayed {len(new)}"
    return None


def replay_record(record: "RunRecord | str | Path", problem: "Problem | None" = None) -> ReplayReport:
    """Re-run a record's configuration and compare the event streams."""
    from .blackbox import NoiseSpec
    from .solver import SolverRun

    if not isinstance(record, RunRecord):
        record = RunRecord.read(record)
    header = record.header
    if problem is None:
        problem = problem_from_header(header)
    noise = NoiseSpec(header["sigma"], tuple(header["half_widths"]))
    config = config_from_header(header)
    start = DesignPoint(tuple(header["start"]))
    fresh = SolverRun(problem, noise, config, header["seed"], start).run_to_completion()
    # Round-trip the regenerated record through JSON so float comparisons are
    # exactly what a reader of the file would see.
    regen = [json.loads(json.dumps(e, separators=(",", ":"))) for e in fresh.events]
    recorded = record.events
    diff = _first_difference(recorded, regen)
    if diff is not None:
        return ReplayReport(False, len(recorded), diff[0], diff[1])
    old_final = dict(record.final)
    new_final = json.loads(json.dumps(fresh.final, separators=(",", ":")))
    if old_final != new_final:
        return ReplayReport(
            False, len(recorded), len(recorded),
            f"final summary differs: recorded {old_final!r}, replayed {new_final!r}",
        )
    return ReplayReport(True, len(recorded))
