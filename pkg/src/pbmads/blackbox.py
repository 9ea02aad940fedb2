"""Problem containers, truth/noisy oracles, and the shared sample cache."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import DesignPoint, violation
from .rng import derive_key, uniforms

Objective = Callable[[tuple[float, ...]], float]
Constraints = Callable[[tuple[float, ...]], Sequence[float]]


@dataclass(frozen=True)
class Problem:
    """An analytically defined blackbox: objective, relaxable constraints,
    box domain, and one or more starting points inside the domain."""

    name: str
    n: int
    m: int
    objective: Objective
    constraints: Constraints | None
    bounds: tuple[tuple[float, float], ...] | None
    starts: tuple[DesignPoint, ...]
    f_star: float | None = None
    description: str = ""
    source_text: str | None = None  # original definition text for file problems

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.m < 0:
            raise ValueError("m must be nonnegative")
        if self.m > 0 and self.constraints is None:
            raise ValueError("constrained problem needs a constraints callable")
        if self.bounds is not None:
            if len(self.bounds) != self.n:
                raise ValueError("bounds must give one (lo, hi) pair per coordinate")
            for lo, hi in self.bounds:
                if not (lo < hi):
                    raise ValueError(f"empty bound interval ({lo}, {hi})")
        if not self.starts:
            raise ValueError("at least one starting point is required")
        for x0 in self.starts:
            if x0.n != self.n:
                raise ValueError("starting point dimension mismatch")
            if not self.in_domain(x0):
                raise ValueError(f"starting point {x0!r} lies outside the domain")

    def in_domain(self, x: DesignPoint) -> bool:
        if self.bounds is None:
            return True
        for c, (lo, hi) in zip(x.coords, self.bounds):
            if c < lo or c > hi:
                return False
        return True

    def raw_constraints(self, coords: tuple[float, ...]) -> tuple[float, ...]:
        if self.constraints is None:
            return ()
        values = tuple(float(v) for v in self.constraints(coords))
        if len(values) != self.m:
            raise ValueError(f"expected {self.m} constraint values, got {len(values)}")
        return values


@dataclass(frozen=True)
class TrueEval:
    f: float
    c: tuple[float, ...]
    h: float


def true_eval(problem: Problem, x: DesignPoint) -> TrueEval:
    """Noiseless evaluation. Outside the domain h is +inf but f is still
    reported, so truth-side bookkeeping is total."""
    coords = x.coords
    f = float(problem.objective(coords))
    c = problem.raw_constraints(coords)
    return TrueEval(f=f, c=c, h=violation(c, problem.in_domain(x)))


@dataclass(frozen=True)
class NoiseSpec:
    """Additive uniform noise, one independent channel per output.

    half_widths[0] belongs to the objective, half_widths[1:] to the
    constraints. The widths are frozen once per run from that run's own
    starting point.
    """

    sigma: float
    half_widths: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        for w in self.half_widths:
            if w < 0 or not math.isfinite(w):
                raise ValueError("noise half-widths must be finite and nonnegative")

    @classmethod
    def exact(cls, m: int) -> "NoiseSpec":
        return cls(0.0, (0.0,) * (m + 1))

    @classmethod
    def from_problem(cls, problem: Problem, x0: DesignPoint, sigma: float) -> "NoiseSpec":
        """Scale each channel from the magnitudes seen at the starting point:
        sigma*|f(x0) - f_star| for the objective, sigma*|c_j(x0)| per
        constraint."""
        if sigma == 0:
            return cls.exact(problem.m)
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if problem.f_star is None:
            raise ValueError(
                f"problem {problem.name!r} has no reference optimum; "
                "cannot scale objective noise"
            )
        base = true_eval(problem, x0)
        w0 = sigma * abs(base.f - problem.f_star)
        widths = (w0,) + tuple(sigma * abs(cj) for cj in base.c)
        return cls(sigma, widths)

    @property
    def active(self) -> bool:
        return any(w != 0.0 for w in self.half_widths)

    def variance_bound(self, channel: int) -> float:
        """Exact variance of the uniform channel noise: w^2 / 3."""
        w = self.half_widths[channel]
        return w * w / 3.0


class SampleCache:
    """Running sums of every noisy sample ever drawn, keyed by coordinate bits.

    Summation is in fixed insertion order, so a replay that draws the same
    samples reproduces the same means to the last bit.
    """

    def __init__(self, width: int):
        if width < 1:
            raise ValueError("cache width must be at least 1")
        self._width = width
        self._sums: dict[bytes, list[float]] = {}
        self._counts: dict[bytes, int] = {}
        self._last_upper: dict[bytes, float] = {}

    @property
    def width(self) -> int:
        return self._width

    def __len__(self) -> int:
        return len(self._counts)

    def count(self, x: DesignPoint) -> int:
        return self._counts.get(x.key, 0)

    def accumulate(self, x: DesignPoint, sample: Sequence[float]) -> None:
        row = [float(v) for v in sample]
        if len(row) != self._width:
            raise ValueError(f"expected {self._width} channels, got {len(row)}")
        key = x.key
        sums = self._sums.get(key)
        if sums is None:
            self._sums[key] = list(row)
            self._counts[key] = 1
            return
        for j, v in enumerate(row):
            sums[j] += v
        self._counts[key] += 1

    def extend(self, x: DesignPoint, block: np.ndarray) -> None:
        for row in np.asarray(block, dtype=float):
            self.accumulate(x, row)

    def means(self, x: DesignPoint) -> tuple[float, ...]:
        key = x.key
        count = self._counts.get(key)
        if not count:
            raise KeyError(f"no samples cached at {x!r}")
        sums = self._sums[key]
        return tuple(s / count for s in sums)

    def note_upper(self, x: DesignPoint, upper: float) -> None:
        self._last_upper[x.key] = upper

    def last_upper(self, x: DesignPoint) -> float | None:
        return self._last_upper.get(x.key)


class NoisyOracle:
    """Budgeted noisy view of a problem with replayable sample streams.

    Each call costs one unit of budget per sample. Draws are keyed by
    (seed, first-touch point index, channel, per-point draw index), so a
    point's stream continues where it left off no matter what happened at
    other points in between.
    """

    def __init__(self, problem: Problem, noise: NoiseSpec, seed: int, budget: int):
        if len(noise.half_widths) != problem.m + 1:
            raise ValueError("noise spec width does not match the problem")
        if budget < 1:
            raise ValueError("budget must be positive")
        self.problem = problem
        self.noise = noise
        self.seed = int(seed)
        self.budget = int(budget)
        self.calls = 0
        self._indices: dict[bytes, int] = {}
        self._draws: dict[bytes, int] = {}

    @property
    def remaining(self) -> int:
        return self.budget - self.calls

    def point_index(self, x: DesignPoint) -> int:
        key = x.key
        idx = self._indices.get(key)
        if idx is None:
            idx = len(self._indices)
            self._indices[key] = idx
        return idx

    def sample(self, x: DesignPoint, count: int = 1) -> np.ndarray:
        """`count` noisy evaluations at x as a (count, m+1) array."""
        if count < 1:
            raise ValueError("count must be positive")
        if count > self.remaining:
            raise RuntimeError("evaluation budget exhausted")
        if not self.problem.in_domain(x):
            raise ValueError(f"{x!r} lies outside the problem domain")
        coords = x.coords
        f = float(self.problem.objective(coords))
        c = self.problem.raw_constraints(coords)
        out = np.empty((count, self.problem.m + 1))
        out[:, 0] = f
        for j, cj in enumerate(c):
            out[:, j + 1] = cj
        idx = self.point_index(x)
        start = self._draws.get(x.key, 0)
        for j, w in enumerate(self.noise.half_widths):
            if w != 0.0:
                u = uniforms(derive_key(self.seed, idx, j), start, count)
                out[:, j] += w * (2.0 * u - 1.0)
        self._draws[x.key] = start + count
        self.calls += count
        return out


def noisy_eval(problem: Problem, noise: NoiseSpec, x: DesignPoint, oracle: NoisyOracle) -> tuple[float, ...]:
    """One noisy sample (f, c_1..c_m) through the given oracle stream."""
    if oracle.problem is not problem or oracle.noise is not noise:
        raise ValueError("oracle was built for a different problem or noise spec")
    return tuple(float(v) for v in oracle.sample(x, 1)[0])
