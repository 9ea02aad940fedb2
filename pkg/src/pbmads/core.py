"""Core value types shared by the solver, estimator, and benchmark layers."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable


class Mode(Enum):
    """Solver operating mode: sample-averaged estimates or single-shot values."""

    STOCHASTIC = "stochastic"
    DETERMINISTIC = "deterministic"


class OutcomeTag(Enum):
    F_DOMINATING = "f-dominating"
    H_DOMINATING = "h-dominating"
    IMPROVING = "improving"
    UNSUCCESSFUL = "unsuccessful"

    @property
    def success(self) -> bool:
        return self is not OutcomeTag.UNSUCCESSFUL


@dataclass(frozen=True, eq=False)
class DesignPoint:
    """Immutable point in R^n. Identity is the exact bit pattern of the
    coordinates, so cache lookups cannot be fooled by -0.0 or by values that
    merely print alike."""

    coords: tuple[float, ...]

    def __post_init__(self) -> None:
        coords = tuple(float(c) for c in self.coords)
        if not coords:
            raise ValueError("a design point needs at least one coordinate")
        for c in coords:
            if not math.isfinite(c):
                raise ValueError(f"non-finite coordinate in {coords!r}")
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def key(self) -> bytes:
        return struct.pack(f"<{len(self.coords)}d", *self.coords)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DesignPoint):
            return NotImplemented
        return self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        return f"DesignPoint({list(self.coords)!r})"


def violation(constraint_values: Iterable[float], in_domain: bool = True) -> float:
    """Aggregate constraint violation: sum of positive parts, +inf outside X.

    Zero exactly when every relaxable constraint is satisfied at a point of
    the non-relaxable domain X.
    """
    if not in_domain:
        return math.inf
    total = 0.0
    for c in constraint_values:
        c = float(c)
        if math.isnan(c):
            raise ValueError("constraint value is NaN")
        if c > 0.0:
            total += c
    return total


@dataclass(frozen=True)
class MeshState:
    """Frame/mesh sizes kept as exact rationals.

    delta_p is always delta0 times an integer power of tau (the growth cap is
    itself such a power), so every update is exactly reproducible and mesh
    membership is decidable in rational arithmetic.
    """

    delta_p: Fraction
    tau: Fraction
    z_hat: int

    def __post_init__(self) -> None:
        if not isinstance(self.delta_p, Fraction) or not isinstance(self.tau, Fraction):
            object.__setattr__(self, "delta_p", Fraction(self.delta_p))
            object.__setattr__(self, "tau", Fraction(self.tau))
        if not (0 < self.tau < 1):
            raise ValueError("tau must lie strictly between 0 and 1")
        if self.z_hat < 0:
            raise ValueError("z_hat must be nonnegative")
        if self.delta_p <= 0:
            raise ValueError("delta_p must be positive")
        if self.delta_p > self.cap:
            raise ValueError("delta_p exceeds the growth cap tau**(-z_hat)")

    @classmethod
    def initial(
        cls,
        delta0: Fraction | float = Fraction(1),
        tau: Fraction | float = Fraction(1, 2),
        z_hat: int = 50,
    ) -> "MeshState":
        return cls(Fraction(delta0), Fraction(tau), z_hat)

    @property
    def cap(self) -> Fraction:
        return self.tau ** (-self.z_hat)

    @property
    def delta_m(self) -> Fraction:
        """Mesh size min(delta_p, delta_p**2); never exceeds the frame size."""
        return min(self.delta_p, self.delta_p * self.delta_p)

    def expanded(self) -> "MeshState":
        """Frame update after a successful iteration (capped growth)."""
        return MeshState(min(self.delta_p / self.tau, self.cap), self.tau, self.z_hat)

    def contracted(self) -> "MeshState":
        """Frame update after an unsuccessful iteration."""
        return MeshState(self.delta_p * self.tau, self.tau, self.z_hat)


@dataclass(frozen=True)
class IterationOutcome:
    tag: OutcomeTag
    accepted: DesignPoint | None = None

    def __post_init__(self) -> None:
        has_point = self.accepted is not None
        if has_point != self.tag.success:
            raise ValueError("accepted point must be present exactly for successful outcomes")


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters. Defaults follow the standard benchmark protocol."""

    gamma: float = 17.0
    epsilon: float = 0.01
    tau: Fraction = Fraction(1, 2)
    delta0: Fraction = Fraction(1)
    z_hat: int = 50
    rho: float = 0.1
    n_k: int = 2
    mode: Mode = Mode.STOCHASTIC
    budget: int | None = None          # explicit cap on blackbox calls
    budget_multiplier: int = 1000      # default cap is multiplier * (n + 1)
    min_delta_p: float = 1e-9          # extra termination guard on the frame size
    estimate_inert_feasible: bool = False  # spend samples on the inert feasible seed
    full_secondary_frame: bool = False     # poll 2n directions at the secondary center

    def __post_init__(self) -> None:
        object.__setattr__(self, "tau", Fraction(self.tau))
        object.__setattr__(self, "delta0", Fraction(self.delta0))
        if self.gamma <= 2:
            raise ValueError("gamma must exceed 2")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not (0 < self.tau < 1):
            raise ValueError("tau must lie strictly between 0 and 1")
        if self.delta0 <= 0:
            raise ValueError("delta0 must be positive")
        if self.z_hat < 0:
            raise ValueError("z_hat must be nonnegative")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.n_k < 1:
            raise ValueError("n_k must be at least 1")
        if self.budget is not None and self.budget < 1:
            raise ValueError("budget must be positive when given")
        if self.budget_multiplier < 1:
            raise ValueError("budget_multiplier must be positive")

    def resolve_budget(self, n: int) -> int:
        return self.budget if self.budget is not None else self.budget_multiplier * (n + 1)

    def initial_mesh(self) -> MeshState:
        return MeshState.initial(self.delta0, self.tau, self.z_hat)
