"""Sample-mean estimates with reliability bounds on the aggregate violation.

An estimate is built from the pooled mean of all samples ever drawn at a
point. The lower/upper violation bounds move each constraint estimate by
epsilon * delta_p**2 before taking positive parts; whenever every per-channel
estimate is accurate to that margin, the true violation is sandwiched between
them, and `upper == 0` certifies feasibility at the current accuracy level.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

from .blackbox import NoisyOracle, SampleCache
from .core import DesignPoint

_SATURATED = 2**63 - 1

SampleSink = Callable[[DesignPoint, "object"], None]


@dataclass(frozen=True)
class EstimateBundle:
    """Everything the solver needs to reason about one point this iteration."""

    point: DesignPoint
    f_hat: float
    c_hat: tuple[float, ...]
    h_hat: float
    lower: float
    upper: float
    p: int
    delta_p: float

    @property
    def feasible(self) -> bool:
        """Feasible at the current accuracy level: the upper bound vanishes."""
        return self.upper == 0.0


def bundle_from_means(
    point: DesignPoint,
    means: Sequence[float],
    p: int,
    delta_p: float,
    epsilon: float,
) -> EstimateBundle:
    if p < 1:
        raise ValueError("an estimate needs at least one sample")
    pad = epsilon * delta_p * delta_p
    f_hat = float(means[0])
    c_hat = tuple(float(v) for v in means[1:])
    h_hat = 0.0
    lower = 0.0
    upper = 0.0
    for c in c_hat:
        if c > 0.0:
            h_hat += c
        low = c - pad
        if low > 0.0:
            lower += low
        high = c + pad
        if high > 0.0:
            upper += high
    return EstimateBundle(
        point=point,
        f_hat=f_hat,
        c_hat=c_hat,
        h_hat=h_hat,
        lower=lower,
        upper=upper,
        p=p,
        delta_p=delta_p,
    )


def estimate(
    cache: SampleCache,
    oracle: NoisyOracle,
    x: DesignPoint,
    delta_p: float,
    n_k: int,
    epsilon: float,
    sink: SampleSink | None = None,
) -> EstimateBundle | None:
    """Draw n_k fresh samples at x, pool with the cache, return the bundle.

    Returns None (without evaluating) when fewer than n_k calls remain in the
    budget — the caller treats that as the stop signal.
    """
    if n_k < 1:
        raise ValueError("n_k must be at least 1")
    if oracle.remaining < n_k:
        return None
    block = oracle.sample(x, n_k)
    cache.extend(x, block)
    if sink is not None:
        sink(x, block)
    bundle = bundle_from_means(x, cache.means(x), cache.count(x), delta_p, epsilon)
    cache.note_upper(x, bundle.upper)
    return bundle


def estimate_once(
    cache: SampleCache,
    oracle: NoisyOracle,
    x: DesignPoint,
    delta_p: float,
    epsilon: float,
    sink: SampleSink | None = None,
) -> EstimateBundle | None:
    """Single-evaluation scheme: each point costs exactly one call, ever.

    Revisits rebuild the bounds at the current frame size from the cached
    value without touching the budget.
    """
    if cache.count(x) == 0:
        if oracle.remaining < 1:
            return None
        block = oracle.sample(x, 1)
        cache.extend(x, block)
        if sink is not None:
            sink(x, block)
    bundle = bundle_from_means(x, cache.means(x), cache.count(x), delta_p, epsilon)
    cache.note_upper(x, bundle.upper)
    return bundle


def _required(v: float, denom: float, what: str) -> int:
    if v < 0:
        raise ValueError("variance bound must be nonnegative")
    if v == 0:
        return 1
    if denom <= 0 or not math.isfinite(denom):
        warnings.warn(
            f"required sample size for {what} overflows; saturating at {_SATURATED}",
            RuntimeWarning,
            stacklevel=3,
        )
        return _SATURATED
    raw = v / denom
    if not math.isfinite(raw) or raw >= _SATURATED:
        warnings.warn(
            f"required sample size for {what} overflows; saturating at {_SATURATED}",
            RuntimeWarning,
            stacklevel=3,
        )
        return _SATURATED
    return max(1, math.ceil(raw))


def required_samples_constraint(
    v: float, epsilon: float, alpha: float, m: int, delta_p: float
) -> int:
    """Chebyshev sample count making each of m constraint estimates accurate
    to epsilon*delta_p**2 with probability at least alpha**(1/(2m))."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie strictly between 0 and 1")
    if m < 1:
        raise ValueError("m must be at least 1")
    if epsilon <= 0 or delta_p <= 0:
        raise ValueError("epsilon and delta_p must be positive")
    denom = epsilon * epsilon * (1.0 - alpha ** (1.0 / (2.0 * m))) * delta_p**4
    return _required(v, denom, "constraint estimates")


def required_samples_objective(v: float, epsilon: float, beta: float, delta_p: float) -> int:
    """Chebyshev sample count for the objective estimate at accuracy
    epsilon*delta_p**2 with probability at least sqrt(beta)."""
    if not (0 <= beta < 1):
        raise ValueError("beta must lie in [0, 1)")
    if epsilon <= 0 or delta_p <= 0:
        raise ValueError("epsilon and delta_p must be positive")
    denom = epsilon * epsilon * (1.0 - math.sqrt(beta)) * delta_p**4
    return _required(v, denom, "objective estimates")
