"""Poll set construction: orthogonal direction bases snapped to the mesh.

Directions come from a Householder reflector built on a seeded unit vector.
Normalizing each column to unit max-norm before snapping guarantees the
snapped steps stay within the frame while their size, measured in frame
units, never falls below one mesh cell of the coarsest scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .core import DesignPoint, MeshState
from .rng import derive_key, unit_vector

# The mesh basis is [I, -I]: every integer vector is a valid step, and the
# largest column max-norm of the basis is 1.
BASIS_NORM = 1


def householder_directions(v: Sequence[float]) -> list[tuple[float, ...]]:
    """Columns of H = I - 2 v v^T followed by their negatives (2n directions).

    For unit v the columns form an orthonormal basis, so together with their
    negatives they positively span R^n.
    """
    n = len(v)
    norm_sq = 0.0
    for x in v:
        norm_sq += float(x) * float(x)
    if abs(norm_sq - 1.0) > 1e-9:
        raise ValueError("householder seed vector must have unit 2-norm")
    cols = []
    for j in range(n):
        vj = float(v[j])
        col = tuple((1.0 if i == j else 0.0) - 2.0 * float(v[i]) * vj for i in range(n))
        cols.append(col)
    cols.extend(tuple(-x for x in col) for col in cols[:n])
    return cols


def _round_half_away(x: float) -> int:
    if x >= 0.0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


def _round_away(x: float) -> int:
    if x >= 0.0:
        return int(math.ceil(x))
    return int(math.floor(x))


def snap_to_mesh(
    real_dir: Sequence[float], delta_p: Fraction, delta_m: Fraction
) -> tuple[int, ...]:
    """Integer mesh step approximating real_dir scaled to the frame.

    Components round half away from zero except the largest-magnitude one,
    which rounds away from zero so the result is never the zero vector. Any
    component that would overshoot the frame bound is clamped back to it.
    """
    values = [float(x) for x in real_dir]
    if not values or all(x == 0.0 for x in values):
        raise ValueError("cannot snap a zero direction")
    ratio = Fraction(delta_p) / Fraction(delta_m)
    scale = float(ratio)
    scaled = [x * scale for x in values]
    lead = 0
    for i, s in enumerate(scaled):
        if abs(s) > abs(scaled[lead]):
            lead = i
    limit = int(ratio * BASIS_NORM)  # floor; ratio >= 1 keeps this positive
    out = []
    for i, s in enumerate(scaled):
        d = _round_away(s) if i == lead else _round_half_away(s)
        if abs(d) > ratio * BASIS_NORM:
            d = limit if d > 0 else -limit
        out.append(d)
    return tuple(out)


def max_norm_scaled(direction: Sequence[float]) -> tuple[float, ...]:
    """Direction rescaled to unit max-norm (largest component exactly +-1)."""
    biggest = 0.0
    for x in direction:
        a = abs(float(x))
        if a > biggest:
            biggest = a
    if biggest == 0.0:
        raise ValueError("cannot normalize a zero direction")
    return tuple(float(x) / biggest for x in direction)


def mesh_step(center: DesignPoint, direction: tuple[int, ...], delta_m: Fraction) -> DesignPoint:
    step = float(delta_m)
    return DesignPoint(tuple(c + step * d for c, d in zip(center.coords, direction)))


def on_mesh(center: DesignPoint, point: DesignPoint, delta_m: Fraction) -> bool:
    """Exact lattice membership check in rational arithmetic."""
    for a, b in zip(center.coords, point.coords):
        q = (Fraction(b) - Fraction(a)) / delta_m
        if q.denominator != 1:
            return False
    return True


@dataclass(frozen=True)
class PollCandidate:
    center: DesignPoint
    direction: tuple[int, ...]
    point: DesignPoint
    from_infeasible_frame: bool


def _frame_candidates(
    center: DesignPoint,
    is_inf: bool,
    directions: Sequence[tuple[float, ...]],
    mesh: MeshState,
    in_domain: Callable[[DesignPoint], bool],
) -> list[PollCandidate]:
    delta_m = mesh.delta_m
    seen: set[tuple[int, ...]] = set()
    out = []
    for real in directions:
        d = snap_to_mesh(max_norm_scaled(real), mesh.delta_p, delta_m)
        if d in seen:
            continue
        seen.add(d)
        point = mesh_step(center, d, delta_m)
        if not in_domain(point):
            continue
        out.append(PollCandidate(center, d, point, is_inf))
    return out


def build_poll_set(
    primary: tuple[DesignPoint, bool],
    secondary: tuple[DesignPoint, bool] | None,
    mesh: MeshState,
    in_domain: Callable[[DesignPoint], bool],
    direction_key: int,
    last_upper: Callable[[DesignPoint], float | None] = lambda _: None,
    full_secondary: bool = False,
) -> list[PollCandidate]:
    """Trial points around the frame centers, in opportunistic scan order.

    The primary center gets a full 2n orthogonal frame; the secondary (when
    present) gets a single direction and its negative from an independently
    keyed reflector, unless full_secondary asks for a complete frame there
    too. Points outside the domain are dropped before any evaluation.
    Ordering: candidates whose point already has a cached violation upper
    bound come first, most promising (smallest bound) leading; the rest keep
    generation order.
    """
    center_p, inf_p = primary
    n = center_p.n
    v = unit_vector(derive_key(direction_key, 0), n)
    candidates = _frame_candidates(center_p, inf_p, householder_directions(v), mesh, in_domain)
    if secondary is not None:
        center_s, inf_s = secondary
        v2 = unit_vector(derive_key(direction_key, 1), n)
        dirs2 = householder_directions(v2)
        if not full_secondary:
            dirs2 = [dirs2[0], dirs2[n]]
        candidates.extend(_frame_candidates(center_s, inf_s, dirs2, mesh, in_domain))

    def sort_key(pair):
        idx, cand = pair
        cached = last_upper(cand.point)
        return (cached if cached is not None else math.inf, idx)

    return [cand for _, cand in sorted(enumerate(candidates), key=sort_key)]


def positively_spans(directions: Sequence[Sequence[float]], n: int) -> bool:
    """Algebraic positive-spanning test for sets closed under negation.

    Such a set positively spans R^n exactly when it linearly spans R^n:
    any combination can flip signs onto the negated partners.
    """
    rows = [tuple(float(x) for x in d) for d in directions]
    for d in rows:
        if tuple(-x for x in d) not in rows:
            raise ValueError("direction set is not closed under negation")
    # Gaussian elimination rank over floats with partial pivoting.
    mat = [list(r) for r in rows]
    rank = 0
    for col in range(n):
        pivot = None
        best = 1e-12
        for r in range(rank, len(mat)):
            if abs(mat[r][col]) > best:
                best = abs(mat[r][col])
                pivot = r
        if pivot is None:
            continue
        mat[rank], mat[pivot] = mat[pivot], mat[rank]
        prow = mat[rank]
        for r in range(rank + 1, len(mat)):
            factor = mat[r][col] / prow[col]
            if factor != 0.0:
                for c2 in range(col, n):
                    mat[r][c2] -= factor * prow[c2]
        rank += 1
        if rank == n:
            return True
    return rank == n
