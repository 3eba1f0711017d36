"""Centralized dispatch by exhaustive commitment enumeration.

The commitment space is enumerated with a symmetry reduction: units sharing
identical parameters are interchangeable, so per parameter group only the
multiset of status vectors matters.  Each candidate commitment is priced by
merit-order economic dispatch, which is exact for constant marginal costs.

Ties on total cost resolve deterministically: the commitment whose flattened
status matrix is lexicographically largest wins, which puts low-index units
online first; the merit-order output fill is itself deterministic (ties by
unit index).
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import EnumerationLimitError, InfeasibleError, ValidationError
from .expr import Expr
from .model import (
    DEFAULT_TOLERANCES,
    MarketInstance,
    Schedule,
    ToleranceConfig,
    UnitSchedule,
    cost,
    feasible_status_vectors,
    status_vector_feasible,
    validate_schedule,
)
from .pricing import as_price, standard_profit, verification_lattice
from .reporting import ConditionCheck, VerificationReport

PROFILE_LIMIT = 1_000_000
THREADS_ENV_VAR = "UPLIFT_ZERO_THREADS"


def worker_count() -> int:
    """Worker cap from the UPLIFT_ZERO_THREADS environment variable (>= 1)."""
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}")
    return max(1, n)


def economic_dispatch(
    instance: MarketInstance, commitment: Sequence[Sequence[int]]
) -> tuple[tuple[tuple[float, ...], ...], float] | None:
    """Merit-order dispatch under a fixed commitment.

    `commitment` holds one status vector per unit, aligned with
    instance.units.  Returns (outputs, total cost) with outputs[i][t] the
    unit-i output in period t, or None when some period's demand falls
    outside the committed [sum g_min, sum g_max] window.
    """
    if len(commitment) != len(instance.units):
        raise ValidationError("commitment must cover every unit")
    commitment = tuple(tuple(int(v) for v in u) for u in commitment)
    for unit, u in zip(instance.units, commitment):
        if len(u) != instance.periods:
            raise ValidationError(f"unit {unit.id}: commitment has wrong horizon")
        if not status_vector_feasible(unit, u):
            raise ValidationError(
                f"unit {unit.id}: status vector {u} violates min up/down times"
            )
    eq_tol = instance.tolerances.eq_tol
    n = len(instance.units)
    outputs = [[0.0] * instance.periods for _ in range(n)]
    total = 0.0
    for t in range(instance.periods):
        online = [i for i in range(n) if commitment[i][t] == 1]
        lo = sum(instance.units[i].g_min for i in online)
        hi = sum(instance.units[i].g_max for i in online)
        d = instance.demand[t]
        if d < lo - eq_tol or d > hi + eq_tol:
            return None
        for i in online:
            outputs[i][t] = instance.units[i].g_min
        remaining = d - lo
        for i in sorted(online, key=lambda i: (instance.units[i].marginal_cost, i)):
            if remaining <= 0:
                break
            take = min(remaining, instance.units[i].g_max - instance.units[i].g_min)
            outputs[i][t] += take
            remaining -= take
    for i, unit in enumerate(instance.units):
        starts = sum(
            int(u_t == 1 and prev == 0)
            for u_t, prev in zip(commitment[i], (unit.initial_status,) + commitment[i][:-1])
        )
        total += unit.startup_cost * starts
        total += unit.marginal_cost * sum(outputs[i])
    return tuple(tuple(row) for row in outputs), total


@dataclass(frozen=True)
class DispatchResult:
    schedule: Schedule
    total_cost: float
    profiles_enumerated: int


def _group_units(instance: MarketInstance) -> list[list[int]]:
    """Indices of interchangeable units, grouped by identical parameters."""
    groups: dict[tuple, list[int]] = {}
    for i, u in enumerate(instance.units):
        key = (u.g_min, u.g_max, u.marginal_cost, u.startup_cost,
               u.initial_status, u.min_up, u.min_down)
        groups.setdefault(key, []).append(i)
    return list(groups.values())


def solve_centralized(instance: MarketInstance) -> DispatchResult:
    """Globally optimal commitment and dispatch.

    Raises InfeasibleError when no feasible commitment covers demand and
    EnumerationLimitError when the symmetry-reduced profile count exceeds
    PROFILE_LIMIT.
    """
    groups = _group_units(instance)
    per_group_vectors = [
        feasible_status_vectors(instance.units[g[0]], instance.periods) for g in groups
    ]
    count = 1
    for g, vecs in zip(groups, per_group_vectors):
        count *= math.comb(len(vecs) + len(g) - 1, len(g))
    if count > PROFILE_LIMIT:
        raise EnumerationLimitError(
            f"{count} commitment profiles exceed the supported budget of {PROFILE_LIMIT}"
        )

    n = len(instance.units)

    def expand(assignment: tuple[tuple[tuple[int, ...], ...], ...]) -> tuple[tuple[int, ...], ...]:
        # within a group the "most-on" vectors go to the lowest unit indices
        commitment: list[tuple[int, ...] | None] = [None] * n
        for g, vectors in zip(groups, assignment):
            for idx, vec in zip(g, sorted(vectors, reverse=True)):
                commitment[idx] = vec
        return tuple(commitment)

    def evaluate(chunk) -> tuple:
        # best = (cost, tie_key, commitment, outputs); tie_key prefers 1s at
        # low flattened positions => lexicographically largest status matrix
        best = None
        for assignment in chunk:
            commitment = expand(assignment)
            dispatched = economic_dispatch(instance, commitment)
            if dispatched is None:
                continue
            outputs, total = dispatched
            tie_key = tuple(1 - b for row in commitment for b in row)
            cand = (total, tie_key, commitment, outputs)
            if best is None:
                best = cand
                continue
            tie_band = instance.tolerances.eq_tol * max(1.0, abs(best[0]))
            if total < best[0] - tie_band:
                best = cand
            elif total <= best[0] + tie_band and tie_key < best[1]:
                best = (min(total, best[0]), tie_key, commitment, outputs)
        return best

    assignments = itertools.product(
        *(
            itertools.combinations_with_replacement(vecs, len(g))
            for g, vecs in zip(groups, per_group_vectors)
        )
    )
    workers = worker_count()
    if workers == 1:
        best = evaluate(assignments)
    else:
        chunks: list[list] = [[] for _ in range(workers)]
        for j, a in enumerate(assignments):
            chunks[j % workers].append(a)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(evaluate, chunks))
        best = evaluate([])
        for part in partials:
            if part is None:
                continue
            if best is None:
                best = part
                continue
            tie_band = instance.tolerances.eq_tol * max(1.0, abs(best[0]))
            if part[0] < best[0] - tie_band or (
                part[0] <= best[0] + tie_band and part[1] < best[1]
            ):
                best = (min(part[0], best[0]), part[1], part[2], part[3])

    if best is None:
        raise InfeasibleError("no feasible commitment covers the demand profile")
    _, _, commitment, outputs = best
    schedule = Schedule(
        {
            unit.id: UnitSchedule(commitment[i], outputs[i])
            for i, unit in enumerate(instance.units)
        }
    )
    total = sum(
        cost(unit, schedule.unit(unit.id), instance.tolerances.eq_tol)
        for unit in instance.units
    )
    return DispatchResult(schedule=schedule, total_cost=total, profiles_enumerated=count)


def verify_price_equilibrium(
    instance: MarketInstance,
    amendments: Mapping[str, Expr],
    p,
    x_star: Schedule,
    tol: ToleranceConfig | None = None,
) -> VerificationReport:
    """Check that the amended market at price p supports the dispatch x_star.

    Two conditions, evaluated on each unit's verification lattice:
    every unit's dispatched schedule attains its amended profit maximum, and
    the amended dual value at p equals the amended system cost at x_star
    (strong duality).
    """
    tol = tol or instance.tolerances
    p = as_price(p, instance.periods)
    validate_schedule(instance, x_star)
    report = VerificationReport()
    dual = sum(pt * dt for pt, dt in zip(p, instance.demand))
    primal = 0.0
    for unit in instance.units:
        sched_star = x_star.unit(unit.id)
        amendment = amendments.get(unit.id)
        lattice = verification_lattice(
            unit, p, anchors=(sched_star,), periods=instance.periods, tol=tol
        )

        def amended(s: UnitSchedule) -> float:
            extra = amendment.evaluate(s, tol.eq_tol) if amendment is not None else 0.0
            return standard_profit(unit, p, s) + extra

        value_star = amended(sched_star)
        best_point = max(lattice, key=amended)
        best = amended(best_point)
        report.add(
            ConditionCheck(
                condition=f"amended-profit-max[{unit.id}]",
                passed=best <= value_star + tol.opt_tol,
                lhs=best,
                rhs=value_star,
                witness=None if best <= value_star + tol.opt_tol else best_point.to_json(),
            )
        )
        dual -= best
        primal += cost(unit, sched_star, tol.eq_tol)
        primal -= amendment.evaluate(sched_star, tol.eq_tol) if amendment is not None else 0.0
    report.add(
        ConditionCheck(
            condition="strong-duality",
            passed=abs(dual - primal) <= tol.opt_tol * len(instance.units),
            lhs=dual,
            rhs=primal,
        )
    )
    return report
