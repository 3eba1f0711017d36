"""Prices and per-unit profit maximization.

Two price rules are provided for a solved instance:

* convex_hull_price: the price vector maximizing the Lagrangian dual of the
  dispatch problem.  On a single-period horizon the dual is piecewise linear
  in the price and the exact maximizer is found by scanning its breakpoints;
  on longer horizons a projected subgradient ascent with diminishing steps
  returns the best iterate found.
* marginal_price: the per-period dual price of the dispatch LP with the
  optimal commitment fixed (merit-order marginal cost rule).

Per-unit profit maximization under a fixed price has a closed form: for each
feasible status vector the optimal output sits at a box corner per period,
so the maximum is a finite scan over status vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import PreconditionError, ValidationError
from .model import (
    DEFAULT_TOLERANCES,
    Formulation,
    MarketInstance,
    Schedule,
    ToleranceConfig,
    UnitParams,
    UnitSchedule,
    cost,
    feasible_set_samples,
    feasible_status_vectors,
    startup_flags,
    status_vector_feasible,
    validate_schedule,
)

SUBGRADIENT_MAX_ITERS = 10_000
SUBGRADIENT_PATIENCE = 100
SUBGRADIENT_STEP = 1.0


def as_price(p, periods: int) -> tuple[float, ...]:
    """Normalize a scalar or sequence price to a per-period tuple."""
    if isinstance(p, (int, float)):
        return (float(p),) * periods
    p = tuple(float(v) for v in p)
    if len(p) != periods:
        raise ValidationError(f"price vector has {len(p)} entries for {periods} periods")
    return p


def standard_profit(unit: UnitParams, p: Sequence[float], sched: UnitSchedule) -> float:
    """Revenue at price p minus the unit's cost, for one schedule."""
    p = as_price(p, sched.periods)
    revenue = sum(pt * gt for pt, gt in zip(p, sched.g))
    return revenue - cost(unit, sched)


def _best_outputs_for_status(
    unit: UnitParams, p: Sequence[float], u: Sequence[int]
) -> tuple[float, ...]:
    """Profit-maximizing outputs for a fixed status vector: g_max whenever the
    price covers marginal cost (ties go to g_max), else g_min."""
    return tuple(
        (unit.g_max if pt >= unit.marginal_cost else unit.g_min) if u_t == 1 else 0.0
        for pt, u_t in zip(p, u)
    )


def profit_given_status(unit: UnitParams, p, u: Sequence[int]) -> float:
    """Maximum standard profit achievable with the status vector fixed."""
    p = as_price(p, len(u))
    if not status_vector_feasible(unit, u):
        raise ValidationError(f"unit {unit.id}: status vector {tuple(u)} is infeasible")
    g = _best_outputs_for_status(unit, p, u)
    margin = sum((pt - unit.marginal_cost) * gt for pt, gt in zip(p, g))
    starts = sum(startup_flags(unit, tuple(int(v) for v in u)))
    return margin - unit.startup_cost * starts


@dataclass(frozen=True)
class ProfitMax:
    """Result of maximizing one unit's standard profit over its feasible set."""

    value: float
    argmax_points: tuple[UnitSchedule, ...]
    per_status: Mapping[tuple[int, ...], tuple[float, tuple[float, ...]]]


def unit_profit_max(
    unit: UnitParams,
    p,
    periods: int | None = None,
    tol: ToleranceConfig = DEFAULT_TOLERANCES,
) -> ProfitMax:
    """Closed-form profit maximization over all feasible status vectors.

    The all-off vector is always feasible, so the value is never negative.
    argmax_points lists the corner schedules whose profit is within opt_tol
    of the maximum.
    """
    if periods is None:
        periods = len(p) if not isinstance(p, (int, float)) else 1
    p = as_price(p, periods)
    per_status: dict[tuple[int, ...], tuple[float, tuple[float, ...]]] = {}
    best = None
    for u in feasible_status_vectors(unit, periods):
        g = _best_outputs_for_status(unit, p, u)
        margin = sum((pt - unit.marginal_cost) * gt for pt, gt in zip(p, g))
        value = margin - unit.startup_cost * sum(startup_flags(unit, u))
        per_status[u] = (value, g)
        if best is None or value > best:
            best = value
    argmax = tuple(
        UnitSchedule(u, g)
        for u, (value, g) in per_status.items()
        if value >= best - tol.opt_tol
    )
    return ProfitMax(value=best, argmax_points=argmax, per_status=per_status)


def verification_lattice(
    unit: UnitParams,
    p,
    formulation: Formulation = Formulation.STATUS_OUTPUT,
    anchors: Iterable[UnitSchedule] = (),
    periods: int | None = None,
    tol: ToleranceConfig = DEFAULT_TOLERANCES,
) -> tuple[UnitSchedule, ...]:
    """Feasible-set samples anchored at the profit argmax points (and any
    caller-supplied anchors such as the dispatched schedule)."""
    anchors = tuple(anchors)
    if periods is None:
        periods = anchors[0].periods if anchors else (len(p) if not isinstance(p, (int, float)) else 1)
    pm = unit_profit_max(unit, p, periods, tol)
    return feasible_set_samples(
        unit,
        formulation,
        anchors=anchors + pm.argmax_points,
        periods=periods,
        eq_tol=tol.eq_tol,
    )


def dual_function(instance: MarketInstance, q) -> float:
    """Lagrangian dual of the dispatch problem at price vector q."""
    q = as_price(q, instance.periods)
    revenue = sum(qt * dt for qt, dt in zip(q, instance.demand))
    return revenue - sum(
        unit_profit_max(u, q, instance.periods, instance.tolerances).value
        for u in instance.units
    )


@dataclass(frozen=True)
class PriceResult:
    price: tuple[float, ...]
    dual_value: float
    method: str
    converged: bool
    iterations: int = 0


def _hull_price_single_period(instance: MarketInstance) -> PriceResult:
    # The dual is concave piecewise linear in the scalar price; its kinks lie
    # where some unit's best response changes, i.e. at marginal cost or at
    # the average cost of running flat out from cold.  Ties resolve to the
    # smallest maximizing price.
    candidates = {0.0}
    for u in instance.units:
        candidates.add(u.marginal_cost)
        if u.g_max > 0:
            candidates.add(u.marginal_cost + u.startup_cost / u.g_max)
    best_q, best_val = None, None
    for q in sorted(candidates):
        val = dual_function(instance, (q,))
        if best_val is None or val > best_val:
            best_q, best_val = q, val
    return PriceResult(
        price=(best_q,), dual_value=best_val, method="breakpoint-scan", converged=True
    )


def _hull_price_subgradient(instance: MarketInstance) -> PriceResult:
    tol = instance.tolerances
    T = instance.periods
    q = [0.0] * T
    best_q, best_val = tuple(q), dual_function(instance, q)
    last_improvement = 0
    k = 0
    for k in range(1, SUBGRADIENT_MAX_ITERS + 1):
        # supergradient of the dual: demand minus the aggregate best response
        total = [0.0] * T
        for unit in instance.units:
            pm = unit_profit_max(unit, q, T, tol)
            g = pm.argmax_points[0].g
            for t in range(T):
                total[t] += g[t]
        step = SUBGRADIENT_STEP / k
        q = [max(0.0, qt + step * (dt - gt)) for qt, dt, gt in zip(q, instance.demand, total)]
        val = dual_function(instance, q)
        if val > best_val + tol.opt_tol:
            best_q, best_val, last_improvement = tuple(q), val, k
        elif val > best_val:
            best_q, best_val = tuple(q), val
        if k - last_improvement >= SUBGRADIENT_PATIENCE:
            return PriceResult(best_q, best_val, "subgradient", True, k)
    return PriceResult(best_q, best_val, "subgradient", False, k)


def convex_hull_price(instance: MarketInstance) -> PriceResult:
    """Price vector maximizing the Lagrangian dual.

    Exact on a single-period horizon; on longer horizons the result carries
    converged=False when the subgradient ascent hit its iteration budget
    without settling.
    """
    if instance.periods == 1:
        return _hull_price_single_period(instance)
    return _hull_price_subgradient(instance)


def marginal_price(instance: MarketInstance, x_star: Schedule) -> tuple[float, ...]:
    """Per-period marginal cost of the price-setting unit under the dispatched
    commitment: the most expensive unit dispatched strictly above its minimum;
    if every online unit sits at a bound, the cheapest online unit; 0 with
    nothing online."""
    validate_schedule(instance, x_star)
    eq_tol = instance.tolerances.eq_tol
    prices = []
    for t in range(instance.periods):
        online = [
            unit for unit in instance.units if x_star.unit(unit.id).u[t] == 1
        ]
        if not online:
            prices.append(0.0)
            continue
        above_min = [
            unit for unit in online
            if x_star.unit(unit.id).g[t] > unit.g_min + eq_tol
        ]
        if above_min:
            prices.append(max(u.marginal_cost for u in above_min))
        else:
            prices.append(min(u.marginal_cost for u in online))
    return tuple(prices)


def price_for_method(instance: MarketInstance, method: str, x_star: Schedule | None = None):
    """Dispatch helper shared by the CLI and the amendment pipeline."""
    if method == "chp":
        return convex_hull_price(instance).price
    if method == "marginal":
        if x_star is None:
            raise PreconditionError("marginal pricing needs the dispatched schedule")
        return marginal_price(instance, x_star)
    raise ValidationError(f"unknown price method {method!r}")
