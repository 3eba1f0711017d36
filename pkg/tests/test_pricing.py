"""Prices and profits: hull price goldens, scan oracle, marginal rule,
profit maxima, dual function."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from uplift_zero import (
    MarketInstance,
    PreconditionError,
    UnitParams,
    UnitSchedule,
    convex_hull_price,
    dual_function,
    marginal_price,
    price_for_method,
    solve_centralized,
    standard_profit,
    unit_profit_max,
)

from _oracles import chp_scan, dual_value_oracle, unit_profit_max_oracle
from conftest import random_instance, random_price, random_unit


class TestStandardProfit:
    def test_hand_values(self):
        u = UnitParams(id="x", g_min=2.0, g_max=6.0, marginal_cost=7.0, startup_cost=0.0)
        assert standard_profit(u, (6.2857,), UnitSchedule((1,), (3.0,))) == pytest.approx(
            (6.2857 - 7.0) * 3.0
        )
        assert standard_profit(u, (6.2857,), UnitSchedule((0,), (0.0,))) == 0.0

    def test_startup_cost_subtracted_once(self):
        u = UnitParams(id="x", g_min=0.0, g_max=7.0, marginal_cost=2.0, startup_cost=30.0)
        s = UnitSchedule((1, 1), (7.0, 7.0))
        assert standard_profit(u, (5.0, 5.0), s) == pytest.approx(3.0 * 14 - 30.0)

    def test_scalar_price_broadcasts(self):
        u = UnitParams(id="x", g_min=0.0, g_max=7.0, marginal_cost=2.0, startup_cost=0.0)
        s = UnitSchedule((1, 1), (7.0, 7.0))
        assert standard_profit(u, 5.0, s) == standard_profit(u, (5.0, 5.0), s)


class TestProfitMax:
    def test_closed_form_single_period(self):
        u = UnitParams(id="x", g_min=0.0, g_max=7.0, marginal_cost=2.0, startup_cost=30.0)
        # below threshold 2 + 30/7: off is best
        assert unit_profit_max(u, (6.0,), 1).value == pytest.approx(0.0)
        # above threshold: run at capacity
        assert unit_profit_max(u, (7.0,), 1).value == pytest.approx(5.0 * 7 - 30)

    def test_argmax_points_reported(self):
        u = UnitParams(id="x", g_min=2.0, g_max=6.0, marginal_cost=7.0, startup_cost=0.0)
        pm = unit_profit_max(u, (7.0,), 1)
        assert pm.value == pytest.approx(0.0)
        # every online point earns zero margin, so off and online extremes tie
        assert UnitSchedule((0,), (0.0,)) in pm.argmax_points

    def test_against_grid_oracle(self):
        rng = random.Random(11)
        for _ in range(25):
            periods = rng.choice((1, 2))
            u = random_unit(rng, "R", periods=periods)
            p = random_price(rng, periods)
            got = unit_profit_max(u, p, periods).value
            want = unit_profit_max_oracle(u, p, periods)
            assert got == pytest.approx(want, abs=1e-8)


class TestHullPriceGoldens:
    def test_demand_10(self, scarf10):
        assert scarf10.price[0] == pytest.approx(44.0 / 7.0, abs=1e-9)
        assert scarf10.dual == pytest.approx(440.0 / 7.0, abs=1e-9)

    def test_demand_40(self, scarf40):
        assert scarf40.price[0] == pytest.approx(6.3125, abs=1e-12)
        assert scarf40.dual == pytest.approx(251.5625, abs=1e-9)

    def test_exact_breakpoint_method_reported(self, scarf10):
        pr = convex_hull_price(scarf10.instance)
        assert pr.method == "breakpoint-scan"
        assert pr.converged


class TestHullPriceOracle:
    def test_scan_agreement_random(self):
        rng = random.Random(21)
        for _ in range(10):
            inst = random_instance(rng, max_units=4, periods=1)
            pr = convex_hull_price(inst)
            q_scan, v_scan = chp_scan(inst, step=1e-3)
            # the exact breakpoint beats any grid point and sits within one
            # grid step of the best one
            assert dual_value_oracle(inst, pr.price[0]) >= v_scan - 1e-9
            assert abs(pr.price[0] - q_scan) <= 1e-3 + 1e-9

    def test_dual_value_matches_oracle(self):
        rng = random.Random(22)
        for _ in range(10):
            inst = random_instance(rng, max_units=5, periods=1)
            pr = convex_hull_price(inst)
            assert pr.dual_value == pytest.approx(
                dual_value_oracle(inst, pr.price[0]), abs=1e-8
            )


class TestSubgradient:
    def test_two_period_dual_never_beats_primal(self):
        rng = random.Random(31)
        for _ in range(6):
            inst = random_instance(rng, max_units=3, periods=2)
            result = solve_centralized(inst)
            pr = convex_hull_price(inst)
            assert pr.method == "subgradient"
            assert pr.dual_value <= result.total_cost + 1e-6
            assert all(q >= 0 for q in pr.price)

    def test_convex_instance_closes_the_gap(self):
        # no startup costs and zero minimums: dual equals primal
        units = (
            UnitParams(id="a", g_min=0.0, g_max=6.0, marginal_cost=2.0, startup_cost=0.0),
            UnitParams(id="b", g_min=0.0, g_max=6.0, marginal_cost=5.0, startup_cost=0.0),
        )
        inst = MarketInstance(periods=2, demand=(8.0, 3.0), units=units)
        result = solve_centralized(inst)
        pr = convex_hull_price(inst)
        # subgradient steps shrink harmonically, so expect modest accuracy
        assert pr.dual_value == pytest.approx(result.total_cost, rel=1e-3)

    def test_single_period_uses_exact_path(self, scarf10):
        pr = convex_hull_price(scarf10.instance)
        assert pr.iterations == 0


class TestMarginalPrice:
    def test_strictly_above_minimum_sets_price(self, scarf10):
        p = marginal_price(scarf10.instance, scarf10.result.schedule)
        assert p == (7.0,)

    def test_all_at_minimum_uses_cheapest_online(self):
        # tight capacity windows force both units to their minimum
        a = UnitParams(id="a", g_min=4.0, g_max=4.5, marginal_cost=3.0, startup_cost=0.0)
        b = UnitParams(id="b", g_min=2.0, g_max=2.5, marginal_cost=9.0, startup_cost=0.0)
        inst = MarketInstance(periods=1, demand=(6.0,), units=(a, b))
        result = solve_centralized(inst)
        assert result.schedule.unit("a").g == (4.0,)
        assert result.schedule.unit("b").g == (2.0,)
        assert marginal_price(inst, result.schedule) == (3.0,)

    def test_no_units_online_prices_zero(self):
        a = UnitParams(id="a", g_min=0.0, g_max=8.0, marginal_cost=3.0, startup_cost=1.0)
        inst = MarketInstance(periods=1, demand=(0.0,), units=(a,))
        result = solve_centralized(inst)
        assert marginal_price(inst, result.schedule) == (0.0,)

    def test_dispatched_point_is_status_optimal(self):
        # at the marginal price, dispatched outputs maximize profit for their
        # own status vector; the status families rely on this
        rng = random.Random(41)
        for _ in range(15):
            inst = random_instance(rng, max_units=5, periods=1)
            result = solve_centralized(inst)
            p = marginal_price(inst, result.schedule)
            from uplift_zero.pricing import profit_given_status

            for unit in inst.units:
                sched = result.schedule.unit(unit.id)
                star = standard_profit(unit, p, sched)
                by_status = profit_given_status(unit, p, sched.u)
                assert star == pytest.approx(by_status, abs=1e-7)


class TestPriceForMethod:
    def test_marginal_needs_schedule(self, scarf10):
        with pytest.raises(PreconditionError):
            price_for_method(scarf10.instance, "marginal")

    def test_unknown_method(self, scarf10):
        from uplift_zero import ValidationError

        with pytest.raises(ValidationError):
            price_for_method(scarf10.instance, "vcg")


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), offset=st.floats(-3, 3, allow_nan=False))
def test_hull_price_maximizes_dual(seed, offset):
    rng = random.Random(seed)
    inst = random_instance(rng, max_units=3, periods=1)
    pr = convex_hull_price(inst)
    q = max(0.0, pr.price[0] + offset)
    assert dual_function(inst, (q,)) <= pr.dual_value + 1e-7


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_weak_duality(seed):
    rng = random.Random(seed)
    inst = random_instance(rng, max_units=3, periods=1)
    f_star = solve_centralized(inst).total_cost
    q = random_price(rng, 1)
    assert dual_function(inst, q) <= f_star + 1e-7
