import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, stats

from conftest import make_models
from mtsched.errors import ConditionAError, ConditionAWarning, DomainError
from mtsched.models import MarketParams, OpportunisticModel, TraditionalDemandModel, q_o, q_o_inverse
from mtsched.nonpersistent import (DayAheadDecision, LowerState, ce_objective,
                                   certainty_equivalent_profit, check_condition_a, classify_event,
                                   dayahead_S_closed_form, dayahead_S_numeric, dayahead_S_star,
                                   dayahead_u_star, f1, f2, pricing_rule, profit_deficit_tail,
                                   profit_surplus_tail, realtime_price, realtime_price_oracle,
                                   realtime_profit_integrand, realtime_profit_realized,
                                   realtime_profit_reduced)


def market(**kw):
    base = dict(c1=1.0, c2=2.0, c_p=0.5, u_cap=5.0, v_cap=6.0, M=1, K=1)
    base.update(kw)
    return MarketParams(**base)


class TestEvents:
    @pytest.mark.parametrize("s,W,D_t,D_o,tag,eps", [
        (5, 10, 4, 3, "A", 8),
        (5, 2, 4, 4, "C", -1),
        (5, 2, 4, 2, "B", 1),
    ])
    def test_classify(self, s, W, D_t, D_o, tag, eps):
        ev = classify_event(s, LowerState(W, D_t), D_o)
        assert ev.tag == tag and ev.surplus == eps


class TestRealizedProfit:
    def test_deficit_event(self):
        p = market(c1=1.0, c2=2.0, K=1)
        val = realtime_profit_realized(p, DayAheadDecision(5.0, 1.0), LowerState(2.0, 4.0), 2.0, 4.0)
        assert val == pytest.approx(4 + 8 - 5 - 2)

    def test_wind_sufficient_event(self):
        p = market(c_p=0.5, K=1)
        val = realtime_profit_realized(p, DayAheadDecision(5.0, 1.0), LowerState(10.0, 4.0), 2.0, 3.0)
        assert val == pytest.approx(4 + 6 - 2.5)

    def test_zero_opportunistic_demand_ignores_price(self):
        p = market(K=1)
        vals = {realtime_profit_realized(p, DayAheadDecision(5.0, 1.0), LowerState(2.0, 4.0), v, 0.0)
                for v in (0.5, 1.0, 3.0, 6.0)}
        assert len(vals) == 1

    def test_price_above_cap(self):
        with pytest.raises(DomainError):
            realtime_profit_realized(market(), DayAheadDecision(5.0, 1.0), LowerState(2, 4), 7.0, 1.0)

    @given(S=st.floats(0, 100), u=st.floats(0.1, 5), W=st.floats(0, 50), D_t=st.floats(0, 100),
           D_o=st.floats(0, 100), v=st.floats(0.1, 6), c_p=st.floats(0, 1))
    def test_reduction_identity(self, S, u, W, D_t, D_o, v, c_p):
        p = market(c_p=c_p, K=1)
        state = LowerState(W, D_t)
        if W >= D_t + D_o:
            return
        dec = DayAheadDecision(S, u)
        a = realtime_profit_realized(p, dec, state, v, D_o)
        b = realtime_profit_integrand(p, dec, state, v, D_o)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-9)


class TestReducedProfit:
    def setup_method(self):
        self.p = market(K=1)
        self.opp = OpportunisticModel([50.0], 1.0, -2.0, 0.8, 1.0)
        self.dec = DayAheadDecision(36.0, 2.0)
        self.state = LowerState(2.0, 30.0)

    def test_matches_monte_carlo(self):
        v = 2.0
        mean, var = 8.0, 8.0
        assert q_o(self.opp, 0, v) == pytest.approx(mean)
        d_o = np.random.default_rng(11).normal(mean, math.sqrt(var), 200_000)
        sim = realtime_profit_realized(self.p, self.dec, self.state, v, d_o)
        closed = realtime_profit_reduced(self.p, self.opp, 0, self.dec, self.state, v)
        assert abs(sim.mean() - closed) < 3 * sim.std() / math.sqrt(sim.size)

    def test_at_zero_standardized_gap(self):
        v = 2.0  # q = 8 = Y
        Y = 36.0 + 2.0 - 30.0
        sd = math.sqrt(8.0)
        expected = 2.0 * 30.0 - 36.0 + 2.0 * Y + (v - 2.0) * 8.0 - self.p.c * sd / math.sqrt(2 * math.pi)
        got = realtime_profit_reduced(self.p, self.opp, 0, self.dec, self.state, v)
        assert got == pytest.approx(expected, rel=1e-13)

    def test_degenerate_demand_is_certainty_equivalent(self):
        # E_o -> 0 with kappa1*E_o fixed keeps the mean and sends the sd to zero
        for E_o in (1e-4, 1e-8):
            opp = OpportunisticModel([50.0 / E_o], 1.0, -2.0, 0.8, E_o)
            for v in (1.0, 2.0, 4.0):
                a = realtime_profit_reduced(self.p, opp, 0, self.dec, self.state, v)
                b = certainty_equivalent_profit(self.p, opp, 0, self.dec, self.state, v)
                sd = math.sqrt(q_o(opp, 0, v) * E_o)
                assert abs(a - b) <= self.p.c * sd / math.sqrt(2 * math.pi) + 1e-9

    def test_no_arrivals_equals_certainty_equivalent(self):
        opp = OpportunisticModel([0.0], 1.0, -2.0, 0.8, 1.0)
        a = realtime_profit_reduced(self.p, opp, 0, self.dec, self.state, 3.0)
        b = certainty_equivalent_profit(self.p, opp, 0, self.dec, self.state, 3.0)
        assert a == pytest.approx(b, rel=1e-14)

    @pytest.mark.parametrize("y", [3.0, 4.0, 6.0])
    def test_surplus_tail(self, y):
        v = 2.0
        sd = math.sqrt(8.0)
        S = 8.0 + y * sd + 30.0 - 2.0
        dec = DayAheadDecision(S, 2.0)
        a = realtime_profit_reduced(self.p, self.opp, 0, dec, self.state, v)
        b = profit_surplus_tail(self.p, self.opp, 0, dec, self.state, v)
        assert a == pytest.approx(b, rel=1e-3)

    @pytest.mark.parametrize("y", [-3.0, -4.0, -6.0])
    def test_deficit_tail(self, y):
        v = 2.0
        sd = math.sqrt(8.0)
        S = 8.0 + y * sd + 30.0 - 2.0
        dec = DayAheadDecision(S, 2.0)
        a = realtime_profit_reduced(self.p, self.opp, 0, dec, self.state, v)
        b = profit_deficit_tail(self.p, self.opp, 0, dec, self.state, v)
        assert a == pytest.approx(b, rel=1e-3)

    def test_condition_a_warning(self):
        with pytest.warns(ConditionAWarning):
            realtime_profit_reduced(self.p, self.opp, 0, self.dec, LowerState(45.0, 30.0), 2.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            realtime_profit_reduced(self.p, self.opp, 0, self.dec, self.state, 2.0)


class TestRealtimePrice:
    def test_inelastic_charges_cap(self):
        p = market(v_cap=6.0)
        opp = OpportunisticModel([50.0], 1.0, -0.5, 0.8, 1.0)
        for Y in (-10.0, 0.0, 5.0, 1e6):
            assert realtime_price(p, opp, 0, Y) == 6.0

    def test_unit_elasticity_is_inelastic(self):
        opp = OpportunisticModel([50.0], 1.0, -1.0, 0.8, 1.0)
        assert realtime_price(market(), opp, 0, 3.0) == 6.0

    def test_surplus_branch(self):
        opp = OpportunisticModel([50.0], 1.0, -2.0, 0.5, 1.0)
        assert realtime_price(market(c1=1.0, c_p=0.5), opp, 0, 1e9) == pytest.approx(1.0)

    def test_deficit_branch(self):
        opp = OpportunisticModel([50.0], 1.0, -2.0, 0.5, 1.0)
        assert realtime_price(market(c2=2.0), opp, 0, -1e9) == pytest.approx(4.0)

    def test_interior_branch_inverts_mean_demand(self):
        opp = OpportunisticModel([50.0], 1.0, -2.0, 0.5, 1.0)
        Y = q_o(opp, 0, 2.5)
        assert realtime_price(market(), opp, 0, Y) == pytest.approx(2.5)
        assert q_o_inverse(opp, 0, Y, 6.0) == pytest.approx(2.5)

    def test_vectorized(self):
        opp = OpportunisticModel([50.0], 1.0, -2.0, 0.5, 1.0)
        Y = np.array([-5.0, 0.0, 20.0, 1e6])
        vec = realtime_price(market(), opp, 0, Y)
        assert np.array_equal(vec, [realtime_price(market(), opp, 0, y) for y in Y])

    def test_nonpositive_surplus_price_clamped(self):
        p = market(c1=1.0, c_p=1.5, c2=2.0)
        opp = OpportunisticModel([50.0], 1.0, -2.0, 0.5, 1.0)
        rule = pricing_rule(p, opp, 0)
        assert rule.v_surplus <= 0
        assert any("c1 <= c_p" in d for d in rule.diagnostics)
        assert realtime_price(p, opp, 0, 1e9) == 0.5

    @pytest.mark.parametrize("g", [-0.5, -1.5, -2.0, -4.0])
    @pytest.mark.parametrize("Y", [-20.0, 0.0, 3.0, 10.0, 25.0, 60.0, 500.0])
    def test_oracle_agreement(self, g, Y):
        p = market()
        opp = OpportunisticModel([50.0], 1.0, g, 0.5, 1.0)
        step = (p.v_cap - opp.v_min) / 2000
        assert abs(realtime_price(p, opp, 0, Y) - realtime_price_oracle(p, opp, 0, Y)) <= step + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(g1=st.floats(-6.0, -1.05), dg=st.floats(0.01, 3.0), c_p=st.floats(0.0, 0.95))
    def test_prices_fall_with_elasticity(self, g1, dg, c_p):
        p = market(c_p=c_p, v_cap=1e3)
        opp = OpportunisticModel([50.0], 1.0, g1, 1e-3, 1.0)
        opp_more = OpportunisticModel([50.0], 1.0, g1 - dg, 1e-3, 1.0)
        r, r_more = pricing_rule(p, opp, 0), pricing_rule(p, opp_more, 0)
        assert r_more.v_surplus <= r.v_surplus
        assert r_more.v_deficit <= r.v_deficit
        assert r_more.v_surplus > p.c1 - p.c_p and r_more.v_deficit > p.c2


class TestDayAheadPrice:
    def test_inelastic(self):
        assert dayahead_u_star(market(), TraditionalDemandModel([100.0], [-0.5]), 0) == 5.0

    def test_elastic(self):
        assert dayahead_u_star(market(c1=1.0), TraditionalDemandModel([100.0], [-2.0]), 0) == 2.0

    def test_cap_binds(self):
        p = market(c1=1.0, u_cap=1.5)
        assert dayahead_u_star(p, TraditionalDemandModel([100.0], [-2.0]), 0) == 1.5

    def test_f1_zero_margin(self):
        assert f1(TraditionalDemandModel([100.0], [-2.0]), 0, 1.0, 1.0) == 0.0

    @pytest.mark.parametrize("g", [-1.2, -2.0, -3.5, -8.0])
    def test_u_star_maximizes_f1(self, g):
        # independent route: root of the complex-step derivative of f1
        trad = TraditionalDemandModel([100.0], [g])
        c1 = 1.3

        def deriv(u):
            h = 1e-30
            z = complex(u, h)
            return (100.0 * (z - c1) * z ** g).imag / h

        root = optimize.brentq(deriv, c1 * 1.0000001, 1e3, xtol=1e-15, rtol=1e-15)
        u_star = dayahead_u_star(market(c1=c1, c2=3.0, u_cap=1e3), trad, 0)
        assert u_star == pytest.approx(root, abs=1e-9)


class TestDayAheadProcurement:
    def test_median_case(self):
        # c_p/c = 1/2 puts the quantile at the median of Z, i.e. at theta
        p = market(c1=1.0, c2=2.0, c_p=1.0, K=4)
        opp = OpportunisticModel([50.0], 1.0, -0.5, 0.8, 1.0)
        models = make_models(opp, theta=10.0, sigma=3.0, sigma_t=2.0)
        u = dayahead_u_star(p, models.traditional, 0)
        S = dayahead_S_closed_form(p, models, 0, u)
        assert S == pytest.approx(4 * (q_o(opp, 0, 6.0) + 100.0 * u ** -2.0 - 10.0))

    def test_deterministic_limit(self):
        p = market(K=4)
        opp = OpportunisticModel([50.0], 1.0, -0.5, 0.8, 1.0)
        models = make_models(opp, theta=10.0, sigma=0.0, sigma_t=0.0)
        res = dayahead_S_star(p, models, 0)
        assert res.s_prime == pytest.approx(q_o(opp, 0, 6.0) - 10.0)
        num, _ = dayahead_S_numeric(p, models, 0, res.u, certainty_equivalent=True)
        assert num == pytest.approx(res.s_prime, abs=1e-6)

    def test_closed_form_maximizes_certainty_equivalent_f2(self):
        p = market(K=4)
        opp = OpportunisticModel([50.0], 1.0, -0.5, 0.8, 1.0)
        models = make_models(opp)
        res = dayahead_S_star(p, models, 0)
        num, _ = dayahead_S_numeric(p, models, 0, res.u, certainty_equivalent=True)
        assert num == pytest.approx(res.s_prime, abs=1e-5)

    def test_gaussian_demand_shifts_the_quantile(self):
        # with D_o ~ N(q, sd_o^2) the optimum is the c_p/c quantile of Z - D_o
        p = market(K=4)
        opp = OpportunisticModel([50.0], 1.0, -0.5, 0.8, 1.0)
        models = make_models(opp)
        u = dayahead_u_star(p, models.traditional, 0)
        q = q_o(opp, 0, 6.0)
        sd = math.sqrt(3.0 ** 2 + 2.0 ** 2 + q * 1.0)
        expected = -(10.0 - q + sd * stats.norm.ppf(p.c_p / p.c))
        num, _ = dayahead_S_numeric(p, models, 0, u)
        assert num == pytest.approx(expected, abs=1e-5)

    def test_methods_agree(self, params, elastic_opp):
        models = make_models(elastic_opp)
        grid = np.linspace(-25, 30, 12)
        a = f2(params, models, 0, grid)
        b = f2(params, models, 0, grid, method="quad")
        assert np.allclose(a, b, rtol=1e-10, atol=1e-9)

    def test_f2_linear_below_feasibility_edge(self, params, elastic_opp):
        # condition A regime: wind far below traditional demand
        models = make_models(elastic_opp, theta=2.0, sigma=0.5, alpha_t=400.0, sigma_t=0.5)
        u = dayahead_u_star(params, models.traditional, 0)
        s0 = -400.0 * u ** -2.0
        grid = np.linspace(s0 - 40, s0, 41)
        slope = np.diff(f2(params, models, 0, grid)) / np.diff(grid)
        assert np.allclose(slope, params.c2 - params.c1, atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(theta=st.floats(0.0, 40.0), sigma=st.floats(0.0, 10.0), g_o=st.floats(-4.0, -0.2),
           g_t=st.floats(-4.0, -0.2), kappa=st.floats(0.0, 200.0))
    def test_feasible(self, theta, sigma, g_o, g_t, kappa):
        p = market(K=4)
        opp = OpportunisticModel([kappa], 1.0, g_o, 0.8, 1.0)
        models = make_models(opp, theta=theta, sigma=sigma, gamma_t=g_t)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = dayahead_S_star(p, models, 0)
        assert res.S >= 0 and 0 < res.u <= p.u_cap
        assert res.s_prime >= -100.0 * res.u ** g_t - 1e-9

    def test_elastic_against_simulated_grid(self, params, elastic_opp):
        """S*, u* from the decomposition vs a brute-force (S, u) grid on a
        Monte-Carlo objective with common random numbers."""
        models = make_models(elastic_opp, theta=8.0, sigma=2.0, alpha_t=150.0, sigma_t=1.5)
        res = dayahead_S_star(params, models, 0)
        rng = np.random.default_rng(5)
        n = 200_000
        zw, ze, zo = rng.standard_normal((3, n))
        K = params.K

        def objective(S, u):
            s = S / K
            D_t = 150.0 * u ** -2.0 + 1.5 * ze
            W = 8.0 + 2.0 * zw
            v = realtime_price(params, elastic_opp, 0, s + W - D_t)
            q = q_o(elastic_opp, 0, v)
            D_o = q + np.sqrt(q) * zo
            eps = s + W - D_t - D_o
            val = u * D_t + v * D_o - params.c1 * s + params.c2 * eps \
                - params.c * np.maximum(eps, 0.0)
            return val.mean()

        u_grid = np.linspace(1.5, 2.5, 11)
        S_grid = np.linspace(res.S - 20, res.S + 20, 41)
        vals = np.array([[objective(S, u) for S in S_grid] for u in u_grid])
        iu, iS = np.unravel_index(np.argmax(vals), vals.shape)
        assert abs(u_grid[iu] - res.u) <= u_grid[1] - u_grid[0] + 1e-12
        assert abs(S_grid[iS] - res.S) <= 2 * (S_grid[1] - S_grid[0])
        assert objective(res.S, res.u) >= vals.max() - 1e-3 * abs(vals.max())


class TestConditionA:
    def test_rejects_windy_configuration(self, params, elastic_opp):
        models = make_models(elastic_opp, theta=200.0, sigma=10.0)
        with pytest.raises(ConditionAError):
            check_condition_a(params, models, 0, 2.0)

    def test_accepts_calm_configuration(self, params, elastic_opp):
        models = make_models(elastic_opp, theta=5.0, sigma=2.0)
        assert check_condition_a(params, models, 0, 2.0) < 0.01
