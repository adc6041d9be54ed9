import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from mtsched.errors import ConfigError, DomainError
from mtsched.models import (MarketParams, OpportunisticModel, TraditionalDemandModel, WindModel,
                            acceptance_prob, broadcast_slots, opportunistic_demand_moments, q_o,
                            q_o_inverse, sample_opportunistic_demand, sample_traditional_demand,
                            sample_wind, traditional_demand_mean)


def truncnorm_moments(mean, sd):
    """Mean and sd of N(mean, sd^2) conditioned on X >= 0 (textbook formulas)."""
    a = -mean / sd
    lam = math.exp(-a * a / 2) / math.sqrt(2 * math.pi) / (0.5 * math.erfc(a / math.sqrt(2)))
    m = mean + sd * lam
    var = sd ** 2 * (1 + a * lam - lam ** 2)
    return m, math.sqrt(var)


def opp_model(gamma_o=-2.0, v_min=1.0, E_o=1.0, kappa=100.0):
    return OpportunisticModel(lambda_o=[kappa], T2=1.0, gamma_o=gamma_o, v_min=v_min, E_o=E_o)


class TestMarketParams:
    def test_composite_cost(self, params):
        assert params.c == pytest.approx(0.5 - 1.0 + 2.0)

    @pytest.mark.parametrize("kw", [
        dict(c1=2.0, c2=1.0), dict(c1=0.0), dict(c_p=-0.1), dict(u_cap=0.0), dict(v_cap=-1.0),
        dict(M=0), dict(K=0),
    ])
    def test_invalid(self, kw):
        base = dict(c1=1.0, c2=2.0, c_p=0.5, u_cap=5.0, v_cap=6.0, M=2, K=2)
        base.update(kw)
        with pytest.raises(ConfigError):
            MarketParams(**base)


def test_broadcast_slots():
    assert broadcast_slots(3.0, 4).tolist() == [3.0] * 4
    assert broadcast_slots([1, 2], 2).tolist() == [1.0, 2.0]
    with pytest.raises(ConfigError):
        broadcast_slots([1, 2, 3], 2)


class TestWind:
    def test_degenerate(self, rng):
        assert sample_wind(WindModel([10.0], 0.0), 0, rng) == 10.0
        assert sample_wind(WindModel([0.0], 0.0), 0, rng) == 0.0

    def test_truncated_normal_mean(self):
        n = 100_000
        draws = sample_wind(WindModel([10.0], 2.0), 0, np.random.default_rng(1), size=n)
        mean, sd = truncnorm_moments(10.0, 2.0)
        assert draws.min() >= 0
        assert abs(draws.mean() - mean) < 3 * sd / math.sqrt(n)

    def test_truncation_matters_near_zero(self):
        n = 100_000
        draws = sample_wind(WindModel([1.0], 2.0), 0, np.random.default_rng(2), size=n)
        mean, sd = truncnorm_moments(1.0, 2.0)
        assert draws.min() >= 0
        assert abs(draws.mean() - mean) < 3 * sd / math.sqrt(n)

    @pytest.mark.parametrize("m", [-1, 1, 1.0, True])
    def test_bad_slot(self, m, rng):
        with pytest.raises(DomainError):
            sample_wind(WindModel([10.0], 1.0), m, rng)

    def test_seeded_determinism(self):
        model = WindModel([4.0, 8.0], 3.0)
        a = sample_wind(model, 1, np.random.default_rng(7), size=50)
        b = sample_wind(model, 1, np.random.default_rng(7), size=50)
        assert np.array_equal(a, b)


class TestTraditionalDemand:
    @pytest.mark.parametrize("alpha,gamma,u,expected", [
        (100.0, -1.0, 2.0, 50.0),
        (100.0, -0.5, 1.0, 100.0),
        (100.0, -2.0, 4.0, 6.25),
    ])
    def test_mean(self, alpha, gamma, u, expected):
        model = TraditionalDemandModel([alpha], [gamma], 0.0)
        assert traditional_demand_mean(model, 0, u) == pytest.approx(expected, rel=1e-15)

    @pytest.mark.parametrize("u", [0.0, -1.0])
    def test_nonpositive_price(self, u):
        with pytest.raises(DomainError):
            traditional_demand_mean(TraditionalDemandModel([1.0], [-1.0]), 0, u)

    def test_positive_elasticity_rejected(self):
        with pytest.raises(ConfigError):
            TraditionalDemandModel([1.0], [0.5])

    def test_noise_free_sample(self, rng):
        model = TraditionalDemandModel([100.0], [-1.0], 0.0)
        assert sample_traditional_demand(model, 0, 2.0, rng) == 50.0

    def test_noisy_sample_mean(self):
        n = 100_000
        model = TraditionalDemandModel([100.0], [-1.0], 5.0)
        draws = sample_traditional_demand(model, 0, 2.0, np.random.default_rng(3), size=n)
        mean, sd = truncnorm_moments(50.0, 5.0)
        assert abs(draws.mean() - mean) < 3 * sd / math.sqrt(n)

    def test_shrinks_as_inverse_square(self):
        model = TraditionalDemandModel([100.0], [-2.0], 0.0)
        u = np.array([1.0, 2.0, 4.0, 8.0])
        d = traditional_demand_mean(model, 0, u)
        assert np.all(np.diff(d) < 0)
        assert np.allclose(d * u ** 2, 100.0)


class TestOpportunistic:
    def test_acceptance_examples(self):
        assert acceptance_prob(opp_model(v_min=1.5), 1.5) == pytest.approx(1.0)
        assert acceptance_prob(opp_model(gamma_o=-1.0, v_min=1.5), 3.0) == pytest.approx(0.5)
        assert acceptance_prob(opp_model(gamma_o=-2.0, v_min=1.5), 3.0) == pytest.approx(0.25)
        assert acceptance_prob(opp_model(v_min=1.5), 0.2) == 1.0

    def test_alpha_o(self):
        model = opp_model(gamma_o=-2.0, v_min=1.5)
        assert model.alpha_o * 3.0 ** model.gamma_o == pytest.approx(0.25)

    @pytest.mark.parametrize("v", [0.0, -2.0])
    def test_acceptance_domain(self, v):
        with pytest.raises(DomainError):
            acceptance_prob(opp_model(), v)

    @given(v=st.floats(1e-6, 1e6), g=st.floats(-10.0, -1e-3), vmin=st.floats(1e-3, 1e3))
    def test_acceptance_normalized(self, v, g, vmin):
        p = acceptance_prob(opp_model(gamma_o=g, v_min=vmin), v)
        assert 0.0 <= p <= 1.0

    def test_moments_examples(self):
        # kappa1=100, acceptance 0.25, E_o=2
        model = opp_model(gamma_o=-2.0, v_min=1.0, E_o=2.0, kappa=100.0)
        mean, var = opportunistic_demand_moments(model, 0, 2.0)
        assert (mean, var) == (pytest.approx(50.0), pytest.approx(100.0))
        mean, var = opportunistic_demand_moments(opp_model(v_min=3.0), 0, 2.0)
        assert (mean, var) == (pytest.approx(100.0), pytest.approx(100.0))

    def test_elastic_mean_below_inelastic(self):
        hi = q_o(opp_model(gamma_o=-1.0), 0, 2.0)
        lo = q_o(opp_model(gamma_o=-2.0), 0, 2.0)
        assert lo < hi

    @pytest.mark.parametrize("kappa,p,E_o", [(50, 0.3, 1.0), (120, 0.8, 2.5), (400, 0.05, 0.7)])
    def test_thinned_poisson_moments(self, kappa, p, E_o):
        # exact moments of E_o * Binomial(Poisson(kappa), p), summed over the joint support
        n = np.arange(0, int(kappa + 40 * math.sqrt(kappa)))
        pn = stats.poisson.pmf(n, kappa)
        mean = E_o * np.sum(pn * n * p)
        second = E_o ** 2 * np.sum(pn * (n * p * (1 - p) + (n * p) ** 2))
        var = second - mean ** 2
        v_min = 1.0
        v = v_min * p ** (1 / -2.0)
        model = OpportunisticModel([kappa], 1.0, -2.0, v_min, E_o)
        q, s2 = opportunistic_demand_moments(model, 0, v)
        assert q == pytest.approx(mean, rel=1e-12)
        assert s2 == pytest.approx(var, rel=1e-9)

    @pytest.mark.parametrize("g", [-0.3, -1.0, -2.5])
    def test_elasticity_identity(self, g):
        model = opp_model(gamma_o=g, v_min=1.0)
        v, h = 3.0, 1e-6
        n_a = lambda x: 100.0 * acceptance_prob(model, x)
        deriv = (n_a(v + h) - n_a(v - h)) / (2 * h)
        assert v / n_a(v) * deriv == pytest.approx(g, rel=1e-6)

    @given(v1=st.floats(1.01, 50.0), dv=st.floats(1e-3, 10.0))
    def test_mean_strictly_decreasing_above_vmin(self, v1, dv):
        model = opp_model(gamma_o=-1.5, v_min=1.0)
        assert q_o(model, 0, v1 + dv) < q_o(model, 0, v1)

    def test_sampler_determinism(self):
        model = opp_model()
        a = sample_opportunistic_demand(model, 0, 2.0, np.random.default_rng(9), size=100)
        b = sample_opportunistic_demand(model, 0, 2.0, np.random.default_rng(9), size=100)
        assert np.array_equal(a, b)


class TestInverse:
    @pytest.mark.parametrize("v0", np.linspace(1.01, 5.99, 9))
    def test_round_trip(self, v0):
        model = opp_model(gamma_o=-2.0, v_min=1.0)
        assert q_o_inverse(model, 0, q_o(model, 0, v0), v_cap=6.0) == pytest.approx(v0, rel=1e-12)

    def test_unit_argument(self):
        model = opp_model(gamma_o=-2.0, v_min=0.5, kappa=10.0, E_o=2.0)
        Y = model.kappa1(0) * model.alpha_o * model.E_o
        assert q_o_inverse(model, 0, Y, v_cap=6.0) == pytest.approx(1.0)
        model = opp_model(gamma_o=-2.0, v_min=1.5, kappa=10.0, E_o=2.0)
        Y = model.kappa1(0) * model.alpha_o * model.E_o
        assert q_o_inverse(model, 0, Y, v_cap=6.0) == pytest.approx(1.5)

    def test_clamps_to_vmin(self):
        model = opp_model(gamma_o=-2.0, v_min=1.0)
        assert q_o_inverse(model, 0, 10 * q_o(model, 0, 1.0), v_cap=6.0) == 1.0

    @pytest.mark.parametrize("Y", [0.0, -3.0])
    def test_deficit_signalled(self, Y):
        with pytest.raises(DomainError):
            q_o_inverse(opp_model(), 0, Y)
