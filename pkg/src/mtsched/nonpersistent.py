"""Scheduling with non-persistent opportunistic users.

Real-time layer: realized and approximated T2-slot profit, closed-form
real-time prices and a grid-search oracle for them. Day-ahead layer: the
optimal retail price u* and base-load procurement S*.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, stats

from . import kernels
from .errors import ConditionAError, ConditionAWarning, DomainError
from .models import (MarketParams, Models, OpportunisticModel, TraditionalDemandModel,
                     opportunistic_demand_moments, q_o, traditional_demand_mean)
from .quadrature import normal_rule

# far-tail cutoff (in sd of opportunistic demand) for the boundary forms
C0 = 3.0


@dataclass(frozen=True)
class LowerState:
    W: float
    D_t: float

    def __post_init__(self):
        if self.W < 0 or self.D_t < 0:
            raise DomainError(f"lower state needs W >= 0 and D_t >= 0, got {self}")


@dataclass(frozen=True)
class DayAheadDecision:
    S: float
    u: float

    def __post_init__(self):
        if self.S < 0:
            raise DomainError(f"procurement S must be >= 0, got {self.S}")
        if self.u <= 0:
            raise DomainError(f"day-ahead price u must be > 0, got {self.u}")

    def per_slot(self, K: int) -> float:
        return self.S / K


@dataclass(frozen=True)
class EventClass:
    tag: str  # "A", "B" or "C"
    surplus: float


def classify_event(s: float, state: LowerState, D_o: float) -> EventClass:
    eps = state.W + s - (state.D_t + D_o)
    if state.W >= state.D_t + D_o:
        return EventClass("A", eps)
    if eps < 0:
        return EventClass("C", eps)
    return EventClass("B", eps)


def _check_decision(params: MarketParams, dec: DayAheadDecision):
    if dec.u > params.u_cap:
        raise DomainError(f"u={dec.u} exceeds u_cap={params.u_cap}")


def realtime_profit_realized(params: MarketParams, dec: DayAheadDecision, state: LowerState,
                             v: float, D_o):
    """Profit of one T2-slot once opportunistic demand ``D_o`` has realized.

    ``D_o`` may be an array; the result then has the same shape.
    """
    _check_decision(params, dec)
    if not 0 < v <= params.v_cap:
        raise DomainError(f"real-time price must lie in (0, v_cap], got {v}")
    profit, _ = kernels.realized_profit(dec.u, v, dec.per_slot(params.K), state.W, state.D_t,
                                        D_o, params.c1, params.c2, params.c_p)
    return float(profit) if np.ndim(profit) == 0 else profit


def realtime_profit_integrand(params: MarketParams, dec: DayAheadDecision, state: LowerState,
                              v: float, D_o):
    """Reduced-form profit at realized ``D_o`` with the wind-sufficient event ruled out."""
    s = dec.per_slot(params.K)
    Y = s + state.W - state.D_t
    D_o = np.asarray(D_o, dtype=float)
    surplus = np.where(Y - D_o >= 0, Y - D_o, 0.0)
    out = (v - params.c2) * D_o - params.c * surplus + dec.u * state.D_t - params.c1 * s \
        + params.c2 * Y
    return float(out) if out.ndim == 0 else out


def _normal_surplus_mean(gap, sd):
    """E[(gap + sd*Z)^+] for standard normal Z, elementwise; sd may be 0."""
    gap = np.asarray(gap, dtype=float)
    sd = np.asarray(sd, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(sd > 0, gap / np.where(sd > 0, sd, 1.0), 0.0)
    smooth = gap * stats.norm.cdf(y) + sd * stats.norm.pdf(y)
    return np.where(sd > 0, smooth, np.maximum(gap, 0.0))


def realtime_profit_reduced(params: MarketParams, opp: OpportunisticModel, m: int,
                            dec: DayAheadDecision, state: LowerState, v: float,
                            tol: float = 0.01) -> float:
    """Expected T2-slot profit with Gaussian opportunistic demand, in closed form.

    Emits :class:`ConditionAWarning` if the probability that wind alone covers
    total demand exceeds ``tol``.
    """
    _check_decision(params, dec)
    if v <= 0:
        raise DomainError(f"real-time price must be > 0, got {v}")
    s = dec.per_slot(params.K)
    Y = s + state.W - state.D_t
    mean, var = opportunistic_demand_moments(opp, m, v)
    sd = math.sqrt(var)
    if sd > 0:
        p_wind_covers = stats.norm.cdf((state.W - state.D_t - mean) / sd)
    else:
        p_wind_covers = float(state.W >= state.D_t + mean)
    if p_wind_covers > tol:
        warnings.warn(f"condition A violated: P(W >= D_t + D_o) = {p_wind_covers:.3g}",
                      ConditionAWarning, stacklevel=2)
    base = dec.u * state.D_t - params.c1 * s + params.c2 * Y + (v - params.c2) * mean
    return float(base - params.c * _normal_surplus_mean(Y - mean, sd))


def profit_surplus_tail(params, opp, m, dec, state, v) -> float:
    """Approximated profit when Y exceeds mean opportunistic demand by many sd."""
    s = dec.per_slot(params.K)
    Y = s + state.W - state.D_t
    a = params.c1 - params.c_p
    return (v - a) * q_o(opp, m, v) + a * Y + dec.u * state.D_t - params.c1 * s


def profit_deficit_tail(params, opp, m, dec, state, v) -> float:
    """Approximated profit when Y falls short of mean opportunistic demand by many sd."""
    s = dec.per_slot(params.K)
    Y = s + state.W - state.D_t
    return (v - params.c2) * q_o(opp, m, v) + dec.u * state.D_t - params.c1 * s + params.c2 * Y


def ce_objective(params: MarketParams, opp: OpportunisticModel, m: int, Y, v):
    """Price-dependent part of the certainty-equivalent profit, plus c2*Y.

    Full certainty-equivalent profit is ``u*D_t - c1*s + ce_objective(...)``.
    """
    q = q_o(opp, m, v)
    Y = np.asarray(Y, dtype=float)
    return params.c2 * Y + (np.asarray(v) - params.c2) * q - params.c * np.maximum(Y - q, 0.0)


def certainty_equivalent_profit(params, opp, m, dec: DayAheadDecision, state: LowerState,
                                v) -> float:
    s = dec.per_slot(params.K)
    Y = s + state.W - state.D_t
    return float(dec.u * state.D_t - params.c1 * s + ce_objective(params, opp, m, Y, v))


# -- real-time pricing -------------------------------------------------------


@dataclass(frozen=True)
class RealtimePricingRule:
    """Closed-form real-time price as a function of net procurement Y."""

    elastic: bool
    v_surplus: float  # price when procurement is ample (raw, before clamping)
    v_deficit: float  # price when procurement falls short (raw)
    y_surplus: float  # Y at or above which the surplus price applies
    y_deficit: float  # Y below which the deficit price applies
    diagnostics: tuple = field(default_factory=tuple)


def pricing_rule(params: MarketParams, opp: OpportunisticModel, m: int) -> RealtimePricingRule:
    g = opp.gamma_o
    if g >= -1.0:
        return RealtimePricingRule(False, params.v_cap, params.v_cap, -math.inf, math.inf)
    a = params.c1 - params.c_p
    v_s = g * a / (1.0 + g)
    v_d = g * params.c2 / (1.0 + g)
    diags = []
    if v_s <= 0:
        diags.append(f"surplus price {v_s:.6g} <= 0 because c1 <= c_p; clamped to v_min")
    if v_s < opp.v_min or v_d < opp.v_min:
        diags.append("closed-form price below v_min; clamped")
    if v_s > params.v_cap or v_d > params.v_cap:
        diags.append("closed-form price above v_cap; clamped")
    y_s = q_o(opp, m, v_s) if v_s > 0 else math.inf
    y_d = q_o(opp, m, v_d)
    return RealtimePricingRule(True, v_s, v_d, y_s, y_d, tuple(diags))


def _unclamped_inverse(opp: OpportunisticModel, m: int, Y):
    """Power-law inverse of mean demand; +inf where Y <= 0 or nobody arrives."""
    Y = np.asarray(Y, dtype=float)
    scale = opp.kappa1(m) * opp.alpha_o * opp.E_o
    out = np.full(Y.shape, np.inf)
    if scale > 0:
        pos = Y > 0
        out[pos] = (Y[pos] / scale) ** (1.0 / opp.gamma_o)
    return out


def realtime_price(params: MarketParams, opp: OpportunisticModel, m: int, Y):
    """Closed-form real-time price for net procurement ``Y`` (scalar or array).

    Relatively inelastic users (gamma_o >= -1) are always charged v_cap. For
    elastic users the price is the surplus price, the deficit price, or the
    price that makes mean demand equal Y, whichever lies between the other
    two; the result is clamped to [v_min, v_cap].
    """
    Y_arr = np.asarray(Y, dtype=float)
    if opp.gamma_o >= -1.0:
        out = np.full(Y_arr.shape, float(params.v_cap))
    else:
        rule = pricing_rule(params, opp, m)
        v_y = _unclamped_inverse(opp, m, Y_arr)
        lo = rule.v_surplus if rule.v_surplus > 0 else -np.inf
        out = np.clip(v_y, lo, rule.v_deficit)
        out = np.clip(out, opp.v_min, max(opp.v_min, params.v_cap))
    return float(out) if out.ndim == 0 else out


def price_grid(lo: float, hi: float, n: int = 2001) -> np.ndarray:
    return np.linspace(lo, hi, n)


def realtime_price_oracle(params: MarketParams, opp: OpportunisticModel, m: int, Y,
                          n_grid: int = 2001) -> float:
    """Brute-force maximizer of the certainty-equivalent profit over a uniform
    grid on [v_min, v_cap]. The first grid point wins ties.
    """
    grid = price_grid(opp.v_min, params.v_cap, n_grid)
    values = ce_objective(params, opp, m, float(Y), grid)
    return float(grid[int(np.argmax(values))])


# -- day-ahead scheduling ----------------------------------------------------


def dayahead_u_star(params: MarketParams, trad: TraditionalDemandModel, m: int) -> float:
    g = float(trad.gamma_t[m])
    if g >= -1.0:
        return float(params.u_cap)
    u = g / (1.0 + g) * params.c1
    return float(min(max(u, np.nextafter(0.0, 1.0)), params.u_cap))


def f1(trad: TraditionalDemandModel, m: int, u, c1: float):
    """Expected margin on traditional demand at day-ahead price u."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise DomainError("f1 needs u > 0")
    out = trad.alpha_t[m] * (u - c1) * u ** trad.gamma_t[m]
    return float(out) if out.ndim == 0 else out


def net_wind_sd(models: Models) -> float:
    """sd of Z = W - eps_t, the net wind relative to traditional demand."""
    return float(math.hypot(models.wind.sigma, models.traditional.sigma_t))


def _slot_value(params, opp, m, Y, certainty_equivalent):
    """E over D_o of (v - c2) D_o - c (Y - D_o)^+ under the real-time policy."""
    v = realtime_price(params, opp, m, Y)
    mean, var = opportunistic_demand_moments(opp, m, v)
    if certainty_equivalent:
        surplus = np.maximum(np.asarray(Y) - mean, 0.0)
    else:
        surplus = _normal_surplus_mean(np.asarray(Y) - mean, np.sqrt(var))
    return (v - params.c2) * mean - params.c * surplus


def f2(params: MarketParams, models: Models, m: int, s_prime, *, method: str = "piecewise",
       n_nodes: int = 64, certainty_equivalent: bool = False):
    """Procurement-dependent part of the expected day-ahead profit.

    ``s_prime`` is per-T2-slot procurement net of mean traditional demand.
    Expectation runs over Z = W - eps_t ~ N(theta_m, sigma^2 + sigma_t^2).
    ``method="piecewise"`` applies Gauss-Legendre panels split at the kinks
    of the real-time policy (vectorized over ``s_prime``); ``"quad"`` is
    scipy's adaptive rule with the same breakpoints (slow, used as a check);
    ``"gauss-hermite"`` is a plain ``n_nodes`` Hermite rule.
    """
    opp = models.opportunistic
    theta = float(models.wind.theta[m])
    sd = net_wind_sd(models)
    s_arr = np.atleast_1d(np.asarray(s_prime, dtype=float))
    out = np.empty(s_arr.shape)
    if sd == 0:
        out[:] = _slot_value(params, opp, m, s_arr + theta, certainty_equivalent)
    elif method == "gauss-hermite":
        z, p = normal_rule(n_nodes, theta, sd)
        vals = _slot_value(params, opp, m, s_arr[:, None] + z[None, :], certainty_equivalent)
        out[:] = vals @ p
    elif method == "piecewise":
        out[:] = _piecewise_expectation(params, opp, m, s_arr, theta, sd, certainty_equivalent,
                                        n_nodes)
    elif method == "quad":
        kinks = _policy_kinks(params, opp, m)
        lo, hi = theta - 12 * sd, theta + 12 * sd
        for i, sp in enumerate(s_arr):
            pts = sorted({y - sp for y in kinks if lo < y - sp < hi})

            def integrand(zv, sp=sp):
                return float(_slot_value(params, opp, m, sp + zv, certainty_equivalent)) \
                    * stats.norm.pdf(zv, theta, sd)

            val, _ = integrate.quad(integrand, lo, hi, points=pts or None,
                                    limit=200, epsabs=1e-11, epsrel=1e-11)
            out[i] = val
    else:
        raise ValueError(f"unknown quadrature method {method!r}")
    out += (params.c2 - params.c1) * s_arr
    return float(out[0]) if np.ndim(s_prime) == 0 else out


_PANELS = np.linspace(-12.0, 12.0, 13)
_GL_NODES = 24


def _piecewise_expectation(params, opp, m, s_arr, theta, sd, certainty_equivalent, n_nodes):
    x, w = np.polynomial.legendre.leggauss(_GL_NODES)
    kinks = np.asarray(_policy_kinks(params, opp, m))
    lo, hi = theta + sd * _PANELS[0], theta + sd * _PANELS[-1]
    # per-row breakpoints: fixed panel edges plus kinks shifted by -s'
    kz = kinks[None, :] - s_arr[:, None]
    kz = np.clip(kz, lo, hi)
    edges = np.sort(np.concatenate(
        [np.broadcast_to(theta + sd * _PANELS, (s_arr.size, _PANELS.size)), kz], axis=1), axis=1)
    a, b = edges[:, :-1], edges[:, 1:]
    half = 0.5 * (b - a)
    nodes = (a + half)[..., None] + half[..., None] * x  # (n_s, n_seg, n_gl)
    weights = half[..., None] * w * stats.norm.pdf(nodes, theta, sd)
    vals = _slot_value(params, opp, m, s_arr[:, None, None] + nodes, certainty_equivalent)
    return np.einsum("ijk,ijk->i", vals, weights)


def _policy_kinks(params, opp, m):
    """Values of Y where the real-time price or the surplus term changes regime."""
    scale = opp.kappa1(m) * opp.alpha_o * opp.E_o
    if scale == 0:
        return [0.0]
    cands = [opp.v_min, params.v_cap]
    if opp.gamma_o < -1.0:
        rule = pricing_rule(params, opp, m)
        cands += [v for v in (rule.v_surplus, rule.v_deficit) if v > 0]
    return [0.0] + [scale * v ** opp.gamma_o for v in cands]


@dataclass
class DayAheadResult:
    m: int
    u: float
    S: float
    s_prime: float
    branch: str  # "closed-form" or "numeric"
    diagnostics: list = field(default_factory=list)

    @property
    def decision(self) -> DayAheadDecision:
        return DayAheadDecision(self.S, self.u)


def dayahead_S_closed_form(params: MarketParams, models: Models, m: int, u_star: float) -> float:
    """Base-load procurement for relatively inelastic opportunistic users."""
    if params.c_p <= 0:
        raise DomainError("closed-form S* needs c_p > 0 (otherwise over-procurement is free)")
    opp = models.opportunistic
    theta = float(models.wind.theta[m])
    z_quant = theta + net_wind_sd(models) * stats.norm.ppf(params.c_p / params.c)
    mean_t = traditional_demand_mean(models.traditional, m, u_star)
    return params.K * (q_o(opp, m, params.v_cap) + mean_t - z_quant)


def _s_prime_bounds(params, models, m, u_star):
    opp = models.opportunistic
    theta = float(models.wind.theta[m])
    sd = net_wind_sd(models)
    mean_hi, var_hi = opportunistic_demand_moments(opp, m, opp.v_min)
    lo = -traditional_demand_mean(models.traditional, m, u_star)
    hi = mean_hi + 8 * math.sqrt(var_hi) - theta + 8 * sd
    return lo, max(hi, lo + 1e-9)


def dayahead_S_numeric(params: MarketParams, models: Models, m: int, u_star: float, *,
                       method: str = "piecewise", coarse: int = 201, dense: int = 2001,
                       certainty_equivalent: bool = False):
    """Maximize f2 over s' >= -E[D_t]; returns (s_prime, diagnostics)."""
    lo, hi = _s_prime_bounds(params, models, m, u_star)
    grid = np.linspace(lo, hi, coarse)
    vals = f2(params, models, m, grid, method=method, certainty_equivalent=certainty_equivalent)
    diags = []
    if not _is_unimodal(vals):
        diags.append("f2 not unimodal on the search grid; used dense global scan")
        warnings.warn(diags[-1], RuntimeWarning, stacklevel=2)
        grid = np.linspace(lo, hi, dense)
        vals = f2(params, models, m, grid, method=method,
                  certainty_equivalent=certainty_equivalent)
    # refine between the neighbours of the best grid point
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(
        lambda x: -f2(params, models, m, x, method=method,
                      certainty_equivalent=certainty_equivalent),
        bounds=(a, b), method="bounded", options={"xatol": 1e-10 * max(1.0, hi - lo)})
    best = float(res.x) if -res.fun >= vals[i] else float(grid[i])
    return best, diags


def _is_unimodal(vals, rtol=1e-9) -> bool:
    d = np.diff(vals)
    scale = rtol * max(1.0, float(np.max(np.abs(vals))))
    signs = np.sign(np.where(np.abs(d) <= scale, 0.0, d))
    signs = signs[signs != 0]
    # at most one change from rising to falling
    return not np.any((signs[:-1] < 0) & (signs[1:] > 0))


def dayahead_S_star(params: MarketParams, models: Models, m: int, u_star: float | None = None,
                    *, method: str = "piecewise") -> DayAheadResult:
    """Day-ahead procurement S* at price ``u_star`` (defaults to :func:`dayahead_u_star`)."""
    if u_star is None:
        u_star = dayahead_u_star(params, models.traditional, m)
    mean_t = traditional_demand_mean(models.traditional, m, u_star)
    diags = []
    if models.opportunistic.gamma_o >= -1.0:
        S = dayahead_S_closed_form(params, models, m, u_star)
        branch = "closed-form"
    else:
        s_prime, diags = dayahead_S_numeric(params, models, m, u_star, method=method)
        S = params.K * (s_prime + mean_t)
        branch = "numeric"
    if S < 0:
        diags.append(f"S*={S:.6g} < 0 clamped to 0 (procurement infeasible)")
        S = 0.0
    return DayAheadResult(m, float(u_star), float(S), S / params.K - mean_t, branch, diags)


def solve_day_ahead(params: MarketParams, models: Models, *, method: str = "piecewise"):
    """u*, S* for every T1-slot."""
    return [dayahead_S_star(params, models, m, method=method) for m in range(models.n_slots)]


def condition_a_exceedance(params: MarketParams, models: Models, m: int, u: float) -> float:
    """P(W >= E[D_t] + q_o(v_min)) under the untruncated wind model."""
    mean_t = traditional_demand_mean(models.traditional, m, u)
    demand = mean_t + q_o(models.opportunistic, m, models.opportunistic.v_min)
    theta = float(models.wind.theta[m])
    if models.wind.sigma == 0:
        return float(theta >= demand)
    return float(stats.norm.sf(demand, theta, models.wind.sigma))


def check_condition_a(params: MarketParams, models: Models, m: int, u: float,
                      threshold: float = 0.01) -> float:
    p = condition_a_exceedance(params, models, m, u)
    if p > threshold:
        raise ConditionAError(
            f"condition A guardrail: P(wind covers demand) = {p:.4g} > {threshold} in slot {m}")
    return p
