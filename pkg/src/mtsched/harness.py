"""Monte-Carlo experiment engine: profit margins over penetration and elasticity grids.

A scenario point fixes wind penetration ``r_w``, opportunistic penetration
``r_o`` and optionally a common elasticity ``gamma`` (applied to both user
classes). Penetrations are mapped to model parameters per T1-slot by
:func:`scenario_models`; the mapping is written to the run metadata.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from .errors import ConditionAError, ConfigError
from .models import (MarketParams, Models, OpportunisticModel, TraditionalDemandModel,
                     WindModel, acceptance_prob, q_o, sample_traditional_demand, sample_wind,
                     traditional_demand_mean)
from .nonpersistent import check_condition_a, dayahead_S_star, dayahead_u_star, realtime_price
from .persistent import PersistentGrids, simulate_policy, solve_backward

MODES = ("nonpersistent", "persistent", "benchmark")

COLUMNS = ("mode", "r_w", "r_o", "gamma", "status", "replicates", "margin", "profit_mean",
           "profit_stderr", "sales_mean", "freq_A", "freq_B", "freq_C", "u", "S", "diagnostic")

PENETRATION_MAPPING = (
    "E[D_t] = alpha_t * u*^gamma_t at the day-ahead price u*; "
    "kappa1 chosen so q_o(v_cap) = r_o/(1-r_o) * E[D_t]; "
    "theta = r_w/(1-r_w) * (E[D_t] + q_o(v_cap)); wind sd = wind_sd_ratio * theta"
)


@dataclass(frozen=True)
class ExperimentSpec:
    mode: str = "nonpersistent"
    r_w: tuple = (0.2,)
    r_o: tuple = (0.2,)
    gamma: tuple | None = None  # common elasticity for both user classes; None keeps the base
    replicates: int = 10_000
    batches: int = 100  # batch margins for trend statistics
    wind_sd_ratio: float = 0.5
    condition_a_threshold: float = 0.01
    benchmark_u_points: int = 2001
    benchmark_s_points: int = 801

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"experiment.mode: must be one of {MODES}, got {self.mode!r}")
        for name in ("r_w", "r_o"):
            vals = tuple(float(x) for x in getattr(self, name))
            if any(not 0.0 <= x < 1.0 for x in vals):
                raise ConfigError(f"experiment.{name}: penetration levels must lie in [0, 1)")
            object.__setattr__(self, name, vals)
        if self.gamma is not None:
            vals = tuple(float(x) for x in self.gamma)
            if any(x >= 0 for x in vals):
                raise ConfigError("experiment.gamma: elasticities must be negative")
            object.__setattr__(self, "gamma", vals)
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise ConfigError(f"experiment.replicates: must be an integer >= 1, got {self.replicates}")
        if int(self.batches) != self.batches or not 1 <= self.batches <= self.replicates:
            raise ConfigError("experiment.batches: must be an integer in [1, replicates]")
        if self.wind_sd_ratio < 0:
            raise ConfigError("experiment.wind_sd_ratio: must be >= 0")
        if self.benchmark_u_points < 2 or self.benchmark_s_points < 2:
            raise ConfigError("experiment.benchmark_*_points: need at least 2 grid points")

    def points(self):
        """Scenario coordinates in grid order (r_w slowest, gamma fastest)."""
        gammas = self.gamma if self.gamma is not None else (None,)
        return [(rw, ro, g) for rw in self.r_w for ro in self.r_o for g in gammas]


@dataclass
class ResultRow:
    mode: str
    r_w: float
    r_o: float
    gamma: float | None
    status: str  # "ok" or "skipped"
    replicates: int
    margin: float = math.nan
    profit_mean: float = math.nan
    profit_stderr: float = math.nan
    sales_mean: float = math.nan
    freq_A: float = math.nan
    freq_B: float = math.nan
    freq_C: float = math.nan
    u: tuple = ()
    S: tuple = ()
    diagnostic: str = ""
    batch_margins: np.ndarray = field(default=None, repr=False, compare=False)

    def as_record(self) -> list[str]:
        out = []
        for col in COLUMNS:
            val = getattr(self, col)
            if isinstance(val, tuple):
                out.append(";".join(repr(float(x)) for x in val))
            elif isinstance(val, float):
                out.append("" if math.isnan(val) else repr(val))
            elif val is None:
                out.append("")
            else:
                out.append(str(val))
        return out


@dataclass(frozen=True)
class BaseModel:
    """Market and model parameters that a scenario point does not override."""

    params: MarketParams
    models: Models
    grids: PersistentGrids | None = None
    max_operations: float | None = None


# -- penetration mapping ------------------------------------------------------------


def scenario_models(base: BaseModel, spec: ExperimentSpec, point) -> tuple[Models, np.ndarray]:
    """Models for one scenario point, plus the day-ahead prices used for the mapping."""
    r_w, r_o, gamma = point
    trad0, opp0 = base.models.traditional, base.models.opportunistic
    M = base.params.M
    gamma_t = trad0.gamma_t if gamma is None else np.full(M, gamma)
    gamma_o = opp0.gamma_o if gamma is None else gamma
    trad = TraditionalDemandModel(trad0.alpha_t, gamma_t, trad0.sigma_t)
    u = np.array([dayahead_u_star(base.params, trad, m) for m in range(M)])
    mean_t = np.array([traditional_demand_mean(trad, m, u[m]) for m in range(M)])
    unit = OpportunisticModel(np.ones(M), 1.0, gamma_o, opp0.v_min, opp0.E_o)
    per_arrival = np.array([q_o(unit, m, base.params.v_cap) for m in range(M)])
    target_o = r_o / (1.0 - r_o) * mean_t
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(target_o > 0, target_o / per_arrival, 0.0)
    opp = OpportunisticModel(kappa / opp0.T2, opp0.T2, gamma_o, opp0.v_min, opp0.E_o)
    theta = r_w / (1.0 - r_w) * (mean_t + target_o)
    wind_sd = float(spec.wind_sd_ratio * np.max(theta))
    return Models(WindModel(theta, wind_sd), trad, opp), u


def _seed_for(seed: int, cell: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(cell,)))


def _skip_row(spec, point, mode, message):
    r_w, r_o, gamma = point
    return ResultRow(mode, r_w, r_o, gamma, "skipped", spec.replicates, diagnostic=message)


def _guard(base, spec, models, u):
    for m in range(base.params.M):
        check_condition_a(base.params, models, m, float(u[m]), spec.condition_a_threshold)


def _finish(spec, point, mode, profit, sales, events, u, S, diagnostic=""):
    """Aggregate per-replicate profit and sales into a ResultRow."""
    r_w, r_o, gamma = point
    n = profit.size
    batches = np.array_split(np.arange(n), spec.batches)
    batch_margins = np.array([profit[b].sum() / sales[b].sum() for b in batches])
    freq = events / events.sum()
    stderr = float(profit.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return ResultRow(mode, r_w, r_o, gamma, "ok", n, float(profit.mean() / sales.mean()),
                     float(profit.mean()), stderr, float(sales.mean()), float(freq[0]),
                     float(freq[1]), float(freq[2]), tuple(float(x) for x in u),
                     tuple(float(x) for x in S), diagnostic, batch_margins)


# -- two-timescale scenarios ---------------------------------------------------------


def _simulate_two_timescale(params, models, decisions, rng, n):
    """n replicate days of M x K T2-slots with closed-form real-time prices."""
    opp = models.opportunistic
    profit = np.zeros(n)
    sales = np.zeros(n)
    events = np.zeros(3, dtype=np.int64)
    for m, dec in enumerate(decisions):
        s = dec.S / params.K
        for _ in range(params.K):
            W = sample_wind(models.wind, m, rng, size=n)
            D_t = sample_traditional_demand(models.traditional, m, dec.u, rng, size=n)
            v = realtime_price(params, opp, m, s + W - D_t)
            arrivals = rng.poisson(opp.kappa1(m), size=n)
            D_o = rng.binomial(arrivals, acceptance_prob(opp, v)) * opp.E_o
            step, ev = kernels.realized_profit(dec.u, v, s, W, D_t, D_o, params.c1, params.c2,
                                               params.c_p)
            profit += step
            sales += dec.u * D_t + v * D_o
            events += np.bincount(ev, minlength=3)
    return profit, sales, events


def run_scenario(base: BaseModel, spec: ExperimentSpec, point, seed: int = 0,
                 cell: int = 0) -> ResultRow:
    """Two-timescale system (non-persistent or persistent users) at one scenario point."""
    if spec.replicates < 1:
        raise ConfigError("experiment.replicates: must be >= 1")
    models, u = scenario_models(base, spec, point)
    try:
        _guard(base, spec, models, u)
    except ConditionAError as exc:
        return _skip_row(spec, point, spec.mode, str(exc))
    rng = _seed_for(seed, cell)
    if spec.mode == "persistent":
        if base.grids is None:
            raise ConfigError("persistent mode needs a 'persistent' grid section")
        table = solve_backward(base.params, models, base.grids, base.max_operations)
        res = simulate_policy(table, models, rng, spec.replicates)
        acts = [table.action(m, 0) for m in range(base.params.M)]
        return _finish(spec, point, "persistent", res.daily_profit, res.daily_sales,
                       res.event_counts, [a.u for a in acts], [a.s * base.params.K for a in acts],
                       f"policy value {table.day_value!r}; clamped {res.clamped}")
    with warnings.catch_warnings():
        # a non-unimodal f2 is reported in the row diagnostic instead
        warnings.simplefilter("ignore", RuntimeWarning)
        decisions = [dayahead_S_star(base.params, models, m) for m in range(base.params.M)]
    diag = "; ".join(d for r in decisions for d in r.diagnostics)
    profit, sales, events = _simulate_two_timescale(base.params, models,
                                                    [r.decision for r in decisions],
                                                    rng, spec.replicates)
    return _finish(spec, point, "nonpersistent", profit, sales, events,
                   [r.u for r in decisions], [r.S for r in decisions], diag)


# -- benchmark: one day-ahead price for everyone --------------------------------------


def benchmark_expected_profit(params: MarketParams, models: Models, m: int, S, u):
    """Expected T2-slot profit when all users respond to the day-ahead price u.

    Uses a Gaussian model of the net position X = s + W - D_t - D_o and the
    identity profit = u*D - c1*s + c2*X - c*X^+ (wind never covers demand).
    """
    opp = models.opportunistic
    u = np.asarray(u, dtype=float)
    s = np.asarray(S, dtype=float) / params.K
    mean_t = traditional_demand_mean(models.traditional, m, u)
    p = acceptance_prob(opp, u)
    mean_o = opp.kappa1(m) * p * opp.E_o
    var_o = opp.kappa1(m) * p * opp.E_o ** 2
    mu = s + float(models.wind.theta[m]) - mean_t - mean_o
    sd = np.sqrt(models.wind.sigma ** 2 + models.traditional.sigma_t ** 2 + var_o)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, mu / np.where(sd > 0, sd, 1.0), 0.0)
    pos = np.where(sd > 0, mu * stats.norm.cdf(z) + sd * stats.norm.pdf(z), np.maximum(mu, 0.0))
    return u * (mean_t + mean_o) - params.c1 * s + params.c2 * mu - params.c * pos


def benchmark_decision(params: MarketParams, models: Models, m: int, n_u: int = 2001,
                       n_s: int = 801, u_grid=None):
    """(S, u) maximizing :func:`benchmark_expected_profit` on a 2-D grid.

    The u-grid spans [0.01*c1, u_cap]; for each u the S-grid spans six
    standard deviations of net demand around its mean, clipped at zero.
    The first maximizer in (u, S) order wins ties.
    """
    opp = models.opportunistic
    us = np.linspace(0.01 * params.c1, params.u_cap, n_u) if u_grid is None \
        else np.asarray(u_grid, dtype=float)
    mean_d = traditional_demand_mean(models.traditional, m, us) \
        + opp.kappa1(m) * acceptance_prob(opp, us) * opp.E_o
    sd = np.sqrt(models.wind.sigma ** 2 + models.traditional.sigma_t ** 2
                 + opp.kappa1(m) * acceptance_prob(opp, us) * opp.E_o ** 2)
    centre = mean_d - float(models.wind.theta[m])
    lo = np.maximum(centre - 6 * sd, 0.0)
    hi = np.maximum(centre + 6 * sd, lo)
    frac = np.linspace(0.0, 1.0, n_s)
    s_grid = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    vals = benchmark_expected_profit(params, models, m, params.K * s_grid, us[:, None])
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    return float(params.K * s_grid[i, j]), float(us[i])


def run_benchmark(base: BaseModel, spec: ExperimentSpec, point, seed: int = 0,
                  cell: int = 0, u_grid=None) -> ResultRow:
    """Benchmark system at one scenario point: no real-time price lever."""
    if spec.replicates < 1:
        raise ConfigError("experiment.replicates: must be >= 1")
    models, u_ref = scenario_models(base, spec, point)
    try:
        _guard(base, spec, models, u_ref)
    except ConditionAError as exc:
        return _skip_row(spec, point, "benchmark", str(exc))
    params, opp = base.params, models.opportunistic
    rng = _seed_for(seed, cell)
    n = spec.replicates
    profit, sales = np.zeros(n), np.zeros(n)
    events = np.zeros(3, dtype=np.int64)
    Ss, us = [], []
    for m in range(params.M):
        S, u = benchmark_decision(params, models, m, spec.benchmark_u_points,
                                  spec.benchmark_s_points, u_grid)
        Ss.append(S)
        us.append(u)
        s = S / params.K
        p = acceptance_prob(opp, u)
        for _ in range(params.K):
            W = sample_wind(models.wind, m, rng, size=n)
            D_t = sample_traditional_demand(models.traditional, m, u, rng, size=n)
            arrivals = rng.poisson(opp.kappa1(m), size=n)
            D_o = rng.binomial(arrivals, p) * opp.E_o
            step, ev = kernels.realized_profit(u, u, s, W, D_t, D_o, params.c1, params.c2,
                                               params.c_p)
            profit += step
            sales += u * (D_t + D_o)
            events += np.bincount(ev, minlength=3)
    return _finish(spec, point, "benchmark", profit, sales, events, us, Ss)


# -- sweeps ----------------------------------------------------------------------------


def _run_cell(args):
    base, spec, point, seed, cell, mode = args
    if mode == "benchmark":
        return run_benchmark(base, spec, point, seed, cell)
    return run_scenario(base, spec, point, seed, cell)


def sweep(base: BaseModel, spec: ExperimentSpec, seed: int = 0, threads: int = 1,
          modes=None) -> list[ResultRow]:
    """Run every scenario point (and every requested mode) in grid order.

    Cell ``i`` draws from ``SeedSequence(seed, spawn_key=(i,))`` so the table
    does not depend on ``threads``. ``modes`` defaults to ``(spec.mode,)``;
    passing two modes pairs them cell by cell with common random streams.
    """
    modes = (spec.mode,) if modes is None else tuple(modes)
    jobs = [(base, spec, pt, seed, i, mode) for i, pt in enumerate(spec.points()) for mode in modes]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(j) for j in jobs]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow(row.as_record())
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def metadata(resolved_config: dict, spec: ExperimentSpec, seed: int) -> str:
    meta = {
        "columns": list(COLUMNS),
        "config": resolved_config,
        "experiment": _plain(dataclasses.asdict(spec)),
        "penetration_mapping": PENETRATION_MAPPING,
        "seed": seed,
        "seeding": "cell i uses numpy SeedSequence(seed, spawn_key=(i,))",
    }
    return json.dumps(meta, sort_keys=True, indent=1) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def trend_test(rows, axis: str):
    """Spearman correlation between a scenario coordinate and batch margins.

    Returns a list of ``(fixed_coordinates, rho, p_value)``, one per grid line
    along ``axis`` (lines are the other coordinates held fixed).
    """
    if axis not in ("r_w", "r_o", "gamma"):
        raise ValueError(f"unknown axis {axis!r}")
    others = [a for a in ("mode", "r_w", "r_o", "gamma") if a != axis]
    lines = {}
    for row in rows:
        if row.status != "ok":
            continue
        key = tuple(getattr(row, a) for a in others)
        lines.setdefault(key, []).append(row)
    out = []
    for key, members in lines.items():
        if len(members) < 2:
            continue
        x = np.concatenate([np.full(r.batch_margins.size, getattr(r, axis)) for r in members])
        y = np.concatenate([r.batch_margins for r in members])
        res = stats.spearmanr(x, y)
        out.append((dict(zip(others, key)), float(res.statistic), float(res.pvalue)))
    return out
