"""Scheduling with persistent opportunistic users as a finite-horizon MDP.

Users who reject a real-time price stay for the next T2-slot, so the number
of carried-over users couples slots. The day-ahead action for T1-slot m is
``(s_m, u_m, zeta_m)`` where ``zeta_m`` is a stationary real-time pricing
rule: a lookup table from (wind bin, demand bin, carried-over count) to an
index in the real-time price grid. With that action the problem is an
ordinary MDP over the carried-over count ``P_u`` and is solved by backward
induction.

Expectations over wind and traditional demand use Gauss-Hermite nodes
(clipped at zero); arrivals are Poisson truncated at ``N_max`` and
renormalized; carried-over counts above ``P_max`` are folded into ``P_max``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from .errors import BudgetError, ConfigError
from .models import (MarketParams, Models, OpportunisticModel, acceptance_prob,
                     traditional_demand_mean)
from .quadrature import standard_nodes

FAMILIES = ("constant", "coordinate", "exhaustive")
_BIN_EDGES = {1: np.array([]), 2: np.array([0.0]), 3: np.array([-1.0, 1.0])}
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class PersistentGrids:
    s_grid: tuple
    u_grid: tuple
    price_grid: tuple
    P_max: int
    N_max: int | None = None  # None: ceil(kappa1 + 6 sqrt(kappa1)) per slot
    w_bins: int = 3
    d_bins: int = 3
    n_quad: int = 5
    family: str = "coordinate"
    max_sweeps: int = 20

    def __post_init__(self):
        for name in ("s_grid", "u_grid", "price_grid"):
            vals = tuple(float(x) for x in getattr(self, name))
            if not vals:
                raise ConfigError(f"persistent.{name}: empty action grid")
            if list(vals) != sorted(set(vals)):
                raise ConfigError(f"persistent.{name}: must be strictly increasing")
            object.__setattr__(self, name, vals)
        if self.s_grid[0] < 0:
            raise ConfigError("persistent.s_grid: procurement must be >= 0")
        if self.u_grid[0] <= 0:
            raise ConfigError("persistent.u_grid: prices must be > 0")
        if self.price_grid[0] <= 0:
            raise ConfigError("persistent.price_grid: prices must be > 0")
        if self.P_max < 0:
            raise ConfigError("persistent.P_max: must be >= 0")
        if self.N_max is not None and self.N_max < 0:
            raise ConfigError("persistent.N_max: must be >= 0")
        if self.w_bins not in _BIN_EDGES or self.d_bins not in _BIN_EDGES:
            raise ConfigError("persistent.w_bins/d_bins: must be 1, 2 or 3")
        if self.n_quad < 1:
            raise ConfigError("persistent.n_quad: need at least one node")
        if self.family not in FAMILIES:
            raise ConfigError(f"persistent.family: must be one of {FAMILIES}")

    @property
    def zeta_shape(self):
        return (self.w_bins, self.d_bins, self.P_max + 1)

    @property
    def n_cells(self) -> int:
        return self.w_bins * self.d_bins * (self.P_max + 1)

    def validate_against(self, params: MarketParams, opp: OpportunisticModel):
        if self.u_grid[-1] > params.u_cap:
            raise ConfigError("persistent.u_grid: prices above u_cap")
        if self.price_grid[0] < opp.v_min or self.price_grid[-1] > params.v_cap:
            raise ConfigError("persistent.price_grid: prices must lie in [v_min, v_cap]")


def default_P_max(opp: OpportunisticModel, K: int) -> int:
    kappa = float(np.max(opp.lambda_o) * opp.T2)
    return 4 * math.ceil(kappa * K)


def default_N_max(kappa1: float) -> int:
    return math.ceil(kappa1 + 6 * math.sqrt(kappa1))


def bin_index(z, n_bins: int):
    """Bin of a standardized value: 1 bin = all; 2 = split at 0; 3 = split at +-1."""
    return np.searchsorted(_BIN_EDGES[n_bins], np.asarray(z, dtype=float), side="left")


@dataclass(frozen=True)
class PersistentLowerState:
    W: float
    D_t: float
    P_l: int

    def __post_init__(self):
        if self.W < 0 or self.D_t < 0 or self.P_l < 0 or int(self.P_l) != self.P_l:
            raise ConfigError(f"invalid lower state {self}")


@dataclass(frozen=True, eq=False)
class UpperAction:
    s: float
    u: float
    zeta: np.ndarray  # int price indices, shape (w_bins, d_bins, P_max + 1)

    def price(self, grids: PersistentGrids, w_bin: int, d_bin: int, P_l: int) -> float:
        return grids.price_grid[int(self.zeta[w_bin, d_bin, min(P_l, grids.P_max)])]


# -- transition kernels ------------------------------------------------------


def active_count_pmf(opp: OpportunisticModel, N: int, P_l: int, v: float) -> np.ndarray:
    """pmf of the number of active users among N arrivals plus P_l carried over."""
    n = int(N) + int(P_l)
    return stats.binom.pmf(np.arange(n + 1), n, acceptance_prob(opp, v))


def persistent_transition_pmf(opp: OpportunisticModel, m: int, P_l: int, v: float, P_max: int,
                              N_max: int | None = None) -> np.ndarray:
    """pmf of the next carried-over count (length P_max + 1, overflow folded)."""
    kappa = opp.kappa1(m)
    if N_max is None:
        N_max = default_N_max(kappa)
    pois = kernels.truncated_poisson_pmf(kappa, N_max)
    q = 1.0 - acceptance_prob(opp, v)
    out = np.zeros(P_max + 1)
    for N, w in enumerate(pois):
        n = N + int(P_l)
        pmf = stats.binom.pmf(np.arange(n + 1), n, q)
        out[:min(n + 1, P_max)] += w * pmf[:P_max]
        out[P_max] += w * pmf[P_max:].sum()
    return out


# -- per-slot expectation tables ---------------------------------------------


@dataclass
class SlotTables:
    """Everything needed to evaluate any action in T1-slot ``m``."""

    m: int
    w_bin_of_node: np.ndarray
    d_bin_of_node: np.ndarray
    w_bin_prob: np.ndarray
    d_bin_prob: np.ndarray
    transitions: np.ndarray  # (J, P+1, P+1)
    rewards: dict = field(default_factory=dict)  # (i_s, i_u) -> (w_bins, d_bins, P+1, J)
    N_max: int = 0


def _nodes(grids: PersistentGrids, mean: float, sd: float):
    z, p = standard_nodes(grids.n_quad)
    if sd == 0:
        z, p = np.array([0.0]), np.array([1.0])
    return np.maximum(mean + sd * z, 0.0), z, p


def build_slot_tables(params: MarketParams, models: Models, m: int,
                      grids: PersistentGrids) -> SlotTables:
    opp = models.opportunistic
    kappa = opp.kappa1(m)
    N_max = grids.N_max if grids.N_max is not None else default_N_max(kappa)
    pois = kernels.truncated_poisson_pmf(kappa, N_max)
    prices = np.asarray(grids.price_grid)
    p_acc = acceptance_prob(opp, prices)
    T = kernels.transition_tensor(pois, np.atleast_1d(p_acc), grids.P_max)

    W_nodes, zw, pw = _nodes(grids, float(models.wind.theta[m]), models.wind.sigma)
    _, zd, pd = _nodes(grids, 0.0, models.traditional.sigma_t)
    bw = bin_index(zw, grids.w_bins)
    bd = bin_index(zd, grids.d_bins)
    w_bin_prob = np.bincount(bw, weights=pw, minlength=grids.w_bins)
    d_bin_prob = np.bincount(bd, weights=pd, minlength=grids.d_bins)
    tables = SlotTables(m, bw, bd, w_bin_prob, d_bin_prob, T, N_max=N_max)

    for i_u, u in enumerate(grids.u_grid):
        mean_t = traditional_demand_mean(models.traditional, m, u)
        D_nodes = np.maximum(mean_t + models.traditional.sigma_t * zd, 0.0)
        for i_s, s in enumerate(grids.s_grid):
            r = kernels.lower_reward_table(W_nodes, D_nodes, s, u, prices, np.atleast_1d(p_acc),
                                           pois, grids.P_max, opp.E_o, params.c1, params.c2,
                                           params.c_p)
            # aggregate node weights into (w_bin, d_bin) cells
            weighted = r * (pw[:, None, None, None] * pd[None, :, None, None])
            binned = np.zeros((grids.w_bins, grids.d_bins) + r.shape[2:])
            np.add.at(binned, (bw[:, None], bd[None, :]), weighted)
            tables.rewards[(i_s, i_u)] = binned
    return tables


def _rule_arrays(tables: SlotTables, grids: PersistentGrids, i_s: int, i_u: int, zeta):
    """Expected one-slot reward r[P] and carry-over matrix T[P, P'] under ``zeta``."""
    binned = tables.rewards[(i_s, i_u)]
    P = np.arange(grids.P_max + 1)
    wb, db = np.meshgrid(np.arange(grids.w_bins), np.arange(grids.d_bins), indexing="ij")
    picks = zeta[wb[..., None], db[..., None], P]  # (w_bins, d_bins, P+1)
    r = np.take_along_axis(binned, picks[..., None], axis=3)[..., 0].sum(axis=(0, 1))
    cell_prob = tables.w_bin_prob[:, None] * tables.d_bin_prob[None, :]
    T = np.einsum("xy,xyPq->Pq", cell_prob, tables.transitions[picks, P[None, None, :], :])
    return r, T


def _lower_values(r, T, K: int, terminal=None):
    """Backward recursion over the K T2-slots; returns V[k, P] for k = 0..K-1."""
    V = np.empty((K, r.size))
    nxt = np.zeros(r.size) if terminal is None else terminal
    for k in range(K - 1, -1, -1):
        nxt = r + T @ nxt
        V[k] = nxt
    return V


def immediate_reward_lower(params: MarketParams, models: Models, m: int, action: UpperAction,
                           state: PersistentLowerState, grids: PersistentGrids) -> float:
    """Expected profit of one T2-slot at a realized (W, D_t, P_l), over arrivals and acceptances."""
    opp = models.opportunistic
    mean_t = traditional_demand_mean(models.traditional, m, action.u)
    sd_w, sd_t = models.wind.sigma, models.traditional.sigma_t
    zw = 0.0 if sd_w == 0 else (state.W - models.wind.theta[m]) / sd_w
    zd = 0.0 if sd_t == 0 else (state.D_t - mean_t) / sd_t
    v = action.price(grids, int(bin_index(zw, grids.w_bins)), int(bin_index(zd, grids.d_bins)),
                     state.P_l)
    kappa = opp.kappa1(m)
    N_max = grids.N_max if grids.N_max is not None else default_N_max(kappa)
    pois = kernels.truncated_poisson_pmf(kappa, N_max)
    P = min(int(state.P_l), grids.P_max)
    r = kernels.lower_reward_table(np.array([state.W]), np.array([state.D_t]), action.s, action.u,
                                   np.array([v]), np.atleast_1d(acceptance_prob(opp, v)), pois,
                                   P, opp.E_o, params.c1, params.c2, params.c_p)
    return float(r[0, 0, P, 0])


def lower_value_recursion(params: MarketParams, models: Models, m: int, action: UpperAction,
                          grids: PersistentGrids, tables: SlotTables | None = None):
    """Immediate upper reward R^u_m over the P_u grid, and the lower value surfaces.

    Returns ``(R_u, V_l)`` with ``V_l[k, P]`` the expected profit from T2-slot
    k to the end of the T1-slot given P carried-over users.
    """
    i_s = grids.s_grid.index(float(action.s))
    i_u = grids.u_grid.index(float(action.u))
    if tables is None:
        tables = build_slot_tables(params, models, m, grids)
    r, T = _rule_arrays(tables, grids, i_s, i_u, np.asarray(action.zeta))
    V = _lower_values(r, T, params.K)
    return V[0].copy(), V


def upper_transition(T: np.ndarray, K: int) -> np.ndarray:
    """Distribution of P_u at the next T1-slot given P_u now (K carry-over steps)."""
    return np.linalg.matrix_power(T, K)


# -- action search --------------------------------------------------------------


def constant_tables(grids: PersistentGrids):
    for j in range(len(grids.price_grid)):
        yield np.full(grids.zeta_shape, j, dtype=np.int64)


def exhaustive_tables(grids: PersistentGrids, limit: int = 1_000_000):
    count = len(grids.price_grid) ** grids.n_cells
    if count > limit:
        raise BudgetError(f"exhaustive pricing-rule family has {count} tables (> {limit})")
    for combo in itertools.product(range(len(grids.price_grid)), repeat=grids.n_cells):
        yield np.array(combo, dtype=np.int64).reshape(grids.zeta_shape)


def _better(val, best):
    return val > best + _TIE_RTOL * max(1.0, abs(best))


def _best_rule(tables, grids, K, i_s, i_u, cont, state):
    """Best pricing rule for one (s, u) pair at upper state ``state``."""
    def score(z):
        r, T = _rule_arrays(tables, grids, i_s, i_u, z)
        U = _lower_values(r, T, K, terminal=cont)
        return U[0, state]

    best_z, best_v = None, -np.inf
    family = grids.family
    candidates = exhaustive_tables(grids) if family == "exhaustive" else constant_tables(grids)
    for z in candidates:
        val = score(z)
        if best_z is None or _better(val, best_v):
            best_z, best_v = z, val
    if family != "coordinate":
        return best_z, best_v
    for _ in range(grids.max_sweeps):
        improved = False
        for cell in np.ndindex(*grids.zeta_shape):
            current = best_z[cell]
            for j in range(len(grids.price_grid)):
                if j == current:
                    continue
                trial = best_z.copy()
                trial[cell] = j
                val = score(trial)
                if _better(val, best_v):
                    best_z, best_v, current = trial, val, j
                    improved = True
        if not improved:
            break
    return best_z, best_v


# -- policy table ------------------------------------------------------------------


@dataclass(eq=False)
class PolicyTable:
    params: MarketParams
    grids: PersistentGrids
    values: np.ndarray          # (M, P+1) optimal V^u_m
    immediate: np.ndarray       # (M, P+1) R^u_m at the chosen action
    s_index: np.ndarray         # (M, P+1)
    u_index: np.ndarray         # (M, P+1)
    zeta: np.ndarray            # (M, P+1, w_bins, d_bins, P+1)
    lower_values: np.ndarray    # (M, P+1, K, P+1) V^l_{k,m} at the chosen action
    metadata: dict = field(default_factory=dict)

    def action(self, m: int, P_u: int) -> UpperAction:
        return UpperAction(self.grids.s_grid[self.s_index[m, P_u]],
                           self.grids.u_grid[self.u_index[m, P_u]], self.zeta[m, P_u])

    @property
    def day_value(self) -> float:
        """Expected profit of a whole day (no users carried into the first slot)."""
        return float(self.values[0, 0])


def estimate_work(params: MarketParams, models: Models, grids: PersistentGrids) -> dict:
    """Rough operation counts for :func:`solve_backward`."""
    opp = models.opportunistic
    P1 = grids.P_max + 1
    n_su = len(grids.s_grid) * len(grids.u_grid)
    J = len(grids.price_grid)
    kappa = float(np.max(opp.lambda_o) * opp.T2)
    N1 = (grids.N_max if grids.N_max is not None else default_N_max(kappa)) + 1
    nq_w = 1 if models.wind.sigma == 0 else grids.n_quad
    nq_d = 1 if models.traditional.sigma_t == 0 else grids.n_quad
    table_ops = n_su * nq_w * nq_d * P1 * J * N1 * (N1 + P1)
    if grids.family == "exhaustive":
        rules = J ** grids.n_cells
    elif grids.family == "constant":
        rules = J
    else:
        rules = J + 3 * grids.n_cells * (J - 1)  # start + ~3 sweeps
    eval_ops = P1 * n_su * rules * params.K * P1 * P1
    return {
        "states": params.M * P1,
        "actions_per_state": n_su * rules,
        "operations": int(params.M * (table_ops + eval_ops)),
    }


def solve_backward(params: MarketParams, models: Models, grids: PersistentGrids,
                   max_operations: float | None = None) -> PolicyTable:
    """Backward induction over T1-slots m = M-1 .. 0."""
    grids.validate_against(params, models.opportunistic)
    if models.n_slots != params.M:
        raise ConfigError(f"models have {models.n_slots} slots, market has M={params.M}")
    est = estimate_work(params, models, grids)
    if max_operations is not None and est["operations"] > max_operations:
        raise BudgetError(f"estimated {est['operations']:.3g} operations exceeds budget "
                          f"{max_operations:.3g}")
    M, K, P1 = params.M, params.K, grids.P_max + 1
    values = np.zeros((M, P1))
    immediate = np.zeros((M, P1))
    s_idx = np.zeros((M, P1), dtype=np.int64)
    u_idx = np.zeros((M, P1), dtype=np.int64)
    zetas = np.zeros((M, P1) + grids.zeta_shape, dtype=np.int64)
    lower = np.zeros((M, P1, K, P1))
    cont = np.zeros(P1)  # V^u_{m+1}; zero past the last slot
    for m in range(M - 1, -1, -1):
        tables = build_slot_tables(params, models, m, grids)
        for P_u in range(P1):
            best = None
            for i_u in range(len(grids.u_grid)):
                for i_s in range(len(grids.s_grid)):
                    z, val = _best_rule(tables, grids, K, i_s, i_u, cont, P_u)
                    if best is None or _better(val, best[0]):
                        best = (val, i_s, i_u, z)
            val, i_s, i_u, z = best
            r, T = _rule_arrays(tables, grids, i_s, i_u, z)
            V_l = _lower_values(r, T, K)
            values[m, P_u] = val
            immediate[m, P_u] = V_l[0, P_u]
            s_idx[m, P_u], u_idx[m, P_u], zetas[m, P_u] = i_s, i_u, z
            lower[m, P_u] = V_l
        cont = values[m].copy()
    meta = {
        "zeta_family": grids.family,
        "zeta_domain": f"{grids.w_bins} wind bins x {grids.d_bins} demand bins x "
                       f"{P1} carried-over counts -> {len(grids.price_grid)} prices",
        "work_estimate": est,
        "backend": kernels.BACKEND,
    }
    return PolicyTable(params, grids, values, immediate, s_idx, u_idx, zetas, lower, meta)


# -- brute-force oracle ------------------------------------------------------------


def _expand_paths(params, models, m, grids, s, u, zeta, prob, reward, P):
    """All outcomes of one T2-slot for every current path (vectorized)."""
    opp = models.opportunistic
    kappa = opp.kappa1(m)
    N_max = grids.N_max if grids.N_max is not None else default_N_max(kappa)
    pois = stats.poisson.pmf(np.arange(N_max + 1), kappa) if kappa > 0 else \
        np.r_[1.0, np.zeros(N_max)]
    pois = pois / pois.sum()
    zq, pq = standard_nodes(grids.n_quad)
    if models.wind.sigma == 0:
        zw, pw = np.array([0.0]), np.array([1.0])
    else:
        zw, pw = zq, pq
    if models.traditional.sigma_t == 0:
        zd, pd = np.array([0.0]), np.array([1.0])
    else:
        zd, pd = zq, pq
    W = np.maximum(models.wind.theta[m] + models.wind.sigma * zw, 0.0)
    D = np.maximum(traditional_demand_mean(models.traditional, m, u)
                   + models.traditional.sigma_t * zd, 0.0)
    A = N_max + grids.P_max + 1
    prices = np.asarray(grids.price_grid)
    iw, i_d, N, a = np.meshgrid(np.arange(W.size), np.arange(D.size), np.arange(N_max + 1),
                                np.arange(A), indexing="ij")
    iw, i_d, N, a = (x.ravel() for x in (iw, i_d, N, a))
    out_prob, out_rew, out_P = [], [], []
    for pr, rw, p_in in zip(prob, reward, P):
        v = prices[zeta[bin_index(zw[iw], grids.w_bins), bin_index(zd[i_d], grids.d_bins), p_in]]
        n = N + p_in
        ok = a <= n
        pa = stats.binom.pmf(a, n, acceptance_prob(opp, v))
        w = pr * pw[iw] * pd[i_d] * pois[N] * pa
        keep = ok & (w > 0)
        Wk, Dk, Do = W[iw[keep]], D[i_d[keep]], a[keep] * opp.E_o
        eps = Wk + s - Dk - Do
        cost = np.where(Wk >= Dk + Do, -params.c_p * s,
                        np.where(eps < 0, -params.c1 * s + params.c2 * eps,
                                 -params.c_p * eps - params.c1 * (s - eps)))
        out_prob.append(w[keep])
        out_rew.append(rw + u * Dk + v[keep] * Do + cost)
        out_P.append(np.minimum(n[keep] - a[keep], grids.P_max))
    return np.concatenate(out_prob), np.concatenate(out_rew), np.concatenate(out_P)


def _rule_family(grids):
    if grids.family == "constant":
        return list(constant_tables(grids))
    return list(exhaustive_tables(grids))


def nested_value_enumeration(params: MarketParams, models: Models, grids: PersistentGrids):
    """Day value by explicit expansion of every sample path.

    For each T1-slot and every action in the (exhaustive or constant) rule
    family, all joint outcomes of wind node, demand node, arrivals and
    acceptances across the K T2-slots are expanded and summed; the best
    action is taken at each T1 boundary. No value recursion over T2-slots
    and no transition matrices are used. Only feasible for tiny instances.

    Returns an array V[m, P_u].
    """
    M, P1 = params.M, grids.P_max + 1
    rules = _rule_family(grids)
    V = np.zeros((M + 1, P1))
    for m in range(M - 1, -1, -1):
        for P_u in range(P1):
            best = -np.inf
            for u in grids.u_grid:
                for s in grids.s_grid:
                    for z in rules:
                        prob, rew, P = np.array([1.0]), np.array([0.0]), np.array([P_u])
                        for _ in range(params.K):
                            prob, rew, P = _expand_paths(params, models, m, grids, s, u, z,
                                                         prob, rew, P)
                        total = float(np.sum(prob * (rew + V[m + 1][P])))
                        best = max(best, total)
            V[m, P_u] = best
    return V[:M]


# -- forward simulation --------------------------------------------------------------


@dataclass
class SimulationResult:
    n_days: int
    mean_profit: float
    var_profit: float
    stderr: float
    occupancy: np.ndarray  # (M, K) mean carried-over users entering each T2-slot
    clamped: int
    daily_profit: np.ndarray = field(repr=False, default=None)
    daily_sales: np.ndarray = field(repr=False, default=None)
    event_counts: np.ndarray = field(repr=False, default=None)  # A, B, C over all T2-slots


def simulate_policy(table: PolicyTable, models: Models, rng: np.random.Generator, n_days: int,
                    sampling: str = "continuous") -> SimulationResult:
    """Forward-simulate ``n_days`` independent days under a solved policy.

    ``sampling="continuous"`` draws truncated-Gaussian wind and demand and
    untruncated Poisson arrivals. ``"quadrature"`` draws wind and demand from
    the same quadrature nodes and arrivals from the same truncated pmf the
    solver uses, so the mean daily profit is an unbiased estimate of
    ``table.day_value``.
    """
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    if sampling not in ("continuous", "quadrature"):
        raise ValueError(f"unknown sampling mode {sampling!r}")
    params, grids = table.params, table.grids
    opp = models.opportunistic
    prices = np.asarray(grids.price_grid)
    M, K = params.M, params.K
    profit = np.zeros(n_days)
    sales = np.zeros(n_days)
    events = np.zeros(3, dtype=np.int64)
    occupancy = np.zeros((M, K))
    P = np.zeros(n_days, dtype=np.int64)
    clamped = 0
    zq, pq = standard_nodes(grids.n_quad)
    for m in range(M):
        over = P > grids.P_max
        clamped += int(over.sum())
        P = np.minimum(P, grids.P_max)
        s = np.asarray(grids.s_grid)[table.s_index[m, P]]
        u = np.asarray(grids.u_grid)[table.u_index[m, P]]
        zeta = table.zeta[m, P]  # (n, w_bins, d_bins, P+1)
        theta, sd_w = float(models.wind.theta[m]), models.wind.sigma
        mean_t = traditional_demand_mean(models.traditional, m, u)
        sd_t = models.traditional.sigma_t
        kappa = opp.kappa1(m)
        N_max = grids.N_max if grids.N_max is not None else default_N_max(kappa)
        pois = kernels.truncated_poisson_pmf(kappa, N_max)
        for k in range(K):
            occupancy[m, k] = P.mean()
            if sampling == "quadrature":
                zw = zq[rng.choice(zq.size, size=n_days, p=pq)] if sd_w > 0 else np.zeros(n_days)
                zd = zq[rng.choice(zq.size, size=n_days, p=pq)] if sd_t > 0 else np.zeros(n_days)
                W = np.maximum(theta + sd_w * zw, 0.0)
                D = np.maximum(mean_t + sd_t * zd, 0.0)
                N = rng.choice(N_max + 1, size=n_days, p=pois)
            else:
                W = _trunc_normal(theta, sd_w, rng, n_days)
                D = _trunc_normal(mean_t, sd_t, rng, n_days)
                zw = (W - theta) / sd_w if sd_w > 0 else np.zeros(n_days)
                zd = (D - mean_t) / sd_t if sd_t > 0 else np.zeros(n_days)
                N = rng.poisson(kappa, size=n_days)
            Pc = np.minimum(P, grids.P_max)
            j = zeta[np.arange(n_days), bin_index(zw, grids.w_bins), bin_index(zd, grids.d_bins), Pc]
            v = prices[j]
            n_a = rng.binomial(N + P, acceptance_prob(opp, v))
            D_o = n_a * opp.E_o
            step, ev = kernels.realized_profit(u, v, s, W, D, D_o, params.c1, params.c2,
                                               params.c_p)
            profit += step
            sales += u * D + v * D_o
            events += np.bincount(ev, minlength=3)
            P = N + P - n_a
            over = P > grids.P_max
            clamped += int(over.sum())
            P = np.minimum(P, grids.P_max)
    var = float(profit.var(ddof=1)) if n_days > 1 else 0.0
    return SimulationResult(n_days, float(profit.mean()), var, math.sqrt(var / n_days),
                            occupancy, clamped, profit, sales, events)


def _trunc_normal(mean, sd, rng, n):
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (n,))
    if sd == 0:
        return np.maximum(mean, 0.0).copy()
    a = -mean / sd
    return stats.truncnorm.rvs(a, np.inf, loc=mean, scale=sd, size=n, random_state=rng)
