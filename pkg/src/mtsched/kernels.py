"""Hot numeric kernels.

Each kernel has a numba implementation (``*_nb``) and a pure-numpy one
(``*_np``). The public names bind to the numba version unless numba is
missing or ``MTSCHED_DISABLE_NUMBA=1`` is set.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import stats

from ._accel import NUMBA_OK, njit

EVENT_A, EVENT_B, EVENT_C = 0, 1, 2


# -- realized T2-slot profit -------------------------------------------------


def realized_profit_np(u, v, s, W, D_t, D_o, c1, c2, c_p):
    """Vectorized realized profit and event code for arrays of scenarios."""
    W = np.asarray(W, dtype=float)
    D_t = np.asarray(D_t, dtype=float)
    D_o = np.asarray(D_o, dtype=float)
    W, D_t, D_o, v, s, u = np.broadcast_arrays(W, D_t, D_o, np.asarray(v, float),
                                               np.asarray(s, float), np.asarray(u, float))
    eps = W + s - (D_t + D_o)
    is_a = W >= D_t + D_o
    is_c = (~is_a) & (eps < 0)
    cost = np.where(is_a, -c_p * s,
                    np.where(is_c, -c1 * s + c2 * eps, -c_p * eps - c1 * (s - eps)))
    event = np.where(is_a, EVENT_A, np.where(is_c, EVENT_C, EVENT_B)).astype(np.int8)
    return u * D_t + v * D_o + cost, event


@njit(cache=True)
def _realized_profit_loop(u, v, s, W, D_t, D_o, c1, c2, c_p, profit, event):
    for i in range(W.size):
        eps = W[i] + s[i] - (D_t[i] + D_o[i])
        if W[i] >= D_t[i] + D_o[i]:
            cost = -c_p * s[i]
            event[i] = 0
        elif eps < 0.0:
            cost = -c1 * s[i] + c2 * eps
            event[i] = 2
        else:
            cost = -c_p * eps - c1 * (s[i] - eps)
            event[i] = 1
        profit[i] = u[i] * D_t[i] + v[i] * D_o[i] + cost


def realized_profit_nb(u, v, s, W, D_t, D_o, c1, c2, c_p):
    arrs = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (u, v, s, W, D_t, D_o)))
    shape = arrs[0].shape
    flat = [np.ascontiguousarray(a).ravel() for a in arrs]
    profit = np.empty(flat[0].size)
    event = np.empty(flat[0].size, dtype=np.int8)
    _realized_profit_loop(*flat, float(c1), float(c2), float(c_p), profit, event)
    return profit.reshape(shape), event.reshape(shape)


# -- binomial / poisson building blocks ------------------------------------


@njit(cache=True)
def _binom_pmf(k, n, p):
    if k < 0 or k > n:
        return 0.0
    if p <= 0.0:
        return 1.0 if k == 0 else 0.0
    if p >= 1.0:
        return 1.0 if k == n else 0.0
    logc = math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)
    return math.exp(logc + k * math.log(p) + (n - k) * math.log1p(-p))


def truncated_poisson_pmf(mean: float, n_max: int) -> np.ndarray:
    """Poisson(mean) pmf on 0..n_max, renormalized to sum to one."""
    if mean <= 0:
        pmf = np.zeros(n_max + 1)
        pmf[0] = 1.0
        return pmf
    pmf = stats.poisson.pmf(np.arange(n_max + 1), mean)
    return pmf / pmf.sum()


# -- carry-over transition tensor -------------------------------------------


def transition_tensor_np(pois_pmf, p_acc, P_max):
    """T[j, P, P'] = P(carry-over P' | carried-in P, price j), folded at P_max."""
    pois_pmf = np.asarray(pois_pmf, float)
    p_acc = np.asarray(p_acc, float)
    n_max = pois_pmf.size - 1
    out = np.zeros((p_acc.size, P_max + 1, P_max + 1))
    P = np.arange(P_max + 1)
    stay = np.arange(n_max + P_max + 1)
    for N in range(n_max + 1):
        if pois_pmf[N] == 0:
            continue
        total = N + P  # (P_max+1,)
        # pmf[j, P, r] of r rejecters out of N+P
        pmf = stats.binom.pmf(stay[None, None, :], total[None, :, None],
                              1.0 - p_acc[:, None, None])
        folded = pmf[:, :, :P_max].copy()
        tail = pmf[:, :, P_max:].sum(axis=2)
        out[:, :, :P_max] += pois_pmf[N] * folded
        out[:, :, P_max] += pois_pmf[N] * tail
    return out


@njit(cache=True)
def _transition_tensor_loop(pois_pmf, p_acc, P_max, out):
    n_max = pois_pmf.size - 1
    for j in range(p_acc.size):
        q = 1.0 - p_acc[j]
        for P in range(P_max + 1):
            for N in range(n_max + 1):
                w = pois_pmf[N]
                if w == 0.0:
                    continue
                n = N + P
                for r in range(n + 1):
                    b = _binom_pmf(r, n, q)
                    if r >= P_max:
                        out[j, P, P_max] += w * b
                    else:
                        out[j, P, r] += w * b


def transition_tensor_nb(pois_pmf, p_acc, P_max):
    pois_pmf = np.ascontiguousarray(pois_pmf, dtype=float)
    p_acc = np.ascontiguousarray(p_acc, dtype=float)
    out = np.zeros((p_acc.size, P_max + 1, P_max + 1))
    _transition_tensor_loop(pois_pmf, p_acc, int(P_max), out)
    return out


# -- expected lower-slot reward table ----------------------------------------


def lower_reward_table_np(W_nodes, D_nodes, s, u, prices, p_acc, pois_pmf, P_max, E_o,
                          c1, c2, c_p):
    """r[iw, id, P, j]: expected T2-slot profit at wind node iw, demand node id,
    carried-in count P and real-time price index j, averaged over arrivals and
    acceptances.
    """
    W = np.asarray(W_nodes, float)[:, None, None, None, None]
    D = np.asarray(D_nodes, float)[None, :, None, None, None]
    prices = np.asarray(prices, float)
    p_acc = np.asarray(p_acc, float)
    pois_pmf = np.asarray(pois_pmf, float)
    n_max = pois_pmf.size - 1
    P = np.arange(P_max + 1)
    a = np.arange(n_max + P_max + 1)
    # pmf over active count a for each (P, j) given N, then mix over N
    r = np.zeros((W.shape[0], D.shape[1], P_max + 1, prices.size))
    for N in range(n_max + 1):
        if pois_pmf[N] == 0:
            continue
        pmf = stats.binom.pmf(a[None, None, :], (N + P)[:, None, None], p_acc[None, :, None])
        D_o = a * E_o
        profit, _ = realized_profit_np(u, prices[None, None, None, :, None], s, W, D,
                                       D_o[None, None, None, None, :], c1, c2, c_p)
        r += pois_pmf[N] * np.einsum("xyja,Pja->xyPj", profit[:, :, 0], pmf)
    return r


@njit(cache=True)
def _lower_reward_loop(W_nodes, D_nodes, s, u, prices, p_acc, pois_pmf, P_max, E_o,
                       c1, c2, c_p, out):
    n_max = pois_pmf.size - 1
    # mixed pmf of the active count, built once per (P, j) and reused at every node
    mix = np.empty(n_max + P_max + 1)
    for P in range(P_max + 1):
        for j in range(prices.size):
            v = prices[j]
            mix[:] = 0.0
            for N in range(n_max + 1):
                w = pois_pmf[N]
                if w == 0.0:
                    continue
                n = N + P
                for a in range(n + 1):
                    mix[a] += w * _binom_pmf(a, n, p_acc[j])
            for iw in range(W_nodes.size):
                W = W_nodes[iw]
                for i_d in range(D_nodes.size):
                    D = D_nodes[i_d]
                    acc = 0.0
                    for a in range(n_max + P + 1):
                        b = mix[a]
                        if b == 0.0:
                            continue
                        D_o = a * E_o
                        eps = W + s - (D + D_o)
                        if W >= D + D_o:
                            cost = -c_p * s
                        elif eps < 0.0:
                            cost = -c1 * s + c2 * eps
                        else:
                            cost = -c_p * eps - c1 * (s - eps)
                        acc += b * (u * D + v * D_o + cost)
                    out[iw, i_d, P, j] = acc


def lower_reward_table_nb(W_nodes, D_nodes, s, u, prices, p_acc, pois_pmf, P_max, E_o,
                          c1, c2, c_p):
    W_nodes = np.ascontiguousarray(W_nodes, dtype=float)
    D_nodes = np.ascontiguousarray(D_nodes, dtype=float)
    prices = np.ascontiguousarray(prices, dtype=float)
    p_acc = np.ascontiguousarray(p_acc, dtype=float)
    pois_pmf = np.ascontiguousarray(pois_pmf, dtype=float)
    out = np.empty((W_nodes.size, D_nodes.size, P_max + 1, prices.size))
    _lower_reward_loop(W_nodes, D_nodes, float(s), float(u), prices, p_acc, pois_pmf,
                       int(P_max), float(E_o), float(c1), float(c2), float(c_p), out)
    return out


if NUMBA_OK:
    realized_profit = realized_profit_nb
    transition_tensor = transition_tensor_nb
    lower_reward_table = lower_reward_table_nb
else:
    realized_profit = realized_profit_np
    transition_tensor = transition_tensor_np
    lower_reward_table = lower_reward_table_np

BACKEND = "numba" if NUMBA_OK else "numpy"
