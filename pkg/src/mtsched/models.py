"""Market parameters and the stochastic primitives: wind, traditional demand,
opportunistic arrivals and price acceptance.

Slot indices are 0-based (``0 <= m < M``). Per-slot parameters are stored as
float arrays of length M; :func:`broadcast_slots` expands scalars.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigError, DomainError


def broadcast_slots(value, M: int) -> np.ndarray:
    """Return ``value`` as a float array of length ``M`` (scalars are repeated)."""
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise ConfigError(f"per-slot parameter must be scalar or 1-D, got shape {arr.shape}")
    if arr.size == 1:
        return np.full(M, arr[0])
    if arr.size != M:
        raise ConfigError(f"per-slot parameter has {arr.size} entries, expected {M}")
    return arr.copy()


def _as_slot_array(name, value) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float)).copy()
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigError(f"{name} must be a non-empty 1-D array")
    arr.setflags(write=False)
    return arr


def _check_slot(m, n_slots: int) -> int:
    if isinstance(m, (bool, np.bool_)) or not isinstance(m, (int, np.integer)):
        raise DomainError(f"slot index must be an integer, got {m!r}")
    if not 0 <= m < n_slots:
        raise DomainError(f"slot index {m} outside [0, {n_slots})")
    return int(m)


@dataclass(frozen=True)
class MarketParams:
    c1: float
    c2: float
    c_p: float
    u_cap: float
    v_cap: float
    M: int
    K: int

    def __post_init__(self):
        if not self.c2 > self.c1 > 0:
            raise ConfigError(f"market.c1/c2: need c2 > c1 > 0, got c1={self.c1}, c2={self.c2}")
        if self.c_p < 0:
            raise ConfigError(f"market.c_p: must be >= 0, got {self.c_p}")
        if self.u_cap <= 0:
            raise ConfigError(f"market.u_cap: must be > 0, got {self.u_cap}")
        if self.v_cap <= 0:
            raise ConfigError(f"market.v_cap: must be > 0, got {self.v_cap}")
        if int(self.M) != self.M or self.M < 1:
            raise ConfigError(f"market.M: must be a positive integer, got {self.M}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"market.K: must be a positive integer, got {self.K}")

    @property
    def c(self) -> float:
        """Composite surplus cost c_p - c1 + c2 (always > 0 given c2 > c1)."""
        return self.c_p - self.c1 + self.c2


@dataclass(frozen=True, eq=False)
class WindModel:
    """Per-T2-slot wind output, Gaussian with slot mean ``theta[m]`` and a shared sd."""

    theta: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "theta", _as_slot_array("wind.theta", self.theta))
        if self.sigma < 0:
            raise ConfigError(f"wind.sigma: must be >= 0, got {self.sigma}")
        if np.any(self.theta < 0):
            raise ConfigError("wind.theta: means must be >= 0")

    @property
    def n_slots(self) -> int:
        return self.theta.size


@dataclass(frozen=True, eq=False)
class TraditionalDemandModel:
    alpha_t: np.ndarray
    gamma_t: np.ndarray
    sigma_t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha_t", _as_slot_array("traditional.alpha_t", self.alpha_t))
        object.__setattr__(self, "gamma_t", _as_slot_array("traditional.gamma_t", self.gamma_t))
        if self.alpha_t.size != self.gamma_t.size:
            raise ConfigError("traditional.alpha_t and gamma_t must have the same length")
        if np.any(self.gamma_t >= 0):
            raise ConfigError("traditional.gamma_t: elasticities must be negative")
        if np.any(self.alpha_t < 0):
            raise ConfigError("traditional.alpha_t: must be >= 0")
        if self.sigma_t < 0:
            raise ConfigError(f"traditional.sigma_t: must be >= 0, got {self.sigma_t}")

    @property
    def n_slots(self) -> int:
        return self.alpha_t.size


@dataclass(frozen=True, eq=False)
class OpportunisticModel:
    """Poisson arrivals per T2-slot, each accepting price v with prob. min(1, (v/v_min)^gamma_o)."""

    lambda_o: np.ndarray
    T2: float
    gamma_o: float
    v_min: float
    E_o: float

    def __post_init__(self):
        object.__setattr__(self, "lambda_o", _as_slot_array("opportunistic.lambda_o", self.lambda_o))
        if np.any(self.lambda_o < 0):
            raise ConfigError("opportunistic.lambda_o: rates must be >= 0")
        if self.T2 <= 0:
            raise ConfigError(f"opportunistic.T2: must be > 0, got {self.T2}")
        if self.gamma_o >= 0:
            raise ConfigError(f"opportunistic.gamma_o: must be negative, got {self.gamma_o}")
        if self.v_min <= 0:
            raise ConfigError(f"opportunistic.v_min: must be > 0, got {self.v_min}")
        if self.E_o <= 0:
            raise ConfigError(f"opportunistic.E_o: must be > 0, got {self.E_o}")

    @property
    def n_slots(self) -> int:
        return self.lambda_o.size

    @property
    def alpha_o(self) -> float:
        return self.v_min ** (-self.gamma_o)

    def kappa1(self, m: int) -> float:
        """Mean arrivals per T2-slot in slot ``m``."""
        m = _check_slot(m, self.n_slots)
        return float(self.lambda_o[m] * self.T2)


@dataclass(frozen=True, eq=False)
class Models:
    """The three stochastic primitives bundled for a market."""

    wind: WindModel
    traditional: TraditionalDemandModel
    opportunistic: OpportunisticModel

    def __post_init__(self):
        sizes = {self.wind.n_slots, self.traditional.n_slots, self.opportunistic.n_slots}
        if len(sizes) != 1:
            raise ConfigError(f"per-slot arrays disagree on the number of slots: {sorted(sizes)}")

    @property
    def n_slots(self) -> int:
        return self.wind.n_slots


# -- sampling ---------------------------------------------------------------


def _truncated_normal(mean: float, sd: float, rng: np.random.Generator, size):
    if sd == 0:
        val = max(mean, 0.0)
        return val if size is None else np.full(size, val)
    a = (0.0 - mean) / sd
    out = stats.truncnorm.rvs(a, np.inf, loc=mean, scale=sd, size=size, random_state=rng)
    return float(out) if size is None else out


def sample_wind(model: WindModel, m: int, rng: np.random.Generator, size=None):
    """Draw W ~ N(theta_m, sigma^2) truncated below at 0."""
    m = _check_slot(m, model.n_slots)
    return _truncated_normal(float(model.theta[m]), model.sigma, rng, size)


def traditional_demand_mean(model: TraditionalDemandModel, m: int, u):
    """alpha_t * u**gamma_t for day-ahead price u > 0."""
    m = _check_slot(m, model.n_slots)
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0):
        raise DomainError(f"day-ahead price must be > 0, got {u}")
    out = model.alpha_t[m] * u_arr ** model.gamma_t[m]
    return float(out) if out.ndim == 0 else out


def sample_traditional_demand(model: TraditionalDemandModel, m: int, u: float,
                              rng: np.random.Generator, size=None):
    """Mean demand at price u plus zero-mean Gaussian noise, truncated so demand >= 0."""
    mean = traditional_demand_mean(model, m, u)
    return _truncated_normal(mean, model.sigma_t, rng, size)


def sample_opportunistic_demand(model: OpportunisticModel, m: int, v, rng: np.random.Generator,
                                size=None):
    """Exact thinned-Poisson draw of D_o = N_a * E_o at real-time price ``v``.

    ``v`` may be an array of the same shape as ``size``.
    """
    p = acceptance_prob(model, v)
    n = rng.poisson(model.kappa1(m), size=size)
    n_active = rng.binomial(n, p)
    return n_active * model.E_o


# -- opportunistic response ------------------------------------------------


def acceptance_prob(model: OpportunisticModel, v):
    """P(V >= v) = min(1, alpha_o * v**gamma_o)."""
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr <= 0):
        raise DomainError(f"real-time price must be > 0, got {v}")
    p = np.minimum(1.0, (v_arr / model.v_min) ** model.gamma_o)
    return float(p) if p.ndim == 0 else p


def opportunistic_demand_moments(model: OpportunisticModel, m: int, v):
    """Gaussian approximation (mean, variance) of opportunistic demand at price ``v``."""
    k1 = model.kappa1(m)
    p = acceptance_prob(model, v)
    return k1 * p * model.E_o, k1 * p * model.E_o ** 2


def q_o(model: OpportunisticModel, m: int, v):
    """Mean opportunistic demand at price ``v``."""
    return opportunistic_demand_moments(model, m, v)[0]


def q_o_inverse(model: OpportunisticModel, m: int, Y, v_cap: float = np.inf):
    """Price at which mean opportunistic demand equals ``Y``, clamped to [v_min, v_cap].

    Raises DomainError for ``Y <= 0``: no price clears a non-positive
    procurement, so the caller should take the deficit branch instead.
    """
    Y_arr = np.asarray(Y, dtype=float)
    if np.any(Y_arr <= 0):
        raise DomainError("q_o_inverse needs Y > 0 (deficit branch applies)")
    scale = model.kappa1(m) * model.alpha_o * model.E_o
    if scale == 0:
        out = np.full_like(Y_arr, model.v_min)
    else:
        out = (Y_arr / scale) ** (1.0 / model.gamma_o)
    out = np.clip(out, model.v_min, max(model.v_min, v_cap))
    return float(out) if out.ndim == 0 else out


def sigma_Y(wind: WindModel, trad: TraditionalDemandModel) -> float:
    """sd of the net procurement Y = s + W - D_t at fixed day-ahead decisions."""
    return float(np.hypot(wind.sigma, trad.sigma_t))
