"""JSON run configuration.

Schema (every key optional; defaults shown by ``mtsched <cmd> --dump-config``)::

    {
      "seed": 0,
      "market":        {"c1", "c2", "c_p", "u_cap", "v_cap", "M", "K"},
      "wind":          {"theta": float | [float]*M, "sigma"},
      "traditional":   {"alpha_t", "gamma_t", "sigma_t"},
      "opportunistic": {"lambda_o", "T2", "gamma_o", "v_min", "E_o"},
      "solver":        {"price_grid_points", "quadrature"},
      "persistent":    {"s_grid", "u_grid", "price_grid", "P_max", "N_max", "w_bins",
                        "d_bins", "n_quad", "family", "max_sweeps", "max_operations"},
      "simulate":      {"days", "sampling"},
      "experiment":    {"mode", "r_w", "r_o", "gamma", "replicates", "batches",
                        "wind_sd_ratio", "condition_a_threshold",
                        "benchmark_u_points", "benchmark_s_points", "paired"}
    }

Unknown keys are rejected with a :class:`ConfigError` naming the key.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .harness import BaseModel, ExperimentSpec
from .models import (MarketParams, Models, OpportunisticModel, TraditionalDemandModel,
                     WindModel, broadcast_slots)
from .persistent import PersistentGrids


@dataclass
class MarketSection:
    c1: float = 1.0
    c2: float = 2.0
    c_p: float = 0.5
    u_cap: float = 5.0
    v_cap: float = 6.0
    M: int = 1
    K: int = 4


@dataclass
class WindSection:
    theta: object = 10.0
    sigma: float = 3.0


@dataclass
class TraditionalSection:
    alpha_t: object = 100.0
    gamma_t: object = -0.5
    sigma_t: float = 0.0


@dataclass
class OpportunisticSection:
    lambda_o: object = 50.0
    T2: float = 1.0
    gamma_o: float = -2.0
    v_min: float = 0.8
    E_o: float = 1.0


@dataclass
class SolverSection:
    price_grid_points: int = 2001
    quadrature: str = "piecewise"


@dataclass
class PersistentSection:
    s_grid: list = field(default_factory=lambda: [0.0, 5.0, 10.0])
    u_grid: list = field(default_factory=lambda: [2.0, 5.0])
    price_grid: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    P_max: int | None = None
    N_max: int | None = None
    w_bins: int = 3
    d_bins: int = 3
    n_quad: int = 5
    family: str = "coordinate"
    max_sweeps: int = 20
    max_operations: float | None = 1e10


@dataclass
class SimulateSection:
    days: int = 10_000
    sampling: str = "continuous"


@dataclass
class ExperimentSection:
    mode: str = "nonpersistent"
    r_w: list = field(default_factory=lambda: [0.2])
    r_o: list = field(default_factory=lambda: [0.2])
    gamma: list | None = None
    replicates: int = 10_000
    batches: int = 100
    wind_sd_ratio: float = 0.5
    condition_a_threshold: float = 0.01
    benchmark_u_points: int = 2001
    benchmark_s_points: int = 801
    paired: bool = False  # also run the benchmark in every cell


_SECTIONS = {
    "market": MarketSection,
    "wind": WindSection,
    "traditional": TraditionalSection,
    "opportunistic": OpportunisticSection,
    "solver": SolverSection,
    "persistent": PersistentSection,
    "simulate": SimulateSection,
    "experiment": ExperimentSection,
}


@dataclass
class Config:
    seed: int = 0
    market: MarketSection = field(default_factory=MarketSection)
    wind: WindSection = field(default_factory=WindSection)
    traditional: TraditionalSection = field(default_factory=TraditionalSection)
    opportunistic: OpportunisticSection = field(default_factory=OpportunisticSection)
    solver: SolverSection = field(default_factory=SolverSection)
    persistent: PersistentSection = field(default_factory=PersistentSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    # -- builders (each re-validates the module invariants) --------------------

    def market_params(self) -> MarketParams:
        return MarketParams(**dataclasses.asdict(self.market))

    def models(self) -> Models:
        M = self.market.M
        w, t, o = self.wind, self.traditional, self.opportunistic
        return Models(
            WindModel(broadcast_slots(w.theta, M), w.sigma),
            TraditionalDemandModel(broadcast_slots(t.alpha_t, M), broadcast_slots(t.gamma_t, M),
                                   t.sigma_t),
            OpportunisticModel(broadcast_slots(o.lambda_o, M), o.T2, o.gamma_o, o.v_min, o.E_o),
        )

    def grids(self) -> PersistentGrids:
        from .persistent import default_P_max
        p = self.persistent
        P_max = p.P_max if p.P_max is not None else default_P_max(self.models().opportunistic,
                                                                   self.market.K)
        return PersistentGrids(p.s_grid, p.u_grid, p.price_grid, P_max, p.N_max, p.w_bins,
                               p.d_bins, p.n_quad, p.family, p.max_sweeps)

    def experiment_spec(self) -> ExperimentSpec:
        e = dataclasses.asdict(self.experiment)
        e.pop("paired")
        e["gamma"] = None if e["gamma"] is None else tuple(e["gamma"])
        e["r_w"], e["r_o"] = tuple(e["r_w"]), tuple(e["r_o"])
        return ExperimentSpec(**e)

    def base_model(self, with_grids: bool = False) -> BaseModel:
        return BaseModel(self.market_params(), self.models(),
                         self.grids() if with_grids else None,
                         self.persistent.max_operations)

    def validate(self, with_grids: bool = False) -> "Config":
        """Build every model object once so invalid values fail early."""
        for key in ("P_max", "N_max"):
            val = getattr(self.persistent, key)
            if val is not None and (not isinstance(val, int) or isinstance(val, bool)):
                raise ConfigError(f"persistent.{key}: expected an integer or null, got {val!r}")
        gamma = self.experiment.gamma
        if gamma is not None and not isinstance(gamma, list):
            raise ConfigError(f"experiment.gamma: expected a list or null, got {gamma!r}")
        self.base_model(with_grids)
        self.experiment_spec()
        if self.solver.quadrature not in ("piecewise", "quad", "gauss-hermite"):
            raise ConfigError("solver.quadrature: must be piecewise, quad or gauss-hermite")
        if self.solver.price_grid_points < 2:
            raise ConfigError("solver.price_grid_points: need at least 2 points")
        if self.simulate.days < 1:
            raise ConfigError("simulate.days: must be >= 1")
        if self.simulate.sampling not in ("continuous", "quadrature"):
            raise ConfigError("simulate.sampling: must be continuous or quadrature")
        return self


# per-slot parameters accept a scalar or a list of length M
_PER_SLOT = {"wind.theta", "traditional.alpha_t", "traditional.gamma_t", "opportunistic.lambda_o"}


def _check_type(path, value, default):
    if path in _PER_SLOT:
        items = value if isinstance(value, list) else [value]
        if not items or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                for x in items):
            raise ConfigError(f"{path}: expected a number or a list of numbers, got {value!r}")
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int) and not isinstance(default, bool):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{path}: expected {type(default).__name__}, got {value!r}")


def _section_from(name, cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{name}.{key}: unknown key")
    default = cls()
    for key, value in data.items():
        _check_type(f"{name}.{key}", value, getattr(default, key))
    return cls(**data)


def from_dict(data: dict) -> Config:
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    for key in data:
        if key != "seed" and key not in _SECTIONS:
            raise ConfigError(f"{key}: unknown key")
    kwargs = {name: _section_from(name, cls, data[name])
              for name, cls in _SECTIONS.items() if name in data}
    if "seed" in data:
        _check_type("seed", data["seed"], 0)
        kwargs["seed"] = data["seed"]
    try:
        return Config(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load(path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: malformed JSON ({exc})") from None
    return from_dict(data)


def to_dict(cfg: Config) -> dict:
    """Fully resolved configuration (every default explicit)."""
    out = {"seed": cfg.seed}
    for name in _SECTIONS:
        out[name] = dataclasses.asdict(getattr(cfg, name))
    return out


def dumps(cfg: Config) -> str:
    return json.dumps(to_dict(cfg), sort_keys=True, indent=1) + "\n"
