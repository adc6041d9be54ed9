"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np
from scipy import optimize

from . import config as config_mod
from . import harness, policy_io
from .errors import BudgetError, ConfigError
from .nonpersistent import (condition_a_exceedance, dayahead_S_star, f1, pricing_rule,
                            realtime_price, realtime_price_oracle)
from .persistent import estimate_work, nested_value_enumeration, simulate_policy, solve_backward

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n",
                    encoding="utf-8")


def _prepare(args, with_grids=False):
    cfg = config_mod.load(args.config) if args.config else config_mod.Config()
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.validate(with_grids)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(config_mod.dumps(cfg), encoding="utf-8")
    return cfg, out


def _finite(x):
    return None if not np.isfinite(x) else float(x)


# -- solve-nonpersistent ------------------------------------------------------


def _verify_nonpersistent(cfg, params, models, m, result):
    opp = models.opportunistic
    n = cfg.solver.price_grid_points
    step = (params.v_cap - opp.v_min) / (n - 1)
    rule = pricing_rule(params, opp, m)
    anchors = [y for y in (rule.y_surplus, rule.y_deficit) if np.isfinite(y)] or [0.0]
    span = max(abs(a) for a in anchors) + 1.0
    Ys = np.linspace(-2 * span, 2 * span, 401)
    gap = max(abs(realtime_price(params, opp, m, y) - realtime_price_oracle(params, opp, m, y, n))
              for y in Ys)
    trad = models.traditional
    lo = 0.01 * params.c1
    res = optimize.minimize_scalar(lambda u: -f1(trad, m, u, params.c1), bounds=(lo, params.u_cap),
                                   method="bounded", options={"xatol": 1e-12})
    u_num = float(res.x)
    if -res.fun < f1(trad, m, params.u_cap, params.c1):
        u_num = float(params.u_cap)
    return {
        "price_grid_step": step,
        "max_price_gap": float(gap),
        "price_gap_within_one_step": bool(gap <= step * (1 + 1e-9)),
        "u_star_numeric": u_num,
        "u_star_gap": abs(u_num - result.u),
    }


def cmd_solve_nonpersistent(args) -> int:
    cfg, out = _prepare(args)
    params, models = cfg.market_params(), cfg.models()
    slots = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        for m in range(params.M):
            res = dayahead_S_star(params, models, m, method=cfg.solver.quadrature)
            rule = pricing_rule(params, models.opportunistic, m)
            entry = {
                "m": m,
                "u_star": res.u,
                "S_star": res.S,
                "s_prime": res.s_prime,
                "branch": res.branch,
                "diagnostics": list(res.diagnostics) + list(rule.diagnostics),
                "condition_a_exceedance": condition_a_exceedance(params, models, m, res.u),
                "pricing_rule": {
                    "elastic": rule.elastic,
                    "v_surplus": _finite(rule.v_surplus),
                    "v_deficit": _finite(rule.v_deficit),
                    "y_surplus": _finite(rule.y_surplus),
                    "y_deficit": _finite(rule.y_deficit),
                },
            }
            if args.verify:
                entry["verify"] = _verify_nonpersistent(cfg, params, models, m, res)
            slots.append(entry)
    report = {"command": "solve-nonpersistent", "slots": slots,
              "warnings": sorted({str(w.message) for w in caught})}
    _write_json(out / "nonpersistent.json", report)
    for e in slots:
        line = f"slot {e['m']}: u*={e['u_star']:.6g} S*={e['S_star']:.6g} ({e['branch']})"
        if "verify" in e:
            line += f" price-gap={e['verify']['max_price_gap']:.3g}"
        print(line)
    return EXIT_OK


# -- solve-persistent / simulate ------------------------------------------------


def _solve_persistent(cfg, out):
    params, models, grids = cfg.market_params(), cfg.models(), cfg.grids()
    est = estimate_work(params, models, grids)
    print(f"work estimate: {est['states']} states, {est['actions_per_state']} actions/state, "
          f"~{est['operations']:.3g} operations")
    table = solve_backward(params, models, grids, cfg.persistent.max_operations)
    policy_io.dump(table, out / "policy.json")
    return params, models, grids, table, est


def cmd_solve_persistent(args) -> int:
    cfg, out = _prepare(args, with_grids=True)
    params, models, grids, table, est = _solve_persistent(cfg, out)
    report = {
        "command": "solve-persistent",
        "work_estimate": est,
        "day_value": table.day_value,
        "values_first_slot": table.values[0].tolist(),
        "zeta_family": table.metadata["zeta_family"],
        "zeta_domain": table.metadata["zeta_domain"],
    }
    if args.verify:
        enum = nested_value_enumeration(params, models, grids)
        gap = float(np.max(np.abs(enum - table.values)))
        report["verify"] = {"enumeration_values": enum.tolist(), "max_gap": gap,
                            "within_1e-9": gap <= 1e-9}
        print(f"enumeration gap: {gap:.3g}")
    _write_json(out / "persistent.json", report)
    print(f"V(first slot, P_u=0..) = {np.array2string(table.values[0], precision=6)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, out = _prepare(args, with_grids=args.policy is None)
    models = cfg.models()
    if args.policy:
        table = policy_io.load(args.policy)
    else:
        table = _solve_persistent(cfg, out)[3]
    rng = np.random.default_rng(cfg.seed)
    res = simulate_policy(table, models, rng, cfg.simulate.days, cfg.simulate.sampling)
    counts = res.event_counts.astype(float)
    report = {
        "command": "simulate",
        "days": res.n_days,
        "sampling": cfg.simulate.sampling,
        "policy_day_value": table.day_value,
        "mean_profit": res.mean_profit,
        "var_profit": res.var_profit,
        "stderr": res.stderr,
        "mean_sales": float(res.daily_sales.mean()),
        "event_freq": (counts / counts.sum()).tolist(),
        "occupancy": res.occupancy.tolist(),
        "clamped": res.clamped,
    }
    _write_json(out / "simulation.json", report)
    print(f"mean daily profit {res.mean_profit:.6g} +- {res.stderr:.3g} "
          f"(policy value {table.day_value:.6g})")
    return EXIT_OK


# -- sweep -----------------------------------------------------------------------


def cmd_sweep(args) -> int:
    cfg, out = _prepare(args)
    spec = cfg.experiment_spec()
    base = cfg.base_model(with_grids=spec.mode == "persistent")
    modes = (spec.mode, "benchmark") if cfg.experiment.paired and spec.mode != "benchmark" \
        else (spec.mode,)
    rows = harness.sweep(base, spec, seed=cfg.seed, threads=args.threads, modes=modes)
    (out / "results.csv").write_text(harness.rows_to_csv(rows), encoding="utf-8")
    (out / "metadata.json").write_text(
        harness.metadata(config_mod.to_dict(cfg), spec, cfg.seed), encoding="utf-8")
    skipped = sum(r.status != "ok" for r in rows)
    print(f"{len(rows)} rows written to {out / 'results.csv'} ({skipped} skipped)")
    return EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtsched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "solve-nonpersistent": (cmd_solve_nonpersistent, "day-ahead u*, S* and real-time rule"),
        "solve-persistent": (cmd_solve_persistent, "backward induction for persistent users"),
        "simulate": (cmd_simulate, "forward-simulate a persistent-user policy"),
        "sweep": (cmd_sweep, "profit-margin experiment over a scenario grid"),
    }
    for name, (fn, help_) in commands.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", metavar="PATH", help="JSON config (defaults if omitted)")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--verify", action="store_true", help="run oracle cross-checks")
        p.add_argument("--dump-config", action="store_true",
                       help="print the resolved config and exit")
        if name == "simulate":
            p.add_argument("--policy", metavar="PATH", help="serialized policy to simulate")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
        if args.dump_config:
            cfg = config_mod.load(args.config) if args.config else config_mod.Config()
            if args.seed is not None:
                cfg.seed = args.seed
            sys.stdout.write(config_mod.dumps(cfg))
            return EXIT_OK
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - stable exit-code contract
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
