"""Compare the numba and pure-numpy kernel paths.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each backend runs in its own interpreter so ``MTSCHED_DISABLE_NUMBA`` takes
effect at import. Numba timings exclude the first (compiling) call. The
results of both backends are also compared for agreement.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from mtsched import kernels
from mtsched.models import MarketParams, Models, OpportunisticModel, TraditionalDemandModel, WindModel
from mtsched.persistent import PersistentGrids, solve_backward

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
n = 1_000_000
W, D_t, D_o = rng.uniform(0, 5, n), rng.uniform(0, 20, n), rng.uniform(0, 10, n)
pois = kernels.truncated_poisson_pmf(6.0, 20)
p_acc = np.linspace(0.1, 0.9, 8)
nodes = np.linspace(0.0, 4.0, 5)
params = MarketParams(c1=1.0, c2=2.0, c_p=0.5, u_cap=5.0, v_cap=6.0, M=2, K=4)
models = Models(WindModel([2.0, 3.0], 1.0), TraditionalDemandModel([8.0, 8.0], [-1.5, -1.5], 0.5),
                OpportunisticModel([4.0, 4.0], 1.0, -2.0, 1.0, 1.0))
grids = PersistentGrids((4.0, 8.0, 12.0), (1.5, 3.0), (1.0, 2.0, 4.0), P_max=6, N_max=12,
                        w_bins=2, d_bins=2, n_quad=5, family="coordinate")

cases = {
    "realized_profit (1e6 scenarios)":
        lambda: kernels.realized_profit(2.0, 3.0, 12.0, W, D_t, D_o, 1.0, 2.0, 0.5),
    "transition_tensor (8 prices, P_max=30)":
        lambda: kernels.transition_tensor(pois, p_acc, 30),
    "lower_reward_table (5x5 nodes, P_max=10)":
        lambda: kernels.lower_reward_table(nodes, nodes + 6, 8.0, 2.0, np.linspace(1, 5, 8),
                                           p_acc, pois, 10, 1.0, 1.0, 2.0, 0.5),
    "solve_backward (M=2, K=4, P_max=6)":
        lambda: solve_backward(params, models, grids),
}
out = {"backend": kernels.BACKEND, "timings": {}, "checks": {}}
for name, fn in cases.items():
    res = fn()  # warm-up; compiles under numba
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    out["timings"][name] = min(times)
    if hasattr(res, "values"):
        res = res.values
    elif isinstance(res, tuple):
        res = res[0]
    arr = np.asarray(res, float)
    out["checks"][name] = [float(arr.sum()), float(np.abs(arr).max())]
json.dump(out, sys.stdout)
"""


def run_backend(disable: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env["MTSCHED_DISABLE_NUMBA"] = "1" if disable else "0"
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                          capture_output=True, text=True)
    if proc.returncode:
        sys.exit(f"benchmark worker failed:\n{proc.stderr}")
    return json.loads(proc.stdout)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", metavar="PATH", help="also write the raw results here")
    args = ap.parse_args(argv)

    nb = run_backend(False, args.repeat)
    np_ = run_backend(True, args.repeat)
    if nb["backend"] != "numba":
        print("warning: numba unavailable, both runs used numpy", file=sys.stderr)
    width = max(map(len, nb["timings"]))
    print(f"{'kernel':<{width}}  {'numba [s]':>10}  {'numpy [s]':>10}  {'speedup':>8}  agree")
    for name in nb["timings"]:
        a, b = nb["timings"][name], np_["timings"][name]
        ca, cb = nb["checks"][name], np_["checks"][name]
        agree = all(abs(x - y) <= 1e-9 * max(1.0, abs(y)) for x, y in zip(ca, cb))
        print(f"{name:<{width}}  {a:10.4f}  {b:10.4f}  {b / a:8.1f}x  {'yes' if agree else 'NO'}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"numba": nb, "numpy": np_}, fh, indent=1, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
