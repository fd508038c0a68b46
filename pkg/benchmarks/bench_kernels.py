"""Time the hot kernels under numba and under the pure-numpy fallback.

The backend is fixed at import time, so each backend runs in its own
subprocess (``COBRA_ILC_DISABLE_NUMBA=1`` for the fallback). Numba timings
exclude JIT compilation: every case is called once before timing.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from cobra_ilc import _accel, _kernels as K
from cobra_ilc import ilc as il, plant as pl
from cobra_ilc import config as cf
from cobra_ilc.flight import run_flight
from cobra_ilc.loopshape import derive_gains

repeat = int(sys.argv[1])
gains = derive_gains(0.24, 81.0)
cfg = pl.PlantConfig()
x0 = pl.initial_state(cfg, -1.43, -30.0, 15.0, 1.37).x
cmd = np.array([9.81, -1.43, 0.0])
par = cfg.params()
zero = np.zeros(3)

model = il.build_lifted(gains, 0.1, 140)
rng = np.random.default_rng(0)
F = model.f
h = F.T @ F + 1e-3 * np.eye(140)
f = F.T @ rng.normal(size=140)
upper = np.full(140, 0.5)
step = 1.0 / np.linalg.eigvalsh(h)[-1]
m = model

setup = cf.load(cf.preset_path("cobra80")).setup

cases = {
    "rk4_advance (1000 x 4 steps)": lambda: [K.rk4_advance(x0, cmd, par, zero, zero, 4, 1e-3) for _ in range(1000)],
    "lifted_matrix (n=400)": lambda: K.lifted_matrix(m.a_d, m.b_d, m.c_d, 400),
    "pgd_nesterov (n=140, 2000 it)": lambda: K.pgd_nesterov(h, f, upper, np.zeros(140), step, 2000, 0.0, 50),
    "run_flight (default preset)": lambda: run_flight(setup),
}
out = {"backend": _accel.backend_name(), "times": {}}
for name, fn in cases.items():
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out["times"][name] = best
print(json.dumps(out))
"""


def run(disable: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("COBRA_ILC_DISABLE_NUMBA", None)
    if disable:
        env["COBRA_ILC_DISABLE_NUMBA"] = "1"
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    t0 = time.perf_counter()
    jit = run(False, args.repeat)
    ref = run(True, args.repeat)
    print(f"{'kernel':34s} {jit['backend']:>10s} {ref['backend']:>10s} {'speedup':>8s}")
    for name, t_ref in ref["times"].items():
        t_jit = jit["times"][name]
        print(f"{name:34s} {t_jit * 1e3:8.2f}ms {t_ref * 1e3:8.2f}ms {t_ref / t_jit:7.1f}x")
    print(f"(best of {args.repeat}; total wall time {time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
